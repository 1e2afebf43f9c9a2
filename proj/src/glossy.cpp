#include "ctsim/glossy.hpp"

#include <algorithm>
#include <cmath>

#include "ctsim/error.hpp"

namespace ctsim {

void GlossyConfig::validate() const {
  if (gd_us == 0 || gd_us >= gp_us) {
    throw Error(Errc::kInvalidArgument, "gd < gp violated (need 0 < gd < gp)");
  }
  if (n_tx < 1) throw Error(Errc::kInvalidArgument, "n_tx must be >= 1");
  if (guard_us >= gd_us) {
    throw Error(Errc::kInvalidArgument, "guard must be shorter than gd");
  }
}

std::uint64_t GlossyConfig::slot_len_for(std::size_t packet_len) const {
  if (slot_len_us != 0) return slot_len_us;
  return airtime(packet_len) + turnaround_us;
}

std::vector<std::uint8_t> FloodPacket::encode() const {
  std::vector<std::uint8_t> out;
  out.reserve(kFloodHeaderBytes + payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(round_seq >> (8 * i)));
  out.push_back(relay_count);
  out.push_back(static_cast<std::uint8_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::optional<FloodPacket> FloodPacket::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFloodHeaderBytes) return std::nullopt;
  FloodPacket p;
  for (int i = 0; i < 4; ++i) p.round_seq |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  p.relay_count = bytes[4];
  const std::size_t len = bytes[5];
  if (bytes.size() != kFloodHeaderBytes + len) return std::nullopt;
  p.payload.assign(bytes.begin() + kFloodHeaderBytes, bytes.end());
  return p;
}

std::int64_t estimate_reference_time(std::int64_t rx_local_time,
                                     std::uint32_t relay_count,
                                     std::uint64_t slot_len_us,
                                     std::uint64_t airtime_us) {
  return rx_local_time - static_cast<std::int64_t>(relay_count) *
                             static_cast<std::int64_t>(slot_len_us) -
         static_cast<std::int64_t>(airtime_us);
}

double duty_cycle(const GlossyNodeState& node, std::uint64_t window_us,
                  std::uint64_t gp_us) {
  if (window_us < gp_us || window_us == 0) {
    throw Error(Errc::kInvalidArgument, "window shorter than one round");
  }
  return static_cast<double>(node.radio_on_us_accum) / static_cast<double>(window_us);
}

bool RoundLog::all_received() const {
  return std::all_of(first_rx_ns.begin(), first_rx_ns.end(),
                     [](std::int64_t t) { return t >= 0; });
}

std::optional<double> RoundLog::completion_us() const {
  if (!all_received()) return std::nullopt;
  const auto last = *std::max_element(first_rx_ns.begin(), first_rx_ns.end());
  return static_cast<double>(last) / 1000.0;
}

GlossyNetwork::GlossyNetwork(Kernel& kernel, Topology& topology,
                             std::vector<NodeClock> clocks, GlossyConfig config,
                             RadioParams radio, std::uint32_t initiator,
                             RngStreams& rng)
    : kernel_(kernel),
      topology_(topology),
      clocks_(std::move(clocks)),
      config_(config),
      radio_(radio),
      initiator_(initiator),
      rng_(rng) {
  config_.validate();
  if (clocks_.size() != topology_.size()) {
    throw Error(Errc::kInvalidArgument, "one clock per topology node required");
  }
  if (initiator_ >= clocks_.size()) {
    throw Error(Errc::kInvalidArgument, "initiator out of range");
  }
  nodes_.resize(clocks_.size());
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].node = i;
    nodes_[i].role = i == initiator_ ? GlossyRole::kInitiator : GlossyRole::kReceiver;
  }
}

void GlossyNetwork::start(VirtualTime first_round) {
  // Nodes are assumed to be bootstrapped onto the initiator's schedule at
  // deployment; from then on only flood receptions keep them aligned.
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    n.predicted_round_start = clocks_[i].local_time(first_round);
    n.t_ref_estimate = n.predicted_round_start;
    n.ever_synced = true;
    schedule_window(i);
  }
  const auto& init = nodes_[initiator_];
  kernel_.schedule_at(clocks_[initiator_].global_time(init.predicted_round_start),
                      EventKind::kRoundStart, initiator_,
                      [this](const Event&) { start_round(); });
}

void GlossyNetwork::stage_payload(std::uint32_t node,
                                  std::vector<std::uint8_t> payload) {
  nodes_.at(node).staged_payload = std::move(payload);
}

void GlossyNetwork::schedule_window(std::uint32_t id) {
  auto& n = nodes_[id];
  const auto& clock = clocks_[id];
  const std::int64_t on_local =
      n.predicted_round_start - static_cast<std::int64_t>(config_.guard_us);
  const std::int64_t off_local = on_local + static_cast<std::int64_t>(config_.gd_us);
  n.window_open = std::max(kernel_.now(), clock.global_time(on_local));
  n.window_close = clock.global_time(off_local);
  n.radio_on_local = on_local;
  kernel_.schedule_at(n.window_open, EventKind::kRadioOn, id,
                      [this, id](const Event&) { radio_on(id); });
  kernel_.schedule_at(n.window_close, EventKind::kRadioOff, id,
                      [this, id](const Event&) { radio_off_at_gd_expiry(id); });
}

void GlossyNetwork::radio_on(std::uint32_t id) {
  auto& n = nodes_[id];
  n.phase = RadioPhase::kListening;
  n.tx_done_count = 0;
  n.received_this_round = false;
  n.round_payload.clear();
  n.pending_tx_slot.reset();
}

bool GlossyNetwork::window_covers(const GlossyNodeState& n, VirtualTime from,
                                  VirtualTime to) const {
  return n.phase != RadioPhase::kRadioOff && n.window_open <= from && to <= n.window_close;
}

void GlossyNetwork::start_round() {
  auto& init = nodes_[initiator_];
  round_seq_ = init.round_seq;
  round_start_ = kernel_.now();

  round_packet_ = FloodPacket{};
  round_packet_.round_seq = round_seq_;
  if (init.staged_payload) {
    round_packet_.payload = std::move(*init.staged_payload);
    init.staged_payload.reset();
  }
  const auto encoded_len = kFloodHeaderBytes + round_packet_.payload.size();
  round_airtime_ = airtime(encoded_len);
  round_slot_len_ = config_.slot_len_for(encoded_len);

  RoundLog log;
  log.round_seq = round_seq_;
  log.start = round_start_;
  log.slot_len_us = round_slot_len_;
  log.keep_alive = round_packet_.payload.empty();
  log.payload = round_packet_.payload;
  log.first_rx_ns.assign(nodes_.size(), -1);
  log.first_rx_ns[initiator_] = 0;
  log.tx_count.assign(nodes_.size(), 0);
  log.pre_sync_error_us.assign(nodes_.size(), 0.0);
  log.post_sync_error_us.assign(nodes_.size(), std::nan(""));
  const auto t0 = static_cast<long double>(round_start_.ticks);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    log.pre_sync_error_us[i] = static_cast<double>(
        clocks_[i].to_global_exact(static_cast<long double>(nodes_[i].predicted_round_start)) - t0);
  }
  log.post_sync_error_us[initiator_] = 0.0;
  rounds_.push_back(std::move(log));

  init.pending_tx_slot = 0;
  initiator_last_tx_slot_.reset();
  run_slot(0);
}

void GlossyNetwork::run_slot(std::uint32_t slot) {
  const VirtualTime slot_start = round_start_ + slot * round_slot_len_;
  const VirtualTime slot_end = slot_start + round_airtime_;
  if (refresh_) refresh_(slot_start);
  auto& log = rounds_.back();
  ++log.slots;

  std::vector<Transmission> txs;
  std::vector<bool> transmitting(nodes_.size(), false);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (!n.pending_tx_slot || *n.pending_tx_slot != slot) continue;
    n.pending_tx_slot.reset();
    if (!window_covers(n, slot_start, slot_end) || n.tx_done_count >= config_.n_tx) continue;

    FloodPacket pkt = round_packet_;
    pkt.relay_count = static_cast<std::uint8_t>(slot);
    Transmission tx;
    tx.sender = i;
    tx.packet = pkt.encode();
    const double jitter = rng_.stream("tx-jitter", i).uniform(0.0, radio_.tx_jitter_ns);
    tx.start_ns = static_cast<std::int64_t>(slot_start.ticks) * 1000 +
                  static_cast<std::int64_t>(std::llround(jitter));
    tx.airtime_us = round_airtime_;
    tx.power_dbm = radio_.tx_power_dbm;
    txs.push_back(std::move(tx));

    transmitting[i] = true;
    ++n.tx_done_count;
    ++n.tx_total;
    ++log.tx_count[i];
    n.max_tx_in_round = std::max(n.max_tx_in_round, n.tx_done_count);
  }

  if (!txs.empty()) {
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      if (transmitting[i] || n.phase != RadioPhase::kListening) continue;
      if (!window_covers(n, slot_start, slot_end)) continue;
      auto outcome = resolve_reception(topology_, i, txs, radio_, rng_.stream("phy-loss", i));
      if (outcome.kind == ReceptionOutcome::Kind::kCollision) ++log.collisions;
      if (!outcome.received()) continue;
      if (outcome.via == ReceptionOutcome::Via::kConstructive) ++log.ci_receptions;
      if (outcome.via == ReceptionOutcome::Via::kCapture) ++log.capture_receptions;
      auto pkt = FloodPacket::decode(outcome.packet);
      if (!pkt) continue;
      const auto rx_end_us = static_cast<std::uint64_t>((outcome.rx_end_ns + 999) / 1000);
      on_rx(i, *pkt, clocks_[i].local_time(VirtualTime{rx_end_us}), slot);
      if (log.first_rx_ns[i] < 0) {
        log.first_rx_ns[i] = outcome.rx_end_ns - static_cast<std::int64_t>(round_start_.ticks) * 1000;
      }
    }
  }

  // An initiator that hears nothing right after its own transmission
  // retransmits in the following slot.
  auto& init = nodes_[initiator_];
  if (!transmitting[initiator_] && initiator_last_tx_slot_ &&
      *initiator_last_tx_slot_ + 1 == slot && !init.pending_tx_slot &&
      init.phase != RadioPhase::kRadioOff && init.tx_done_count < config_.n_tx) {
    init.pending_tx_slot = slot + 1;
  }
  if (transmitting[initiator_]) initiator_last_tx_slot_ = slot;

  if (config_.early_off) {
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      if (!transmitting[i] || n.tx_done_count < config_.n_tx) continue;
      const auto off_local = clocks_[i].local_time(slot_end);
      n.radio_on_us_accum += static_cast<std::uint64_t>(
          std::max<std::int64_t>(0, off_local - n.radio_on_local));
      n.phase = RadioPhase::kRadioOff;
    }
  }

  const bool more =
      (transmitting[initiator_] && init.tx_done_count < config_.n_tx) ||
      std::any_of(nodes_.begin(), nodes_.end(), [&](const GlossyNodeState& n) {
        return n.pending_tx_slot && *n.pending_tx_slot == slot + 1;
      });
  if (more) {
    kernel_.schedule_at(slot_start + round_slot_len_, EventKind::kSlot, initiator_,
                        [this, slot](const Event&) { run_slot(slot + 1); });
  }
}

void GlossyNetwork::on_rx(std::uint32_t id, const FloodPacket& packet,
                          std::int64_t rx_local, std::uint32_t slot) {
  auto& n = nodes_[id];
  if (n.tx_done_count >= config_.n_tx) return;

  if (n.role == GlossyRole::kReceiver && !n.received_this_round) {
    const auto encoded_len = kFloodHeaderBytes + packet.payload.size();
    n.t_ref_estimate = estimate_reference_time(rx_local, packet.relay_count,
                                               config_.slot_len_for(encoded_len),
                                               airtime(encoded_len));
    n.received_this_round = true;
    n.ever_synced = true;
    n.round_seq = packet.round_seq;
    n.round_payload = packet.payload;
    if (!packet.payload.empty()) n.last_payload = packet.payload;
    n.last_rx_relay_count = packet.relay_count;
    ++n.rounds_received;
    rounds_.back().post_sync_error_us[id] = static_cast<double>(
        clocks_[id].to_global_exact(static_cast<long double>(n.t_ref_estimate)) -
        static_cast<long double>(round_start_.ticks));
  }
  if (!n.pending_tx_slot) n.pending_tx_slot = slot + 1;
}

void GlossyNetwork::radio_off_at_gd_expiry(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.phase != RadioPhase::kRadioOff) {
    n.radio_on_us_accum += config_.gd_us;
    n.phase = RadioPhase::kRadioOff;
  }
  n.pending_tx_slot.reset();
  ++n.rounds_completed;

  RoundResult result;
  result.node = id;
  result.round_seq = n.round_seq;
  result.radio_off_local = n.radio_on_local + static_cast<std::int64_t>(config_.gd_us);
  if (n.role == GlossyRole::kInitiator) {
    result.received = true;
    result.round_start_local = n.predicted_round_start;
    result.payload = round_packet_.payload;
  } else {
    result.received = n.received_this_round;
    // Missed rounds extrapolate from the previous estimate.
    result.round_start_local =
        n.received_this_round ? n.t_ref_estimate : n.predicted_round_start;
    if (n.received_this_round) result.payload = n.round_payload;
  }

  n.predicted_round_start = result.round_start_local + static_cast<std::int64_t>(config_.gp_us);
  n.round_seq = result.round_seq + 1;
  schedule_window(id);
  if (id == initiator_) {
    kernel_.schedule_at(clocks_[id].global_time(n.predicted_round_start),
                        EventKind::kRoundStart, id,
                        [this](const Event&) { start_round(); });
  }

  if (round_end_) round_end_(result);
}

}  // namespace ctsim
