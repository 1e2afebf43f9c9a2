#include "ctsim/radio.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "ctsim/error.hpp"

namespace ctsim {

double distance_m(Position a, Position b) {
  return std::hypot(a.x_m - b.x_m, a.y_m - b.y_m);
}

Topology::Topology(std::vector<Position> positions, double comm_range_m)
    : positions_(std::move(positions)), comm_range_m_(comm_range_m) {
  if (!(comm_range_m_ > 0.0)) {
    throw Error(Errc::kInvalidArgument, "comm_range_m must be positive");
  }
}

Topology Topology::line5() {
  // 0-1-2-3 along x, node 4 bridges 1 and 2 from the side.
  return Topology({{0, 0}, {24, 0}, {48, 0}, {72, 0}, {36, 20}}, 30.0);
}

Topology Topology::pair() { return Topology({{0, 0}, {10, 0}}, 30.0); }

bool Topology::in_range(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return false;
  return distance_m(positions_.at(a), positions_.at(b)) <= comm_range_m_;
}

std::vector<std::uint32_t> Topology::neighbors(std::uint32_t node) const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t j = 0; j < positions_.size(); ++j) {
    if (in_range(node, j)) out.push_back(j);
  }
  return out;
}

std::vector<int> Topology::hop_distances(std::uint32_t source) const {
  std::vector<int> dist(positions_.size(), -1);
  std::deque<std::uint32_t> frontier{source};
  dist.at(source) = 0;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop_front();
    for (auto v : neighbors(u)) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

bool Topology::connected() const { return diameter().has_value(); }

std::optional<int> Topology::diameter() const {
  if (positions_.empty()) return std::nullopt;
  int best = 0;
  for (std::uint32_t s = 0; s < positions_.size(); ++s) {
    for (int d : hop_distances(s)) {
      if (d < 0) return std::nullopt;
      best = std::max(best, d);
    }
  }
  return best;
}

std::uint64_t airtime(std::size_t packet_len_bytes) {
  if (packet_len_bytes < 1 || packet_len_bytes > kMaxPsduBytes) {
    throw Error(Errc::kOutOfRange,
                "packet length out of range: " + std::to_string(packet_len_bytes));
  }
  return (kPhyOverheadBytes + packet_len_bytes) * kUsPerByte;
}

double received_power(Position sender, Position receiver, double tx_power_dbm,
                      const RadioParams& params) {
  const double d = distance_m(sender, receiver);
  if (!(d > 0.0)) {
    throw Error(Errc::kInvalidArgument, "zero distance between sender and receiver");
  }
  return tx_power_dbm - params.pl0_db -
         10.0 * params.path_loss_exp * std::log10(d / params.d0_m);
}

const char* to_string(ReceptionOutcome::Kind kind) {
  switch (kind) {
    case ReceptionOutcome::Kind::kIdle: return "idle";
    case ReceptionOutcome::Kind::kReceived: return "received";
    case ReceptionOutcome::Kind::kCollision: return "collision";
    case ReceptionOutcome::Kind::kMissed: return "missed";
  }
  return "?";
}

namespace {

ReceptionOutcome received_from(const Transmission& tx,
                               ReceptionOutcome::Via via) {
  ReceptionOutcome out;
  out.kind = ReceptionOutcome::Kind::kReceived;
  out.via = via;
  out.packet = tx.packet;
  out.from = tx.sender;
  out.rx_end_ns = tx.start_ns + static_cast<std::int64_t>(tx.airtime_us) * 1000;
  return out;
}

ReceptionOutcome missed() {
  ReceptionOutcome out;
  out.kind = ReceptionOutcome::Kind::kMissed;
  return out;
}

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

}  // namespace

ReceptionOutcome resolve_reception(std::span<const Arrival> arrivals,
                                   const RadioParams& params, RngStream& rng) {
  std::vector<const Arrival*> heard;
  for (const auto& a : arrivals) {
    if (a.in_range && a.tx != nullptr) heard.push_back(&a);
  }

  if (heard.empty()) return {};

  if (heard.size() == 1) {
    if (rng.bernoulli(params.p_loss)) return missed();
    return received_from(*heard.front()->tx, ReceptionOutcome::Via::kSingle);
  }

  std::int64_t earliest = std::numeric_limits<std::int64_t>::max();
  std::int64_t latest = std::numeric_limits<std::int64_t>::min();
  bool identical = true;
  for (const auto* a : heard) {
    earliest = std::min(earliest, a->tx->start_ns);
    latest = std::max(latest, a->tx->start_ns);
    identical = identical && a->tx->packet == heard.front()->tx->packet;
  }

  const double skew_us = static_cast<double>(latest - earliest) / 1000.0;
  if (params.ci_enabled && identical && skew_us <= params.ci_window_us) {
    if (rng.bernoulli(params.p_loss_ci)) return missed();
    const auto* first = *std::min_element(
        heard.begin(), heard.end(),
        [](const Arrival* a, const Arrival* b) { return a->tx->start_ns < b->tx->start_ns; });
    return received_from(*first->tx, ReceptionOutcome::Via::kConstructive);
  }

  if (params.capture_enabled) {
    const auto* strongest = *std::max_element(
        heard.begin(), heard.end(),
        [](const Arrival* a, const Arrival* b) { return a->rx_power_dbm < b->rx_power_dbm; });
    double others_mw = 0.0;
    for (const auto* a : heard) {
      if (a != strongest) others_mw += dbm_to_mw(a->rx_power_dbm);
    }
    const double margin_db = strongest->rx_power_dbm - 10.0 * std::log10(others_mw);
    const double lag_us =
        static_cast<double>(strongest->tx->start_ns - earliest) / 1000.0;
    if (margin_db >= params.capture_margin_db && lag_us <= params.capture_window_us) {
      return received_from(*strongest->tx, ReceptionOutcome::Via::kCapture);
    }
  }

  ReceptionOutcome out;
  out.kind = ReceptionOutcome::Kind::kCollision;
  return out;
}

ReceptionOutcome resolve_reception(const Topology& topology,
                                   std::uint32_t receiver,
                                   std::span<const Transmission> overlapping,
                                   const RadioParams& params, RngStream& rng) {
  std::vector<Arrival> arrivals;
  arrivals.reserve(overlapping.size());
  for (const auto& tx : overlapping) {
    if (tx.sender == receiver) continue;
    Arrival a;
    a.tx = &tx;
    a.in_range = topology.in_range(tx.sender, receiver);
    if (a.in_range) {
      a.rx_power_dbm = received_power(topology.position(tx.sender),
                                      topology.position(receiver), tx.power_dbm, params);
    }
    arrivals.push_back(a);
  }
  return resolve_reception(arrivals, params, rng);
}

}  // namespace ctsim
