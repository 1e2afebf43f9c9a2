#include "ctsim/slp.hpp"

#include <algorithm>

#include "ctsim/error.hpp"

namespace ctsim {

const char* to_string(FrameError e) {
  switch (e) {
    case FrameError::kNone: return "ok";
    case FrameError::kBadSof: return "BadSof";
    case FrameError::kBadLength: return "BadLength";
    case FrameError::kBadCrc: return "BadCrc";
  }
  return "?";
}

void LinkStats::count(FrameError e) {
  switch (e) {
    case FrameError::kNone: ++frames_ok; break;
    case FrameError::kBadSof: ++bad_sof; break;
    case FrameError::kBadLength: ++bad_length; break;
    case FrameError::kBadCrc: ++bad_crc; break;
  }
}

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) {
    crc ^= static_cast<std::uint16_t>(b) << 8;
    for (int i = 0; i < 8; ++i) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

std::vector<std::uint8_t> encode_frame(const SlpFrame& frame) {
  if (frame.payload.size() > kSlpMaxPayload) {
    throw Error(Errc::kInvalidArgument,
                "SLP payload exceeds 64 bytes: " + std::to_string(frame.payload.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kSlpOverhead + frame.payload.size());
  out.push_back(kSlpSof);
  out.push_back(frame.phase);
  out.push_back(frame.seq);
  out.push_back(static_cast<std::uint8_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  const auto crc = crc16_ccitt_false(std::span(out).subspan(1));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  return out;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes, LinkStats* stats) {
  auto fail = [stats](FrameError e) {
    if (stats) stats->count(e);
    return DecodeResult{std::nullopt, e};
  };
  if (bytes.empty() || bytes[0] != kSlpSof) return fail(FrameError::kBadSof);
  if (bytes.size() < kSlpOverhead) return fail(FrameError::kBadLength);
  const std::size_t len = bytes[3];
  if (len > kSlpMaxPayload || bytes.size() != kSlpOverhead + len) {
    return fail(FrameError::kBadLength);
  }
  const auto body = bytes.subspan(1, 3 + len);
  const std::uint16_t wire_crc =
      static_cast<std::uint16_t>(bytes[4 + len] << 8) | bytes[5 + len];
  if (crc16_ccitt_false(body) != wire_crc) return fail(FrameError::kBadCrc);

  SlpFrame f;
  f.phase = bytes[1];
  f.seq = bytes[2];
  f.payload.assign(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
  if (stats) stats->count(FrameError::kNone);
  return DecodeResult{std::move(f), FrameError::kNone};
}

SlpSchedule SlpSchedule::defaults(std::uint64_t gp_us, std::uint64_t handover_margin_us) {
  SlpSchedule s;
  s.t_phase12_offset_us = 0;
  s.t_phase3_offset_us = gp_us / 2;
  s.t_phase4_offset_us = gp_us > handover_margin_us ? gp_us - handover_margin_us : 0;
  return s;
}

void SlpSchedule::validate(std::uint64_t gp_us, std::uint64_t gd_us) const {
  const std::uint64_t t12 = gd_us + t_phase12_offset_us;
  if (!(t12 < t_phase3_offset_us && t_phase3_offset_us < t_phase4_offset_us &&
        t_phase4_offset_us < gp_us)) {
    throw Error(Errc::kInvalidArgument,
                "SLP schedule violates gd <= t12 < t3 < t4 < gp");
  }
  if (gp_us - t_phase4_offset_us < gd_us) {
    throw Error(Errc::kInvalidArgument,
                "SLP handover must start at least gd before the next round");
  }
}

namespace {

std::vector<std::uint8_t> u32_le(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
}

std::uint32_t read_u32_le(std::span<const std::uint8_t> b) {
  if (b.size() < 4) return 0;
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

SlpLink::SlpLink(Kernel& kernel, GlossyNetwork& network, std::uint32_t node,
                 NodeClock ccu_clock, CcuEndpoint& ccu, SlpSchedule schedule,
                 SerialParams params, RngStreams& rng)
    : kernel_(kernel),
      network_(network),
      node_(node),
      ccu_clock_(ccu_clock),
      ccu_(ccu),
      schedule_(schedule),
      params_(params),
      rng_(rng) {
  schedule_.validate(network_.config().gp_us, network_.config().gd_us);
}

VirtualTime SlpLink::nu_global(std::int64_t nu_local) const {
  return std::max(kernel_.now(), network_.clock(node_).global_time(nu_local));
}

void SlpLink::on_round_end(const RoundResult& round) {
  round_ = round.round_seq;
  round_payload_ = round.payload;
  round_alive_ = false;

  const auto gd = static_cast<std::int64_t>(network_.config().gd_us);
  const auto base = round.round_start_local;
  const auto t12 = std::max(round.radio_off_local,
                            base + gd + static_cast<std::int64_t>(schedule_.t_phase12_offset_us));
  const auto t3 = base + static_cast<std::int64_t>(schedule_.t_phase3_offset_us);
  const auto t4 = base + static_cast<std::int64_t>(schedule_.t_phase4_offset_us);
  const auto r = round.round_seq;
  kernel_.schedule_at(nu_global(t12), EventKind::kSlpPhase, node_,
                      [this, r](const Event&) { phase_1(r); });
  kernel_.schedule_at(nu_global(t3), EventKind::kSlpPhase, node_,
                      [this, r](const Event&) { phase_3(r); });
  kernel_.schedule_at(nu_global(t4), EventKind::kSlpPhase, node_,
                      [this, r](const Event&) { phase_4(r); });
}

bool SlpLink::ccu_awake(std::uint32_t round) {
  if (awake_checked_round_ != round) {
    awake_checked_round_ = round;
    awake_ = !rng_.stream("ccu-sleep", node_).bernoulli(params_.ccu_fail_prob);
  }
  return awake_;
}

void SlpLink::send(Direction dir, SlpPhase phase, std::vector<std::uint8_t> payload,
                   std::uint32_t round) {
  SlpFrame frame;
  frame.phase = static_cast<std::uint8_t>(phase);
  frame.seq = dir == Direction::kToCcu ? nu_seq_++ : ccu_seq_++;
  frame.payload = std::move(payload);
  auto bytes = encode_frame(frame);
  ++stats_.frames_sent;

  if (params_.bit_error_rate > 0.0) {
    auto& ber = rng_.stream("serial-ber", node_);
    for (auto& b : bytes) {
      for (int bit = 0; bit < 8; ++bit) {
        if (ber.bernoulli(params_.bit_error_rate)) b ^= static_cast<std::uint8_t>(1u << bit);
      }
    }
  }

  const std::uint64_t wire = bytes.size() * params_.byte_time_us;
  const auto jitter = static_cast<std::uint64_t>(
      rng_.stream("serial-jitter", node_).uniform(0.0, static_cast<double>(params_.jitter_us)));
  const VirtualTime on_wire_end = kernel_.now() + (wire + jitter);
  wire_trace_.push_back({kernel_.now(), on_wire_end});

  if (dir == Direction::kToCcu) {
    const auto poll = static_cast<std::uint64_t>(
        rng_.stream("ccu-poll", node_).uniform(0.0, static_cast<double>(params_.ccu_poll_us)));
    kernel_.schedule_at(on_wire_end + poll, EventKind::kSerial, node_,
                        [this, bytes = std::move(bytes), round](const Event&) mutable {
                          ccu_receive(std::move(bytes), round);
                        });
  } else {
    kernel_.schedule_at(on_wire_end, EventKind::kSerial, node_,
                        [this, bytes = std::move(bytes), round](const Event&) mutable {
                          nu_receive(std::move(bytes), round);
                        });
  }
}

void SlpLink::await_reply(SlpPhase phase, std::uint32_t round) {
  awaiting_ = phase;
  reply_timeout_ = kernel_.schedule_at(
      kernel_.now() + params_.reply_timeout_us, EventKind::kSerial, node_,
      [this, round](const Event&) {
        reply_timeout_.reset();
        if (!awaiting_ || round != round_) return;
        ++stats_.timeouts;
        if (*awaiting_ == SlpPhase::kHello) ++stats_.rounds_skipped;
        awaiting_.reset();
      });
}

void SlpLink::phase_1(std::uint32_t round) {
  if (round != round_) return;
  phase_trace_.push_back({round, 1, kernel_.now()});
  await_reply(SlpPhase::kHello, round);
  send(Direction::kToCcu, SlpPhase::kHello, u32_le(round), round);
}

void SlpLink::phase_2(std::uint32_t round) {
  phase_trace_.push_back({round, 2, kernel_.now()});
  ++stats_.phases_completed[1];
  send(Direction::kToCcu, SlpPhase::kDataDown, round_payload_, round);
}

void SlpLink::phase_3(std::uint32_t round) {
  if (round != round_ || !round_alive_) return;
  phase_trace_.push_back({round, 3, kernel_.now()});
  ++stats_.phases_completed[2];
  send(Direction::kToCcu, SlpPhase::kLogSync, u32_le(round), round);
}

void SlpLink::phase_4(std::uint32_t round) {
  if (round != round_ || !round_alive_) return;
  phase_trace_.push_back({round, 4, kernel_.now()});
  await_reply(SlpPhase::kHandover, round);
  send(Direction::kToCcu, SlpPhase::kHandover, {}, round);
}

void SlpLink::ccu_receive(std::vector<std::uint8_t> bytes, std::uint32_t round) {
  auto decoded = decode_frame(bytes, &stats_);
  if (!decoded.ok() || !ccu_awake(round)) return;
  const auto& f = *decoded.frame;
  switch (static_cast<SlpPhase>(f.phase)) {
    case SlpPhase::kHello:
      ccu_.on_hi(read_u32_le(f.payload), ccu_clock_.local_time(kernel_.now()));
      send(Direction::kToNu, SlpPhase::kHello, {}, round);
      break;
    case SlpPhase::kDataDown:
      ccu_.on_data(round, f.payload);
      break;
    case SlpPhase::kLogSync:
      ccu_.on_log_sync(read_u32_le(f.payload));
      break;
    case SlpPhase::kHandover: {
      auto out = ccu_.on_handover(round);
      send(Direction::kToNu, SlpPhase::kHandover, std::move(out), round);
      break;
    }
    default:
      break;
  }
}

void SlpLink::nu_receive(std::vector<std::uint8_t> bytes, std::uint32_t round) {
  auto decoded = decode_frame(bytes, &stats_);
  if (!decoded.ok() || round != round_ || !awaiting_) return;
  const auto& f = *decoded.frame;
  if (f.phase != static_cast<std::uint8_t>(*awaiting_)) return;
  awaiting_.reset();
  if (reply_timeout_) {
    kernel_.cancel(*reply_timeout_);
    reply_timeout_.reset();
  }
  if (static_cast<SlpPhase>(f.phase) == SlpPhase::kHello) {
    round_alive_ = true;
    ++stats_.phases_completed[0];
    phase_2(round);
  } else if (static_cast<SlpPhase>(f.phase) == SlpPhase::kHandover) {
    ++stats_.phases_completed[3];
    network_.stage_payload(node_, f.payload);
  }
}

}  // namespace ctsim
