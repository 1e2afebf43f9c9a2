#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ctsim/glossy.hpp"
#include "ctsim/kernel.hpp"

namespace ctsim {

// ---------------------------------------------------------------------------
// Wire format
//
//   +------+-------+-----+-----+-----------------+---------+
//   | 0x7E | phase | seq | len | payload (len B) | crc16   |
//   +------+-------+-----+-----+-----------------+---------+
//
// crc16 is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
// xorout 0) over phase..payload, transmitted high byte first.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kSlpSof = 0x7E;
inline constexpr std::size_t kSlpMaxPayload = 64;
inline constexpr std::size_t kSlpOverhead = 6;

enum class SlpPhase : std::uint8_t {
  kHello = 1,     // Hi / Hello availability check
  kDataDown = 2,  // NU -> CCU flood payload
  kLogSync = 3,   // mid-period synchronized logging
  kHandover = 4,  // CCU -> NU payload for the next round
};

struct SlpFrame {
  std::uint8_t phase = 1;
  std::uint8_t seq = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const SlpFrame&) const = default;
};

enum class FrameError { kNone, kBadSof, kBadLength, kBadCrc };

const char* to_string(FrameError e);

struct LinkStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_ok = 0;
  std::uint64_t bad_sof = 0;
  std::uint64_t bad_length = 0;
  std::uint64_t bad_crc = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t rounds_skipped = 0;
  std::array<std::uint64_t, 4> phases_completed{};

  void count(FrameError e);
};

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes);

/// Throws Error(kInvalidArgument) when the payload exceeds 64 bytes.
std::vector<std::uint8_t> encode_frame(const SlpFrame& frame);

struct DecodeResult {
  std::optional<SlpFrame> frame;
  FrameError error = FrameError::kNone;

  bool ok() const { return frame.has_value(); }
};

/// Validates SOF, length and CRC in that order. Each failure is tallied in
/// `stats` when given.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes,
                          LinkStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Per-period schedule
// ---------------------------------------------------------------------------

struct SlpSchedule {
  std::uint64_t t_phase12_offset_us = 0;  // after GD expiry
  std::uint64_t t_phase3_offset_us = 0;   // into the period
  std::uint64_t t_phase4_offset_us = 0;   // into the period

  static SlpSchedule defaults(std::uint64_t gp_us, std::uint64_t handover_margin_us = 50'000);
  /// Enforces gd <= t12 < t3 < t4 < gp and that the handover starts at least
  /// gd before the next round.
  void validate(std::uint64_t gp_us, std::uint64_t gd_us) const;
};

struct SerialParams {
  std::uint64_t byte_time_us = 87;  // 115200 baud, 10 bits per byte
  std::uint64_t jitter_us = 2'000;  // uniform [0, jitter] per frame
  /// CCU-side polling period; a frame waits uniform [0, poll) before the CCU
  /// loop picks it up. Neither side uses interrupts.
  std::uint64_t ccu_poll_us = 10'000;
  std::uint64_t reply_timeout_us = 25'000;
  /// Probability that a CCU is asleep for a whole period.
  double ccu_fail_prob = 0.0;
  /// Independent bit-flip probability on the serial wire.
  double bit_error_rate = 0.0;
};

/// Application side of the link, implemented by the CCU.
class CcuEndpoint {
 public:
  virtual ~CcuEndpoint() = default;
  /// Phase 1: the CCU read a Hi frame at `ccu_local_us` on its own clock.
  virtual void on_hi(std::uint32_t round_seq, std::int64_t ccu_local_us) = 0;
  /// Phase 2: flood payload of the round (empty when nothing arrived).
  virtual void on_data(std::uint32_t round_seq, std::span<const std::uint8_t> payload) = 0;
  /// Phase 3: take the synchronized log snapshot.
  virtual void on_log_sync(std::uint32_t round_seq) = 0;
  /// Phase 4: produce the payload to flood next round.
  virtual std::vector<std::uint8_t> on_handover(std::uint32_t round_seq) = 0;
};

struct PhaseMark {
  std::uint32_t round_seq = 0;
  std::uint8_t phase = 0;
  VirtualTime at{};  // global time the NU started the phase
};

/// Serial activity on the wire, global µs, for overlap checks.
struct WireSpan {
  VirtualTime start{};
  VirtualTime end{};
};

/// One NU <-> CCU serial link. The NU end initiates every exchange; the CCU
/// end only answers. Both ends exchange encoded frames exclusively.
class SlpLink {
 public:
  SlpLink(Kernel& kernel, GlossyNetwork& network, std::uint32_t node,
          NodeClock ccu_clock, CcuEndpoint& ccu, SlpSchedule schedule,
          SerialParams params, RngStreams& rng);

  /// Hooked to the Glossy round-end notification for this node.
  void on_round_end(const RoundResult& round);

  const LinkStats& stats() const { return stats_; }
  const std::vector<PhaseMark>& phase_trace() const { return phase_trace_; }
  const std::vector<WireSpan>& wire_trace() const { return wire_trace_; }
  const NodeClock& ccu_clock() const { return ccu_clock_; }

 private:
  enum class Direction { kToCcu, kToNu };

  void phase_1(std::uint32_t round);
  void phase_2(std::uint32_t round);
  void phase_3(std::uint32_t round);
  void phase_4(std::uint32_t round);

  /// Encodes, corrupts per BER, and delivers to the other end after the
  /// latency model. Returns the arrival time.
  void send(Direction dir, SlpPhase phase, std::vector<std::uint8_t> payload,
            std::uint32_t round);
  void ccu_receive(std::vector<std::uint8_t> bytes, std::uint32_t round);
  void nu_receive(std::vector<std::uint8_t> bytes, std::uint32_t round);
  void await_reply(SlpPhase phase, std::uint32_t round);
  bool ccu_awake(std::uint32_t round);
  VirtualTime nu_global(std::int64_t nu_local) const;

  Kernel& kernel_;
  GlossyNetwork& network_;
  std::uint32_t node_;
  NodeClock ccu_clock_;
  CcuEndpoint& ccu_;
  SlpSchedule schedule_;
  SerialParams params_;
  RngStreams& rng_;

  std::uint8_t nu_seq_ = 0;
  std::uint8_t ccu_seq_ = 0;
  LinkStats stats_;
  std::vector<PhaseMark> phase_trace_;
  std::vector<WireSpan> wire_trace_;

  // NU-side state of the current period.
  std::uint32_t round_ = 0;
  std::vector<std::uint8_t> round_payload_;
  bool round_alive_ = false;
  std::optional<EventId> reply_timeout_;
  std::optional<SlpPhase> awaiting_;
  std::uint32_t asleep_round_ = 0xFFFFFFFF;
  std::uint32_t awake_checked_round_ = 0xFFFFFFFF;
  bool awake_ = true;
};

}  // namespace ctsim
