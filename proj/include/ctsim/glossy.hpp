#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ctsim/kernel.hpp"
#include "ctsim/radio.hpp"

namespace ctsim {

struct GlossyConfig {
  std::uint64_t gp_us = 600'000;  // round period
  std::uint64_t gd_us = 20'000;   // radio-on window per round
  std::uint32_t n_tx = 3;
  std::uint64_t turnaround_us = 192;
  /// Fixed slot length; 0 derives airtime(packet) + turnaround per round.
  std::uint64_t slot_len_us = 0;
  /// Receivers wake this long before their predicted round start.
  std::uint64_t guard_us = 1'000;
  bool early_off = false;

  /// Throws Error(kInvalidArgument) when 0 < gd < gp or n_tx >= 1 fails.
  void validate() const;
  std::uint64_t slot_len_for(std::size_t packet_len) const;
};

/// On-air format: round_seq (u32 LE), relay_count (u8), payload length (u8),
/// payload bytes.
struct FloodPacket {
  std::uint32_t round_seq = 0;
  std::uint8_t relay_count = 0;
  std::vector<std::uint8_t> payload;

  std::vector<std::uint8_t> encode() const;
  static std::optional<FloodPacket> decode(std::span<const std::uint8_t> bytes);
  bool operator==(const FloodPacket&) const = default;
};

inline constexpr std::size_t kFloodHeaderBytes = 6;

/// Reference (round start) time in the receiver's local clock, back-computed
/// from the end of a reception and the hop counter it carried.
std::int64_t estimate_reference_time(std::int64_t rx_local_time,
                                     std::uint32_t relay_count,
                                     std::uint64_t slot_len_us,
                                     std::uint64_t airtime_us);

enum class GlossyRole { kInitiator, kReceiver };
enum class RadioPhase { kRadioOff, kListening, kTransmitting };

struct GlossyNodeState {
  std::uint32_t node = 0;
  GlossyRole role = GlossyRole::kReceiver;
  RadioPhase phase = RadioPhase::kRadioOff;

  std::uint32_t tx_done_count = 0;
  std::uint32_t last_rx_relay_count = 0;
  std::int64_t t_ref_estimate = 0;  // local µs
  std::uint64_t radio_on_us_accum = 0;

  // Round bookkeeping.
  std::uint32_t round_seq = 0;
  std::int64_t predicted_round_start = 0;  // local µs
  std::int64_t radio_on_local = 0;
  VirtualTime window_open{};
  VirtualTime window_close{};
  std::optional<std::uint32_t> pending_tx_slot;
  bool received_this_round = false;
  bool ever_synced = false;
  std::vector<std::uint8_t> round_payload;
  std::vector<std::uint8_t> last_payload;
  std::optional<std::vector<std::uint8_t>> staged_payload;

  std::uint64_t rounds_completed = 0;
  std::uint64_t rounds_received = 0;
  std::uint64_t tx_total = 0;
  std::uint32_t max_tx_in_round = 0;
};

/// Radio-on time over a window of node-local time. Throws
/// Error(kInvalidArgument) if the window is shorter than one period.
double duty_cycle(const GlossyNodeState& node, std::uint64_t window_us,
                  std::uint64_t gp_us);

/// Per-node outcome handed to the serial-line layer after GD expiry.
struct RoundResult {
  std::uint32_t node = 0;
  std::uint32_t round_seq = 0;
  bool received = false;
  std::vector<std::uint8_t> payload;  // empty when nothing (or keep-alive) arrived
  std::int64_t round_start_local = 0;
  std::int64_t radio_off_local = 0;
};

/// Per-round trace used by tests and reliability checks.
struct RoundLog {
  std::uint32_t round_seq = 0;
  VirtualTime start{};
  std::uint64_t slot_len_us = 0;
  bool keep_alive = false;
  std::vector<std::uint8_t> payload;
  /// First successful reception per node, ns after round start (-1 = none).
  std::vector<std::int64_t> first_rx_ns;
  std::vector<std::uint32_t> tx_count;
  /// Predicted minus actual round start, µs, before this round's correction.
  std::vector<double> pre_sync_error_us;
  /// Re-estimated round start minus actual, µs (receivers that heard it).
  std::vector<double> post_sync_error_us;
  std::uint32_t ci_receptions = 0;
  std::uint32_t capture_receptions = 0;
  std::uint32_t collisions = 0;
  std::uint32_t slots = 0;

  bool all_received() const;
  /// Time from round start until the last node first received, µs.
  std::optional<double> completion_us() const;
};

/// One-initiator Glossy flood network over the kernel. Each node follows its
/// own drifting clock; receivers re-align to the initiator every round they
/// hear a packet.
class GlossyNetwork {
 public:
  using RoundEndHook = std::function<void(const RoundResult&)>;
  using PositionRefresh = std::function<void(VirtualTime)>;

  GlossyNetwork(Kernel& kernel, Topology& topology, std::vector<NodeClock> clocks,
                GlossyConfig config, RadioParams radio, std::uint32_t initiator,
                RngStreams& rng);

  /// Schedules round 0 at global `first_round`.
  void start(VirtualTime first_round);

  void set_round_end_hook(RoundEndHook hook) { round_end_ = std::move(hook); }
  void set_position_refresh(PositionRefresh f) { refresh_ = std::move(f); }

  /// Stages the payload the node floods next round (only the initiator's is
  /// used on air).
  void stage_payload(std::uint32_t node, std::vector<std::uint8_t> payload);

  const GlossyNodeState& node(std::uint32_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  const GlossyConfig& config() const { return config_; }
  const NodeClock& clock(std::uint32_t id) const { return clocks_.at(id); }
  std::uint32_t initiator() const { return initiator_; }
  const std::vector<RoundLog>& rounds() const { return rounds_; }

 private:
  void schedule_window(std::uint32_t id);
  void radio_on(std::uint32_t id);
  void radio_off_at_gd_expiry(std::uint32_t id);
  void start_round();
  void run_slot(std::uint32_t slot);
  void on_rx(std::uint32_t id, const FloodPacket& packet, std::int64_t rx_local,
             std::uint32_t slot);
  bool window_covers(const GlossyNodeState& n, VirtualTime from, VirtualTime to) const;

  Kernel& kernel_;
  Topology& topology_;
  std::vector<NodeClock> clocks_;
  GlossyConfig config_;
  RadioParams radio_;
  std::uint32_t initiator_;
  RngStreams& rng_;
  std::vector<GlossyNodeState> nodes_;
  std::vector<RoundLog> rounds_;

  RoundEndHook round_end_;
  PositionRefresh refresh_;

  // Current round.
  std::uint32_t round_seq_ = 0;
  VirtualTime round_start_{};
  FloodPacket round_packet_;
  std::uint64_t round_airtime_ = 0;
  std::uint64_t round_slot_len_ = 0;
  std::optional<std::uint32_t> initiator_last_tx_slot_;
};

}  // namespace ctsim
