#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctsim/kernel.hpp"

namespace ctsim {

struct Position {
  double x_m = 0.0;
  double y_m = 0.0;
};

double distance_m(Position a, Position b);

/// Node positions plus a unit-disk connectivity rule. Links are derived on
/// demand from the current positions, so moving a node takes effect on the
/// next query.
class Topology {
 public:
  Topology() = default;
  Topology(std::vector<Position> positions, double comm_range_m);

  /// Five nodes in a 72 m x 20 m strip, diameter 3 hops.
  static Topology line5();
  /// Two nodes 10 m apart.
  static Topology pair();

  std::size_t size() const { return positions_.size(); }
  double comm_range_m() const { return comm_range_m_; }
  Position position(std::uint32_t node) const { return positions_.at(node); }
  const std::vector<Position>& positions() const { return positions_; }
  void set_position(std::uint32_t node, Position p) { positions_.at(node) = p; }

  bool in_range(std::uint32_t a, std::uint32_t b) const;
  std::vector<std::uint32_t> neighbors(std::uint32_t node) const;
  /// Hop distances from `source`; unreachable nodes get -1.
  std::vector<int> hop_distances(std::uint32_t source) const;
  bool connected() const;
  /// Longest shortest path in hops; nullopt if disconnected.
  std::optional<int> diameter() const;

 private:
  std::vector<Position> positions_;
  double comm_range_m_ = 0.0;
};

struct RadioParams {
  double p_loss = 0.01;
  double p_loss_ci = 0.05;
  bool ci_enabled = true;
  double ci_window_us = 0.5;
  bool capture_enabled = true;
  double capture_margin_db = 3.0;
  double capture_window_us = 160.0;
  double tx_power_dbm = 0.0;
  double pl0_db = 40.0;
  double d0_m = 1.0;
  double path_loss_exp = 3.0;
  /// Hardware start-time jitter applied to every transmission, uniform in
  /// [0, tx_jitter_ns].
  double tx_jitter_ns = 200.0;
};

inline constexpr std::uint32_t kPhyOverheadBytes = 6;
inline constexpr std::uint32_t kUsPerByte = 32;
inline constexpr std::size_t kMaxPsduBytes = 127;

/// 802.15.4 O-QPSK airtime at 250 kbit/s, including preamble, SFD and length
/// byte. Throws Error(kOutOfRange) outside 1..127.
std::uint64_t airtime(std::size_t packet_len_bytes);

/// Log-distance path loss. Throws Error(kInvalidArgument) for zero distance.
double received_power(Position sender, Position receiver, double tx_power_dbm,
                      const RadioParams& params = {});

struct Transmission {
  std::uint32_t sender = 0;
  std::vector<std::uint8_t> packet;
  /// Start on the global timeline in nanoseconds (sub-µs skew matters).
  std::int64_t start_ns = 0;
  std::uint64_t airtime_us = 0;
  double power_dbm = 0.0;
};

/// A transmission as seen by one receiver.
struct Arrival {
  const Transmission* tx = nullptr;
  double rx_power_dbm = 0.0;
  bool in_range = true;
};

struct ReceptionOutcome {
  enum class Kind { kIdle, kReceived, kCollision, kMissed };
  enum class Via { kNone, kSingle, kConstructive, kCapture };

  Kind kind = Kind::kIdle;
  Via via = Via::kNone;
  std::vector<std::uint8_t> packet;
  std::uint32_t from = 0;
  /// End of the decoded frame on the global timeline (ns).
  std::int64_t rx_end_ns = 0;

  bool received() const { return kind == Kind::kReceived; }
};

const char* to_string(ReceptionOutcome::Kind kind);

/// Applies the reception rules in order: idle, single sender, constructive
/// interference, capture, collision. Draws from `rng` only for the loss
/// decisions of the single-sender and constructive-interference cases.
ReceptionOutcome resolve_reception(std::span<const Arrival> arrivals,
                                   const RadioParams& params, RngStream& rng);

/// Topology-aware wrapper: filters `overlapping` by range and computes
/// received powers from current positions.
ReceptionOutcome resolve_reception(const Topology& topology,
                                   std::uint32_t receiver,
                                   std::span<const Transmission> overlapping,
                                   const RadioParams& params, RngStream& rng);

}  // namespace ctsim
