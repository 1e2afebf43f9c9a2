#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ctsim {

/// Global simulation time in microseconds since start.
struct VirtualTime {
  std::uint64_t ticks = 0;

  constexpr auto operator<=>(const VirtualTime&) const = default;

  static constexpr VirtualTime from_us(std::uint64_t us) { return {us}; }
  constexpr std::uint64_t us() const { return ticks; }
  constexpr double seconds() const { return static_cast<double>(ticks) * 1e-6; }
};

constexpr VirtualTime operator+(VirtualTime t, std::uint64_t us) {
  return {t.ticks + us};
}

/// A node-local oscillator: local = offset + global * (1 + drift_ppm / 1e6).
struct NodeClock {
  std::uint32_t node_id = 0;
  double drift_ppm = 0.0;
  std::int64_t offset_us = 0;

  /// Local reading at a global instant, rounded to the nearest microsecond.
  std::int64_t local_time(VirtualTime global) const;
  /// Exact (unrounded) local reading; used where sub-microsecond precision
  /// matters.
  long double local_time_exact(long double global_us) const;
  /// Inverse mapping. Returns the earliest global tick whose local reading is
  /// >= `local`, clamped at zero.
  VirtualTime global_time(std::int64_t local) const;
  /// Ground-truth mapping of a local reading back to (fractional) global µs.
  long double to_global_exact(long double local_us) const;
};

/// Free-function form of `NodeClock::local_time`.
std::int64_t local_time(const NodeClock& clock, VirtualTime global);

using EventId = std::uint64_t;

enum class EventKind : std::uint16_t {
  kGeneric = 0,
  kRadioOn,
  kRadioOff,
  kRoundStart,
  kSlot,
  kSerial,
  kSlpPhase,
  kPidTick,
  kPhysics,
};

struct Event;
using EventHandler = std::function<void(const Event&)>;

struct Event {
  VirtualTime fire_at;
  std::uint64_t seq = 0;  // assigned by the kernel
  std::uint32_t target = 0;
  EventKind kind = EventKind::kGeneric;
  std::vector<std::uint8_t> payload;
  EventHandler handler;
};

/// Single-threaded discrete-event engine. Events are processed in ascending
/// (fire_at, seq) order; seq is the insertion counter.
class Kernel {
 public:
  Kernel() = default;
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  VirtualTime now() const { return now_; }

  /// Throws Error(kPastEvent) when `event.fire_at < now()`.
  EventId schedule(Event event);
  /// Convenience overload for handler-only events.
  EventId schedule_at(VirtualTime at, EventKind kind, std::uint32_t target,
                      EventHandler handler);

  /// Returns false if the event already ran or was unknown.
  bool cancel(EventId id);

  /// Processes every event with fire_at <= t_end (inclusive) and leaves
  /// now() == t_end.
  std::size_t run_until(VirtualTime t_end);

  /// True when another live event is queued at exactly now().
  bool pending_at_now() const;

  std::size_t queued() const { return queue_.size() - cancelled_.size(); }
  std::uint64_t processed_total() const { return processed_; }

 private:
  struct Order {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  VirtualTime now_{};
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Order> queue_;
  std::unordered_set<EventId> cancelled_;
  std::unordered_set<EventId> live_;
};

/// Identifies one independent random stream: a purpose tag plus an index
/// (usually the node id).
struct StreamId {
  std::string purpose;
  std::uint32_t index = 0;
};

/// A deterministic stream. Uniform and normal variates are derived from the
/// raw 64-bit engine output directly so sequences do not depend on the
/// standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double stddev);
  bool bernoulli(double p) { return p > 0.0 && uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Owns every named stream of one simulation run.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed) : master_seed_(master_seed) {}

  RngStream& stream(const StreamId& id);
  RngStream& stream(std::string_view purpose, std::uint32_t index) {
    return stream(StreamId{std::string(purpose), index});
  }
  /// One uniform draw from the named stream.
  double rng_draw(const StreamId& id) { return stream(id).uniform(); }

  std::uint64_t master_seed() const { return master_seed_; }

 private:
  std::uint64_t master_seed_;
  std::map<std::pair<std::string, std::uint32_t>, RngStream> streams_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace ctsim
