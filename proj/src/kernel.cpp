#include "ctsim/kernel.hpp"

#include <cmath>
#include <numbers>

#include "ctsim/error.hpp"

namespace ctsim {

long double NodeClock::local_time_exact(long double global_us) const {
  return static_cast<long double>(offset_us) + global_us +
         global_us * static_cast<long double>(drift_ppm) / 1e6L;
}

std::int64_t NodeClock::local_time(VirtualTime global) const {
  const auto g = static_cast<long double>(global.ticks);
  const auto correction =
      std::llround(g * static_cast<long double>(drift_ppm) / 1e6L);
  return offset_us + static_cast<std::int64_t>(global.ticks) + correction;
}

long double NodeClock::to_global_exact(long double local_us) const {
  return (local_us - static_cast<long double>(offset_us)) /
         (1.0L + static_cast<long double>(drift_ppm) / 1e6L);
}

VirtualTime NodeClock::global_time(std::int64_t local) const {
  const long double approx = to_global_exact(static_cast<long double>(local));
  if (approx <= 0.0L) return VirtualTime{0};
  auto g = static_cast<std::uint64_t>(std::floor(approx));
  // Rounding in local_time() can shift the answer by one tick either way.
  if (g > 0) --g;
  while (local_time(VirtualTime{g}) < local) ++g;
  return VirtualTime{g};
}

std::int64_t local_time(const NodeClock& clock, VirtualTime global) {
  return clock.local_time(global);
}

EventId Kernel::schedule(Event event) {
  if (event.fire_at < now_) {
    throw Error(Errc::kPastEvent,
                "past event: fire_at=" + std::to_string(event.fire_at.ticks) +
                    " now=" + std::to_string(now_.ticks));
  }
  event.seq = next_seq_++;
  const EventId id = event.seq;
  live_.insert(id);
  queue_.push(std::move(event));
  return id;
}

EventId Kernel::schedule_at(VirtualTime at, EventKind kind,
                            std::uint32_t target, EventHandler handler) {
  Event e;
  e.fire_at = at;
  e.kind = kind;
  e.target = target;
  e.handler = std::move(handler);
  return schedule(std::move(e));
}

bool Kernel::cancel(EventId id) {
  if (live_.erase(id) == 0) return false;
  cancelled_.insert(id);
  return true;
}

bool Kernel::pending_at_now() const {
  // The queue top may be a cancelled entry; those are rare enough that a
  // conservative answer is acceptable.
  return !queue_.empty() && queue_.top().fire_at == now_ &&
         !cancelled_.contains(queue_.top().seq);
}

std::size_t Kernel::run_until(VirtualTime t_end) {
  if (t_end < now_) {
    throw Error(Errc::kPastEvent, "run_until target lies in the past");
  }
  std::size_t count = 0;
  while (!queue_.empty() && queue_.top().fire_at <= t_end) {
    Event ev = queue_.top();
    queue_.pop();
    if (cancelled_.erase(ev.seq) > 0) continue;
    live_.erase(ev.seq);
    now_ = ev.fire_at;
    ++count;
    ++processed_;
    if (ev.handler) ev.handler(ev);
  }
  now_ = t_end;
  return count;
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal(double mean, double stddev) {
  if (stddev == 0.0) return mean;
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  // Box-Muller on (0, 1] to avoid log(0).
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * r * std::cos(theta);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream& RngStreams::stream(const StreamId& id) {
  auto key = std::make_pair(id.purpose, id.index);
  auto it = streams_.find(key);
  if (it == streams_.end()) {
    std::uint64_t h = fnv1a64(id.purpose);
    h = splitmix64(h ^ splitmix64(master_seed_));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(id.index) + 1));
    it = streams_.emplace(std::move(key), RngStream(h)).first;
  }
  return it->second;
}

}  // namespace ctsim
