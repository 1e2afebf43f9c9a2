#include "ctsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "ctsim/control.hpp"
#include "ctsim/error.hpp"

namespace ctsim {

namespace {

template <typename Eligible, typename Term>
std::optional<double> mean_over(std::span<const MetricsRecord> records, Eligible eligible,
                                Term term) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!eligible(r)) continue;
    sum += term(r);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

std::optional<double> pid_err(std::span<const MetricsRecord> records) {
  return mean_over(
      records,
      [](const MetricsRecord& r) { return r.target_speed > 0.0 && std::isfinite(r.measured_speed); },
      [](const MetricsRecord& r) {
        return std::abs(r.measured_speed - r.target_speed) / r.target_speed * 100.0;
      });
}

std::optional<double> trx_err(std::span<const MetricsRecord> records) {
  return mean_over(
      records,
      [](const MetricsRecord& r) {
        return r.last_rx_payload_speed > 0.0 && std::isfinite(r.measured_speed);
      },
      [](const MetricsRecord& r) {
        return std::abs(r.measured_speed - r.last_rx_payload_speed) / r.last_rx_payload_speed *
               100.0;
      });
}

std::optional<double> abs_err(std::span<const MetricsRecord> records) {
  return mean_over(
      records, [](const MetricsRecord& r) { return std::isfinite(r.measured_speed); },
      [](const MetricsRecord& r) { return std::abs(r.measured_speed - r.target_speed); });
}

double PairSync::mean_ms() const {
  if (err_ms.empty()) return 0.0;
  return std::accumulate(err_ms.begin(), err_ms.end(), 0.0) / static_cast<double>(err_ms.size());
}

double PairSync::max_ms() const {
  if (err_ms.empty()) return 0.0;
  return *std::max_element(err_ms.begin(), err_ms.end());
}

std::optional<double> SyncStats::node_mean_ms(std::uint32_t node) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    if (p.a != node && p.b != node) continue;
    for (double e : p.err_ms) sum += e;
    n += p.err_ms.size();
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> SyncStats::node_max_ms(std::uint32_t node) const {
  std::optional<double> best;
  for (const auto& p : pairs) {
    if ((p.a != node && p.b != node) || p.err_ms.empty()) continue;
    best = std::max(best.value_or(0.0), p.max_ms());
  }
  return best;
}

const PairSync* SyncStats::pair(std::uint32_t a, std::uint32_t b) const {
  if (a > b) std::swap(a, b);
  for (const auto& p : pairs) {
    if (p.a == a && p.b == b) return &p;
  }
  return nullptr;
}

SyncStats sync_error(std::span<const NodeHiLog> logs) {
  std::vector<std::map<std::uint32_t, long double>> global_by_round(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (const auto& s : logs[i].stamps) {
      // Keep the first Hi of a round if it was somehow duplicated.
      global_by_round[i].emplace(
          s.round_seq, logs[i].clock.to_global_exact(static_cast<long double>(s.ccu_local_us)));
    }
  }

  SyncStats out;
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (std::size_t j = i + 1; j < logs.size(); ++j) {
      PairSync p;
      p.a = std::min(logs[i].node, logs[j].node);
      p.b = std::max(logs[i].node, logs[j].node);
      for (const auto& [round, gi] : global_by_round[i]) {
        auto it = global_by_round[j].find(round);
        if (it == global_by_round[j].end()) continue;
        const double e = static_cast<double>(std::abs(gi - it->second) / 1000.0L);
        p.rounds.push_back(round);
        p.err_ms.push_back(e);
        sum += e;
        out.max_ms = std::max(out.max_ms, e);
        ++out.samples;
      }
      out.pairs.push_back(std::move(p));
    }
  }
  if (out.samples > 0) out.mean_ms = sum / static_cast<double>(out.samples);
  return out;
}

std::optional<double> NodeReport::avg_err_pct() const {
  if (pid_err_pct && trx_err_pct) return 0.5 * (*pid_err_pct + *trx_err_pct);
  if (pid_err_pct) return pid_err_pct;
  return trx_err_pct;
}

namespace {

bool is_follower_role(const std::string& role) {
  return role == to_string(MrcRole::kFollower) || role == to_string(MrcRole::kCommandedDevice);
}

template <typename Get>
std::optional<double> node_mean(const std::vector<NodeReport>& nodes, bool followers_only,
                                Get get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& node : nodes) {
    if (followers_only && !is_follower_role(node.role)) continue;
    if (auto v = get(node)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

std::optional<double> RunReport::mean_pid_err(bool followers_only) const {
  return node_mean(nodes, followers_only, [](const NodeReport& n) { return n.pid_err_pct; });
}

std::optional<double> RunReport::mean_trx_err() const {
  return node_mean(nodes, false, [](const NodeReport& n) { return n.trx_err_pct; });
}

std::optional<double> RunReport::mean_avg_err(bool followers_only) const {
  return node_mean(nodes, followers_only, [](const NodeReport& n) { return n.avg_err_pct(); });
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : "NA";
}

namespace {

std::string format_period(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace

std::string to_csv(std::span<const RunReport> reports) {
  std::string out = kReportCsvHeader;
  out += '\n';
  for (const auto& r : reports) {
    for (const auto& n : r.nodes) {
      out += r.run_id;
      out += ',' + std::to_string(r.seed);
      out += ',' + format_period(r.gp_ms);
      out += ',' + format_period(r.pp_ms);
      out += ',' + format_period(r.lpp_ms);
      out += ',' + format_period(r.fpp_ms);
      out += ',' + std::to_string(n.node);
      out += ',' + format_optional(n.pid_err_pct);
      out += ',' + format_optional(n.trx_err_pct);
      out += ',' + format_optional(n.sync_mean_ms);
      out += ',' + format_optional(n.sync_max_ms);
      out += ',' + format_number(n.duty_cycle);
      out += ',' + format_optional(n.abs_err_cm_s);
      out += '\n';
    }
  }
  return out;
}

void write_csv(std::span<const RunReport> reports, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::kIo, "cannot write " + path.string());
  f << to_csv(reports);
  if (!f) throw Error(Errc::kIo, "write failed: " + path.string());
}

}  // namespace ctsim
