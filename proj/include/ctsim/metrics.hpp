#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctsim/kernel.hpp"

namespace ctsim {

/// Local CCU time at which a Hi frame of `round_seq` was read.
struct HiStamp {
  std::uint32_t round_seq = 0;
  std::int64_t ccu_local_us = 0;
};

/// Phase-3 snapshot taken by a CCU.
struct MetricsRecord {
  std::uint32_t node_id = 0;
  std::uint64_t global_time_us = 0;
  std::int64_t local_time_us = 0;
  double target_speed = 0.0;
  double measured_speed = 0.0;
  /// NaN until the first flood payload reached this CCU.
  double last_rx_payload_speed = 0.0;
  std::uint32_t round_seq = 0;
};

/// Mean |measured - target| / target * 100 over records with target > 0.
/// nullopt when no record is eligible.
std::optional<double> pid_err(std::span<const MetricsRecord> records);
/// Mean |measured - rx| / rx * 100 over records with a received speed > 0.
std::optional<double> trx_err(std::span<const MetricsRecord> records);
/// Mean |measured - target| in cm/s over every record with a finite
/// measurement, zero targets included.
std::optional<double> abs_err(std::span<const MetricsRecord> records);

/// Hi-arrival timestamps of one CCU plus its ground-truth clock.
struct NodeHiLog {
  std::uint32_t node = 0;
  NodeClock clock;
  std::vector<HiStamp> stamps;
};

struct PairSync {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::vector<std::uint32_t> rounds;
  std::vector<double> err_ms;

  double mean_ms() const;
  double max_ms() const;
};

struct SyncStats {
  std::vector<PairSync> pairs;
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;

  /// Stats over every pair that involves `node`.
  std::optional<double> node_mean_ms(std::uint32_t node) const;
  std::optional<double> node_max_ms(std::uint32_t node) const;
  const PairSync* pair(std::uint32_t a, std::uint32_t b) const;
};

/// Pairwise CCU time-sync error per round, after mapping each local Hi
/// timestamp back to global time through the node's true clock. Rounds a
/// node missed are skipped for the pairs involving it.
SyncStats sync_error(std::span<const NodeHiLog> logs);

struct NodeReport {
  std::uint32_t node = 0;
  std::string role;
  std::optional<double> pid_err_pct;
  std::optional<double> trx_err_pct;
  std::optional<double> abs_err_cm_s;
  std::optional<double> sync_mean_ms;
  std::optional<double> sync_max_ms;
  double duty_cycle = 0.0;
  std::size_t records = 0;

  /// Arithmetic mean of PID-err and TRX-err when both exist, else whichever
  /// exists.
  std::optional<double> avg_err_pct() const;
};

struct RunReport {
  std::string run_id;
  std::uint64_t seed = 0;
  double gp_ms = 0.0;
  std::optional<double> pp_ms;
  std::optional<double> lpp_ms;
  std::optional<double> fpp_ms;
  std::vector<NodeReport> nodes;
  SyncStats sync;

  /// Per-node values averaged with equal node weight; mobile non-leader
  /// nodes only when `followers_only`.
  std::optional<double> mean_pid_err(bool followers_only = false) const;
  std::optional<double> mean_trx_err() const;
  std::optional<double> mean_avg_err(bool followers_only = true) const;
};

inline constexpr const char* kReportCsvHeader =
    "run_id,seed,gp_ms,pp_ms,lpp_ms,fpp_ms,node,pid_err_pct,trx_err_pct,"
    "sync_mean_ms,sync_max_ms,duty_cycle,abs_err_cm_s";

std::string to_csv(std::span<const RunReport> reports);
/// Throws Error(kIo) when the file cannot be written.
void write_csv(std::span<const RunReport> reports, const std::filesystem::path& path);

/// Fixed formatting used in every output file ("NA" for absent values).
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

}  // namespace ctsim
