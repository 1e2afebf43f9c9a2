#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctsim/metrics.hpp"
#include "ctsim/runner.hpp"
#include "ctsim/scenario.hpp"

namespace ctsim {

/// One sweep dimension. `key` is a scenario key, or one of the derived keys
/// pp_ratio (pp = gp * r), lpp_ratio (lpp = gp * r), fpp_ratio
/// (fpp = lpp * r) and speed (a single constant schedule speed).
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct SweepSpec {
  std::string name = "sweep";
  Scenario base;
  std::vector<SweepAxis> axes;
  std::uint32_t repetitions = 1;
  std::uint64_t master_seed = 1;

  std::size_t cell_count() const;
  std::size_t run_count() const { return cell_count() * repetitions; }
};

/// Lines: `name`, `base = <scenario path>`, `set.<key> = value`,
/// `axis.<key> = v1,v2,...` or `axis.<key> = from:to:step`, `repetitions`,
/// `master_seed`. Relative base paths resolve against `base_dir`.
SweepSpec parse_sweep(const std::string& text, const std::filesystem::path& base_dir = ".");
SweepSpec load_sweep(const std::filesystem::path& path);
/// Self-contained form (base inlined as set.* lines).
std::string echo_sweep(const SweepSpec& spec);

using CellCoords = std::vector<std::pair<std::string, std::string>>;

/// Every cell in row-major axis order.
std::vector<CellCoords> enumerate_cells(const SweepSpec& spec);

/// Seed of one repetition of one cell; independent of execution order.
std::uint64_t cell_seed(std::uint64_t master_seed, const CellCoords& coords, std::uint32_t repetition);

/// Scenario for one cell repetition. Throws on invalid combinations.
Scenario cell_scenario(const SweepSpec& spec, const CellCoords& coords, std::uint32_t repetition,
                       bool full);

struct CellResult {
  CellCoords coords;
  std::vector<RunReport> runs;
  std::vector<std::string> errors;

  std::optional<double> mean_pid_err() const;
  std::optional<double> mean_trx_err() const;
  std::optional<double> mean_avg_err() const;
  std::optional<double> mean_sync_ms() const;
  std::optional<double> max_sync_ms() const;
  std::optional<double> mean_duty_cycle() const;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<CellResult> cells;

  std::vector<RunReport> all_runs() const;
  std::string cells_csv() const;
  /// Rows: combinations of every axis except gp_ms; columns: gp_ms values.
  std::string heatmap_csv() const;
};

struct SweepOptions {
  unsigned jobs = 1;
  bool full = false;
  /// Cell indices to run, in this order; empty runs every cell in order.
  std::vector<std::size_t> order;
  /// Called from worker threads after each successful run.
  std::function<void(const RunOutput&)> on_run;
};

SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

/// Writes report.csv, cells.csv, heatmap.csv and config.echo.
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);

/// run_sweep plus write_sweep, with one trace/<run_id>.log per run.
SweepResult run_sweep_to_dir(const SweepSpec& spec, SweepOptions options,
                             const std::filesystem::path& dir);

}  // namespace ctsim
