#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctsim/control.hpp"
#include "ctsim/glossy.hpp"
#include "ctsim/metrics.hpp"
#include "ctsim/scenario.hpp"
#include "ctsim/slp.hpp"

namespace ctsim {

/// Everything one node left behind after a run.
struct NodeRun {
  std::uint32_t node = 0;
  MrcRole role = MrcRole::kFollower;
  NodeClock nu_clock;
  NodeClock ccu_clock;
  bool mobile = false;
  Pose final_pose;

  std::vector<MetricsRecord> records;
  std::vector<HiStamp> hi_stamps;
  std::vector<PidSample> pid_trace;
  std::vector<RoundValue> rx_trace;
  std::vector<RoundValue> handover_trace;

  LinkStats link;
  std::vector<PhaseMark> phases;
  std::vector<WireSpan> wire;
  GlossyNodeState glossy;
};

struct RunOutput {
  Scenario scenario;
  RunReport report;
  std::vector<RoundLog> rounds;
  std::vector<NodeRun> nodes;
  std::uint64_t events_processed = 0;

  /// Line-delimited trace: rounds, log-sync records, Hi stamps, payloads.
  std::string trace_log() const;
};

/// Builds every module for `scenario`, runs it for its duration and
/// computes the report. Deterministic in (scenario, scenario.seed).
RunOutput run_scenario(const Scenario& scenario, const std::string& run_id = {});

std::string default_run_id(const Scenario& scenario);

/// Writes report.csv, config.echo and trace/<run_id>.log under `dir`.
void write_run(const RunOutput& run, const std::filesystem::path& dir);

}  // namespace ctsim
