#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctsim/control.hpp"
#include "ctsim/glossy.hpp"
#include "ctsim/radio.hpp"
#include "ctsim/slp.hpp"

namespace ctsim {

enum class Mode { kCentralController, kLeaderFollower };

const char* to_string(Mode mode);

/// Complete description of one simulation run. Every field is reachable
/// through a scenario-file key of the same name.
struct Scenario {
  std::string name = "run";
  Mode mode = Mode::kLeaderFollower;

  std::string topology = "line5";  // line5 | pair | custom
  std::vector<Position> positions;  // custom topology only
  double comm_range_m = 30.0;
  std::uint32_t coordinator = 0;  // leader or central controller; also the flood initiator

  std::uint64_t seed = 1;
  double duration_s = 0.0;  // 0 = schedule length
  double full_duration_s = 0.0;

  // Either explicit (time_s, speed) steps or equal-length segments.
  std::vector<std::pair<double, double>> schedule;
  std::vector<double> schedule_speeds;
  double segment_s = 12.0;
  double full_segment_s = 0.0;

  double gp_ms = 600.0;
  double gd_ms = 20.0;
  std::uint32_t n_tx = 3;
  std::uint64_t guard_us = 1'000;
  std::uint64_t turnaround_us = 192;
  std::uint64_t slot_len_us = 0;
  bool early_off = false;
  double first_round_ms = 10.0;

  std::optional<double> pp_ms;
  std::optional<double> lpp_ms;
  std::optional<double> fpp_ms;

  PidGains gains;
  double u_min = 0.0;
  double u_max = 100.0;
  PlantParams plant;
  std::uint64_t physics_step_us = 10'000;
  bool mobility = true;

  RadioParams radio;
  double drift_ppm_max = 50.0;
  double clock_offset_max_ms = 1000.0;

  SerialParams serial;
  double handover_margin_ms = 50.0;

  /// Builds the target schedule from whichever form was given.
  TargetSchedule target_schedule() const;
  double effective_duration_s() const;
  Topology build_topology() const;
  GlossyConfig glossy_config() const;
  SlpSchedule slp_schedule() const;
  std::uint64_t pp_us_for(MrcRole role) const;
};

/// Assigns one key. Throws Error(kParse) naming the key on unknown keys or
/// malformed values.
void set_field(Scenario& s, const std::string& key, const std::string& value);

/// Every key the parser accepts, in echo order.
std::vector<std::string> scenario_keys();

/// Throws Error(kInvalidScenario) naming the violated invariant.
void validate(const Scenario& s);

/// Strict `key = value` parser; `#` starts a comment. The result is
/// validated. Diagnostics carry the line number.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

/// Lossless text form: parse_scenario(echo_scenario(s)) reproduces s.
std::string echo_scenario(const Scenario& s);

/// Replaces the scaled-down durations with the long ones where given.
Scenario with_full_durations(Scenario s);

/// Milliseconds to whole microseconds; throws Error(kInvalidScenario) when
/// the result is not positive.
std::uint64_t ms_to_us(double ms, const char* what);

}  // namespace ctsim
