#include "ctsim/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ctsim/error.hpp"

namespace ctsim {

const char* to_string(Mode mode) {
  return mode == Mode::kCentralController ? "central-controller" : "leader-follower";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(Errc::kParse, "field '" + key + "': expected " + want + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  if (value.empty()) bad_value(key, value, "a number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end != value.c_str() + value.size() || !std::isfinite(v)) {
    bad_value(key, value, "a number");
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value[0] == '-' || value[0] == '+') bad_value(key, value, "an unsigned integer");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end != value.c_str() + value.size()) bad_value(key, value, "an unsigned integer");
  return v;
}

std::uint32_t to_u32(const std::string& key, const std::string& value) {
  const auto v = to_u64(key, value);
  if (v > 0xFFFFFFFFULL) bad_value(key, value, "a 32-bit unsigned integer");
  return static_cast<std::uint32_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::pair<double, double>> to_pairs(const std::string& key, const std::string& value) {
  std::vector<std::pair<double, double>> out;
  if (value.empty()) return out;
  for (const auto& item : split(value, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value(key, item, "a:b");
    out.emplace_back(to_double(key, trim(item.substr(0, colon))),
                     to_double(key, trim(item.substr(colon + 1))));
  }
  return out;
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  if (value.empty()) return out;
  for (const auto& item : split(value, ',')) out.push_back(to_double(key, item));
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_pairs(const std::vector<std::pair<double, double>>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(v[i].first) + ":" + fmt(v[i].second);
  }
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(Scenario&, const std::string&, const std::string&)> set;
  /// nullopt: omitted from the echo (unset optional or empty list).
  std::function<std::optional<std::string>(const Scenario&)> get;
};

#define CTSIM_DOUBLE(k, member)                                                         \
  Field{k, [](Scenario& s, const std::string& key, const std::string& v) { s.member = to_double(key, v); }, \
        [](const Scenario& s) -> std::optional<std::string> { return fmt(s.member); }}
#define CTSIM_U64(k, member)                                                            \
  Field{k, [](Scenario& s, const std::string& key, const std::string& v) { s.member = to_u64(key, v); }, \
        [](const Scenario& s) -> std::optional<std::string> { return std::to_string(s.member); }}
#define CTSIM_U32(k, member)                                                            \
  Field{k, [](Scenario& s, const std::string& key, const std::string& v) { s.member = to_u32(key, v); }, \
        [](const Scenario& s) -> std::optional<std::string> { return std::to_string(s.member); }}
#define CTSIM_BOOL(k, member)                                                           \
  Field{k, [](Scenario& s, const std::string& key, const std::string& v) { s.member = to_bool(key, v); }, \
        [](const Scenario& s) -> std::optional<std::string> { return s.member ? "true" : "false"; }}
#define CTSIM_OPT(k, member)                                                            \
  Field{k, [](Scenario& s, const std::string& key, const std::string& v) { s.member = to_double(key, v); }, \
        [](const Scenario& s) -> std::optional<std::string> {                           \
          if (!s.member) return std::nullopt;                                           \
          return fmt(*s.member);                                                        \
        }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"name", [](Scenario& s, const std::string&, const std::string& v) { s.name = v; },
            [](const Scenario& s) -> std::optional<std::string> { return s.name; }},
      Field{"mode",
            [](Scenario& s, const std::string& key, const std::string& v) {
              if (v == "central-controller") {
                s.mode = Mode::kCentralController;
              } else if (v == "leader-follower") {
                s.mode = Mode::kLeaderFollower;
              } else {
                bad_value(key, v, "central-controller or leader-follower");
              }
            },
            [](const Scenario& s) -> std::optional<std::string> { return to_string(s.mode); }},
      Field{"topology",
            [](Scenario& s, const std::string& key, const std::string& v) {
              if (v != "line5" && v != "pair" && v != "custom") bad_value(key, v, "line5, pair or custom");
              s.topology = v;
            },
            [](const Scenario& s) -> std::optional<std::string> { return s.topology; }},
      Field{"positions",
            [](Scenario& s, const std::string& key, const std::string& v) {
              s.positions.clear();
              for (const auto& [x, y] : to_pairs(key, v)) s.positions.push_back({x, y});
            },
            [](const Scenario& s) -> std::optional<std::string> {
              if (s.positions.empty()) return std::nullopt;
              std::vector<std::pair<double, double>> p;
              for (const auto& q : s.positions) p.emplace_back(q.x_m, q.y_m);
              return fmt_pairs(p);
            }},
      CTSIM_DOUBLE("comm_range_m", comm_range_m),
      CTSIM_U32("coordinator", coordinator),
      CTSIM_U64("seed", seed),
      CTSIM_DOUBLE("duration_s", duration_s),
      CTSIM_DOUBLE("full_duration_s", full_duration_s),
      Field{"schedule",
            [](Scenario& s, const std::string& key, const std::string& v) { s.schedule = to_pairs(key, v); },
            [](const Scenario& s) -> std::optional<std::string> {
              if (s.schedule.empty()) return std::nullopt;
              return fmt_pairs(s.schedule);
            }},
      Field{"schedule_speeds",
            [](Scenario& s, const std::string& key, const std::string& v) {
              s.schedule_speeds = to_list(key, v);
            },
            [](const Scenario& s) -> std::optional<std::string> {
              if (s.schedule_speeds.empty()) return std::nullopt;
              return fmt_list(s.schedule_speeds);
            }},
      CTSIM_DOUBLE("segment_s", segment_s),
      CTSIM_DOUBLE("full_segment_s", full_segment_s),
      CTSIM_DOUBLE("gp_ms", gp_ms),
      CTSIM_DOUBLE("gd_ms", gd_ms),
      CTSIM_U32("n_tx", n_tx),
      CTSIM_U64("guard_us", guard_us),
      CTSIM_U64("turnaround_us", turnaround_us),
      CTSIM_U64("slot_len_us", slot_len_us),
      CTSIM_BOOL("early_off", early_off),
      CTSIM_DOUBLE("first_round_ms", first_round_ms),
      CTSIM_OPT("pp_ms", pp_ms),
      CTSIM_OPT("lpp_ms", lpp_ms),
      CTSIM_OPT("fpp_ms", fpp_ms),
      CTSIM_DOUBLE("kp", gains.kp),
      CTSIM_DOUBLE("ki", gains.ki),
      CTSIM_DOUBLE("kd", gains.kd),
      CTSIM_DOUBLE("u_min", u_min),
      CTSIM_DOUBLE("u_max", u_max),
      CTSIM_DOUBLE("tau_s", plant.tau_s),
      CTSIM_DOUBLE("sigma_v", plant.sigma_v),
      CTSIM_DOUBLE("v_max", plant.v_max),
      CTSIM_DOUBLE("gain_v", plant.gain_v),
      CTSIM_DOUBLE("wheel_base_cm", plant.wheel_base_cm),
      CTSIM_DOUBLE("encoder_tick_cm", plant.encoder_tick_cm),
      CTSIM_U64("physics_step_us", physics_step_us),
      CTSIM_BOOL("mobility", mobility),
      CTSIM_DOUBLE("p_loss", radio.p_loss),
      CTSIM_DOUBLE("p_loss_ci", radio.p_loss_ci),
      CTSIM_BOOL("ci_enabled", radio.ci_enabled),
      CTSIM_DOUBLE("ci_window_us", radio.ci_window_us),
      CTSIM_BOOL("capture_enabled", radio.capture_enabled),
      CTSIM_DOUBLE("capture_margin_db", radio.capture_margin_db),
      CTSIM_DOUBLE("capture_window_us", radio.capture_window_us),
      CTSIM_DOUBLE("tx_power_dbm", radio.tx_power_dbm),
      CTSIM_DOUBLE("pl0_db", radio.pl0_db),
      CTSIM_DOUBLE("d0_m", radio.d0_m),
      CTSIM_DOUBLE("path_loss_exp", radio.path_loss_exp),
      CTSIM_DOUBLE("tx_jitter_ns", radio.tx_jitter_ns),
      CTSIM_DOUBLE("drift_ppm_max", drift_ppm_max),
      CTSIM_DOUBLE("clock_offset_max_ms", clock_offset_max_ms),
      CTSIM_U64("byte_time_us", serial.byte_time_us),
      CTSIM_U64("serial_jitter_us", serial.jitter_us),
      CTSIM_U64("ccu_poll_us", serial.ccu_poll_us),
      CTSIM_U64("reply_timeout_us", serial.reply_timeout_us),
      CTSIM_DOUBLE("ccu_fail_prob", serial.ccu_fail_prob),
      CTSIM_DOUBLE("bit_error_rate", serial.bit_error_rate),
      CTSIM_DOUBLE("handover_margin_ms", handover_margin_ms),
  };
  return table;
}

#undef CTSIM_DOUBLE
#undef CTSIM_U64
#undef CTSIM_U32
#undef CTSIM_BOOL
#undef CTSIM_OPT

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::kInvalidScenario, what); }

void require(bool ok, const std::string& what) {
  if (!ok) invalid(what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

std::uint64_t ms_to_us(double ms, const char* what) {
  const double us = std::round(ms * 1000.0);
  if (!(us >= 1.0) || us > 1e15) invalid(std::string(what) + " must be positive");
  return static_cast<std::uint64_t>(us);
}

void set_field(Scenario& s, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(s, key, value);
      return;
    }
  }
  throw Error(Errc::kParse, "unknown key '" + key + "'");
}

std::vector<std::string> scenario_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

TargetSchedule Scenario::target_schedule() const {
  if (!schedule.empty()) return TargetSchedule(schedule);
  std::vector<std::pair<double, double>> steps;
  for (std::size_t i = 0; i < schedule_speeds.size(); ++i) {
    steps.emplace_back(static_cast<double>(i) * segment_s, schedule_speeds[i]);
  }
  return TargetSchedule(std::move(steps));
}

double Scenario::effective_duration_s() const {
  if (duration_s > 0.0) return duration_s;
  if (!schedule_speeds.empty() && schedule.empty()) {
    return static_cast<double>(schedule_speeds.size()) * segment_s;
  }
  return 0.0;
}

Topology Scenario::build_topology() const {
  if (topology == "line5") return Topology(Topology::line5().positions(), comm_range_m);
  if (topology == "pair") return Topology(Topology::pair().positions(), comm_range_m);
  return Topology(positions, comm_range_m);
}

GlossyConfig Scenario::glossy_config() const {
  GlossyConfig c;
  c.gp_us = ms_to_us(gp_ms, "gp_ms");
  c.gd_us = ms_to_us(gd_ms, "gd_ms");
  c.n_tx = n_tx;
  c.turnaround_us = turnaround_us;
  c.slot_len_us = slot_len_us;
  c.guard_us = guard_us;
  c.early_off = early_off;
  return c;
}

SlpSchedule Scenario::slp_schedule() const {
  return SlpSchedule::defaults(ms_to_us(gp_ms, "gp_ms"), ms_to_us(handover_margin_ms, "handover_margin_ms"));
}

std::uint64_t Scenario::pp_us_for(MrcRole role) const {
  switch (role) {
    case MrcRole::kLeader: return ms_to_us(lpp_ms.value_or(0.0), "lpp_ms");
    case MrcRole::kFollower: return ms_to_us(fpp_ms.value_or(0.0), "fpp_ms");
    case MrcRole::kCentralController:
    case MrcRole::kCommandedDevice: return ms_to_us(pp_ms.value_or(0.0), "pp_ms");
  }
  return 0;
}

void validate(const Scenario& s) {
  require(!s.name.empty() && std::all_of(s.name.begin(), s.name.end(),
                                         [](char c) {
                                           return std::isalnum(static_cast<unsigned char>(c)) ||
                                                  c == '-' || c == '_' || c == '.';
                                         }),
          "name must be non-empty and use only letters, digits, '-', '_' or '.'");
  require(s.gp_ms > 0.0, "gp_ms > 0 violated");
  require(s.gd_ms > 0.0, "gd_ms > 0 violated");
  require(s.gd_ms < s.gp_ms, "gd < gp violated");
  require(s.n_tx >= 1, "n_tx >= 1 violated");
  require(s.first_round_ms >= 0.0, "first_round_ms >= 0 violated");

  if (s.mode == Mode::kCentralController) {
    require(s.pp_ms.has_value(), "central-controller mode requires pp_ms");
    require(!s.lpp_ms && !s.fpp_ms, "central-controller mode takes pp_ms, not lpp_ms/fpp_ms");
    require(*s.pp_ms > 0.0, "pp_ms > 0 violated");
  } else {
    require(s.lpp_ms && s.fpp_ms, "leader-follower mode requires lpp_ms and fpp_ms");
    require(!s.pp_ms, "leader-follower mode takes lpp_ms/fpp_ms, not pp_ms");
    require(*s.lpp_ms > 0.0, "lpp_ms > 0 violated");
    require(*s.fpp_ms > 0.0, "fpp_ms > 0 violated");
  }

  require(s.schedule.empty() != s.schedule_speeds.empty(),
          "exactly one of schedule and schedule_speeds is required");
  for (std::size_t i = 0; i < s.schedule.size(); ++i) {
    require(s.schedule[i].first >= 0.0, "schedule times must be >= 0");
    require(i == 0 || s.schedule[i].first > s.schedule[i - 1].first,
            "schedule times must be strictly increasing");
  }
  for (const auto& [t, v] : s.schedule) require(v >= 0.0, "schedule speeds must be >= 0");
  for (double v : s.schedule_speeds) require(v >= 0.0, "schedule speeds must be >= 0");
  require(s.segment_s > 0.0, "segment_s > 0 violated");
  require(s.full_segment_s >= 0.0 && s.full_duration_s >= 0.0, "full durations must be >= 0");
  require(s.duration_s >= 0.0, "duration_s >= 0 violated");
  const double duration = s.effective_duration_s();
  require(duration > 0.0, "duration_s is required with an explicit schedule");
  require(duration * 1000.0 > s.first_round_ms + s.gp_ms, "duration must cover at least one round");

  require(s.topology != "custom" || s.positions.size() >= 2, "custom topology needs >= 2 positions");
  require(s.topology == "custom" || s.positions.empty(), "positions are only valid for a custom topology");
  require(s.comm_range_m > 0.0, "comm_range_m > 0 violated");
  const Topology topo = s.build_topology();
  for (std::size_t i = 0; i < topo.size(); ++i) {
    for (std::size_t j = i + 1; j < topo.size(); ++j) {
      require(distance_m(topo.position(static_cast<std::uint32_t>(i)),
                         topo.position(static_cast<std::uint32_t>(j))) > 0.0,
              "positions must be distinct");
    }
  }
  require(topo.connected(), "topology must be connected");
  require(s.coordinator < topo.size(), "coordinator must name an existing node");

  require(s.u_min < s.u_max, "u_min < u_max violated");
  require(s.plant.tau_s > 0.0, "tau_s > 0 violated");
  require(s.plant.sigma_v >= 0.0, "sigma_v >= 0 violated");
  require(s.plant.v_max > 0.0, "v_max > 0 violated");
  require(s.plant.gain_v > 0.0, "gain_v > 0 violated");
  require(s.plant.wheel_base_cm > 0.0, "wheel_base_cm > 0 violated");
  require(s.plant.encoder_tick_cm >= 0.0, "encoder_tick_cm >= 0 violated");
  require(s.physics_step_us > 0, "physics_step_us > 0 violated");

  require(is_probability(s.radio.p_loss), "p_loss must lie in [0, 1]");
  require(is_probability(s.radio.p_loss_ci), "p_loss_ci must lie in [0, 1]");
  require(s.radio.ci_window_us >= 0.0, "ci_window_us >= 0 violated");
  require(s.radio.capture_window_us >= 0.0, "capture_window_us >= 0 violated");
  require(s.radio.d0_m > 0.0, "d0_m > 0 violated");
  require(s.radio.path_loss_exp > 0.0, "path_loss_exp > 0 violated");
  require(s.radio.tx_jitter_ns >= 0.0, "tx_jitter_ns >= 0 violated");
  require(s.drift_ppm_max >= 0.0 && s.drift_ppm_max < 1000.0, "drift_ppm_max must lie in [0, 1000)");
  require(s.clock_offset_max_ms >= 0.0, "clock_offset_max_ms >= 0 violated");

  require(s.serial.byte_time_us > 0, "byte_time_us > 0 violated");
  require(is_probability(s.serial.ccu_fail_prob), "ccu_fail_prob must lie in [0, 1]");
  require(is_probability(s.serial.bit_error_rate), "bit_error_rate must lie in [0, 1]");
  require(s.serial.reply_timeout_us > 0, "reply_timeout_us > 0 violated");

  try {
    const auto g = s.glossy_config();
    g.validate();
    s.slp_schedule().validate(g.gp_us, g.gd_us);
    if (s.mode == Mode::kCentralController) {
      s.pp_us_for(MrcRole::kCommandedDevice);
    } else {
      s.pp_us_for(MrcRole::kLeader);
      s.pp_us_for(MrcRole::kFollower);
    }
  } catch (const Error& e) {
    if (e.code() == Errc::kInvalidScenario) throw;
    invalid(e.what());
  }
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw Error(Errc::kParse, where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw Error(Errc::kParse, where + "duplicate key '" + key + "'");
    try {
      set_field(s, key, value);
    } catch (const Error& e) {
      throw Error(Errc::kParse, where + e.what());
    }
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string echo_scenario(const Scenario& s) {
  std::string out;
  for (const auto& f : fields()) {
    if (auto v = f.get(s)) out += std::string(f.key) + " = " + *v + "\n";
  }
  return out;
}

Scenario with_full_durations(Scenario s) {
  if (s.full_segment_s > 0.0) s.segment_s = s.full_segment_s;
  if (s.full_duration_s > 0.0) s.duration_s = s.full_duration_s;
  return s;
}

}  // namespace ctsim
