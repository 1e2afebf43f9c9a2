#include "ctsim/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ctsim/error.hpp"

namespace ctsim {

namespace {

const std::set<std::string> kDerivedKeys = {"pp_ratio", "lpp_ratio", "fpp_ratio", "speed"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(d)) {
    throw Error(Errc::kParse, "axis '" + key + "': expected a number, got '" + v + "'");
  }
  return d;
}

std::vector<std::string> axis_values(const std::string& key, const std::string& text) {
  std::vector<std::string> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::istringstream in(text);
    std::string p;
    while (std::getline(in, p, ':')) parts.push_back(trim(p));
    if (parts.size() != 3) throw Error(Errc::kParse, "axis '" + key + "': range must be from:to:step");
    const double from = number(key, parts[0]);
    const double to = number(key, parts[1]);
    const double step = number(key, parts[2]);
    if (!(step > 0.0) || to < from) {
      throw Error(Errc::kParse, "axis '" + key + "': range needs step > 0 and from <= to");
    }
    const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt(from + static_cast<double>(i) * step));
  } else {
    std::istringstream in(text);
    std::string v;
    while (std::getline(in, v, ',')) {
      v = trim(v);
      if (v.empty()) throw Error(Errc::kParse, "axis '" + key + "': empty value");
      out.push_back(v);
    }
  }
  if (out.empty()) throw Error(Errc::kParse, "axis '" + key + "' has no values");
  return out;
}

template <typename Get>
std::optional<double> mean_of(const std::vector<RunReport>& runs, Get get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::kIo, "cannot write " + p.string());
  f << text;
  if (!f) throw Error(Errc::kIo, "write failed: " + p.string());
}

}  // namespace

std::size_t SweepSpec::cell_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

SweepSpec parse_sweep(const std::string& text, const std::filesystem::path& base_dir) {
  SweepSpec spec;
  std::vector<std::pair<std::string, std::string>> sets;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::kParse, where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw Error(Errc::kParse, where + "duplicate key '" + key + "'");
    try {
      if (key == "name") {
        spec.name = value;
      } else if (key == "base") {
        const std::filesystem::path p = std::filesystem::path(value).is_absolute()
                                            ? std::filesystem::path(value)
                                            : base_dir / value;
        spec.base = load_scenario(p);
      } else if (key == "repetitions") {
        const double r = number(key, value);
        if (r < 1 || r != std::floor(r) || r > 1e6) {
          throw Error(Errc::kParse, "repetitions must be a positive integer");
        }
        spec.repetitions = static_cast<std::uint32_t>(r);
      } else if (key == "master_seed") {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
          v = std::stoull(value, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != value.size() || value.empty() || value[0] == '-') {
          throw Error(Errc::kParse, "master_seed must be an unsigned integer");
        }
        spec.master_seed = v;
      } else if (key.rfind("set.", 0) == 0) {
        sets.emplace_back(key.substr(4), value);
      } else if (key.rfind("axis.", 0) == 0) {
        const std::string axis = key.substr(5);
        const auto keys = scenario_keys();
        if (!kDerivedKeys.count(axis) && std::find(keys.begin(), keys.end(), axis) == keys.end()) {
          throw Error(Errc::kParse, "unknown axis '" + axis + "'");
        }
        if (axis == "seed") throw Error(Errc::kParse, "seeds derive from master_seed; use repetitions");
        spec.axes.push_back({axis, axis_values(axis, value)});
      } else {
        throw Error(Errc::kParse, "unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    }
  }
  for (const auto& [k, v] : sets) {
    try {
      set_field(spec.base, k, v);
    } catch (const Error& e) {
      throw Error(Errc::kParse, std::string("set.") + k + ": " + e.what());
    }
  }
  return spec;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open sweep spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_sweep(buf.str(), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string echo_sweep(const SweepSpec& spec) {
  std::string out;
  out += "name = " + spec.name + "\n";
  out += "repetitions = " + std::to_string(spec.repetitions) + "\n";
  out += "master_seed = " + std::to_string(spec.master_seed) + "\n";
  std::istringstream base(echo_scenario(spec.base));
  std::string line;
  while (std::getline(base, line)) out += "set." + line + "\n";
  for (const auto& a : spec.axes) {
    out += "axis." + a.key + " = ";
    for (std::size_t i = 0; i < a.values.size(); ++i) out += (i ? "," : "") + a.values[i];
    out += "\n";
  }
  return out;
}

std::vector<CellCoords> enumerate_cells(const SweepSpec& spec) {
  std::vector<CellCoords> cells{CellCoords{}};
  for (const auto& axis : spec.axes) {
    std::vector<CellCoords> next;
    for (const auto& c : cells) {
      for (const auto& v : axis.values) {
        auto d = c;
        d.emplace_back(axis.key, v);
        next.push_back(std::move(d));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::uint64_t cell_seed(std::uint64_t master_seed, const CellCoords& coords,
                        std::uint32_t repetition) {
  std::string key;
  for (const auto& [k, v] : coords) key += k + "=" + v + ";";
  std::uint64_t h = splitmix64(master_seed ^ fnv1a64(key));
  return splitmix64(h + repetition);
}

Scenario cell_scenario(const SweepSpec& spec, const CellCoords& coords, std::uint32_t repetition,
                       bool full) {
  Scenario s = spec.base;
  std::optional<double> pp_ratio;
  std::optional<double> lpp_ratio;
  std::optional<double> fpp_ratio;
  std::string label = spec.name;
  for (const auto& [k, v] : coords) {
    label += "_" + k + v;
    if (k == "pp_ratio") {
      pp_ratio = number(k, v);
    } else if (k == "lpp_ratio") {
      lpp_ratio = number(k, v);
    } else if (k == "fpp_ratio") {
      fpp_ratio = number(k, v);
    } else if (k == "speed") {
      s.schedule.clear();
      s.schedule_speeds = {number(k, v)};
    } else {
      set_field(s, k, v);
    }
  }
  if (pp_ratio) s.pp_ms = s.gp_ms * *pp_ratio;
  if (lpp_ratio) s.lpp_ms = s.gp_ms * *lpp_ratio;
  if (fpp_ratio) {
    if (!s.lpp_ms) throw Error(Errc::kInvalidScenario, "fpp_ratio needs lpp_ms");
    s.fpp_ms = *s.lpp_ms * *fpp_ratio;
  }
  s.name = label + "_r" + std::to_string(repetition);
  s.seed = cell_seed(spec.master_seed, coords, repetition);
  if (full) s = with_full_durations(std::move(s));
  validate(s);
  return s;
}

std::optional<double> CellResult::mean_pid_err() const {
  return mean_of(runs, [](const RunReport& r) { return r.mean_pid_err(true); });
}
std::optional<double> CellResult::mean_trx_err() const {
  return mean_of(runs, [](const RunReport& r) { return r.mean_trx_err(); });
}
std::optional<double> CellResult::mean_avg_err() const {
  return mean_of(runs, [](const RunReport& r) { return r.mean_avg_err(true); });
}
std::optional<double> CellResult::mean_sync_ms() const {
  return mean_of(runs, [](const RunReport& r) -> std::optional<double> {
    if (r.sync.samples == 0) return std::nullopt;
    return r.sync.mean_ms;
  });
}
std::optional<double> CellResult::max_sync_ms() const {
  std::optional<double> m;
  for (const auto& r : runs) {
    if (r.sync.samples > 0) m = std::max(m.value_or(0.0), r.sync.max_ms);
  }
  return m;
}
std::optional<double> CellResult::mean_duty_cycle() const {
  return mean_of(runs, [](const RunReport& r) -> std::optional<double> {
    if (r.nodes.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& n : r.nodes) sum += n.duty_cycle;
    return sum / static_cast<double>(r.nodes.size());
  });
}

std::vector<RunReport> SweepResult::all_runs() const {
  std::vector<RunReport> out;
  for (const auto& c : cells) out.insert(out.end(), c.runs.begin(), c.runs.end());
  return out;
}

std::string SweepResult::cells_csv() const {
  std::string out = "cell";
  for (const auto& a : spec.axes) out += "," + a.key;
  out += ",runs,failed,pid_err_pct,trx_err_pct,avg_err_pct,sync_mean_ms,sync_max_ms,duty_cycle,error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out += std::to_string(i);
    for (const auto& [k, v] : c.coords) out += "," + v;
    out += "," + std::to_string(c.runs.size()) + "," + std::to_string(c.errors.size());
    out += "," + format_optional(c.mean_pid_err());
    out += "," + format_optional(c.mean_trx_err());
    out += "," + format_optional(c.mean_avg_err());
    out += "," + format_optional(c.mean_sync_ms());
    out += "," + format_optional(c.max_sync_ms());
    out += "," + format_optional(c.mean_duty_cycle());
    out += "," + csv_field(c.errors.empty() ? "" : c.errors.front());
    out += "\n";
  }
  return out;
}

std::string SweepResult::heatmap_csv() const {
  std::vector<std::string> columns;
  for (const auto& a : spec.axes) {
    if (a.key == "gp_ms") columns = a.values;
  }
  const bool by_gp = !columns.empty();
  if (!by_gp) columns = {"value"};

  std::vector<std::string> row_keys;
  std::map<std::string, std::map<std::string, std::string>> grid;
  for (const auto& c : cells) {
    std::string row;
    std::string col = "value";
    for (const auto& [k, v] : c.coords) {
      if (by_gp && k == "gp_ms") {
        col = v;
        continue;
      }
      row += (row.empty() ? "" : ";") + k + "=" + v;
    }
    if (row.empty()) row = "all";
    if (!grid.count(row)) row_keys.push_back(row);
    grid[row][col] = format_optional(c.mean_avg_err());
  }

  std::string out = "row";
  for (const auto& c : columns) out += "," + (by_gp ? "gp_ms=" + c : c);
  out += "\n";
  for (const auto& r : row_keys) {
    out += csv_field(r);
    for (const auto& c : columns) {
      auto it = grid[r].find(c);
      out += "," + (it == grid[r].end() ? std::string("NA") : it->second);
    }
    out += "\n";
  }
  return out;
}

SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  SweepResult result;
  result.spec = spec;
  const auto coords = enumerate_cells(spec);
  result.cells.resize(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) result.cells[i].coords = coords[i];

  std::vector<std::size_t> order = options.order;
  if (order.empty()) {
    for (std::size_t i = 0; i < coords.size(); ++i) order.push_back(i);
  }
  for (auto i : order) {
    if (i >= coords.size()) throw Error(Errc::kInvalidArgument, "cell index out of range");
  }

  // Work items are (cell, repetition); each writes only its own slot.
  struct Slot {
    std::optional<RunReport> report;
    std::string error;
  };
  const std::uint32_t reps = spec.repetitions;
  std::vector<Slot> slots(coords.size() * reps);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::exception_ptr callback_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= order.size() * reps) return;
      const std::size_t cell = order[k / reps];
      const auto rep = static_cast<std::uint32_t>(k % reps);
      Slot& slot = slots[cell * reps + rep];
      try {
        const Scenario s = cell_scenario(spec, coords[cell], rep, options.full);
        RunOutput out = run_scenario(s, s.name);
        if (options.on_run) {
          try {
            options.on_run(out);
          } catch (...) {
            std::lock_guard lock(callback_mutex);
            if (!callback_error) callback_error = std::current_exception();
          }
        }
        slot.report = std::move(out.report);
      } catch (const std::exception& e) {
        slot.error = "repetition " + std::to_string(rep) + ": " + e.what();
      }
    }
  };

  const unsigned jobs = std::max(1u, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (callback_error) std::rethrow_exception(callback_error);

  for (std::size_t c = 0; c < coords.size(); ++c) {
    for (std::uint32_t r = 0; r < reps; ++r) {
      auto& slot = slots[c * reps + r];
      if (slot.report) {
        result.cells[c].runs.push_back(std::move(*slot.report));
      } else if (!slot.error.empty()) {
        result.cells[c].errors.push_back(std::move(slot.error));
      }
    }
  }
  return result;
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + dir.string() + ": " + ec.message());
  const auto runs = result.all_runs();
  write_csv(runs, dir / "report.csv");
  write_text(dir / "cells.csv", result.cells_csv());
  write_text(dir / "heatmap.csv", result.heatmap_csv());
  write_text(dir / "config.echo", echo_sweep(result.spec));
}

SweepResult run_sweep_to_dir(const SweepSpec& spec, SweepOptions options,
                             const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "trace", ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + (dir / "trace").string() + ": " + ec.message());
  auto user = options.on_run;
  options.on_run = [&dir, user](const RunOutput& run) {
    write_text(dir / "trace" / (run.report.run_id + ".log"), run.trace_log());
    if (user) user(run);
  };
  auto result = run_sweep(spec, options);
  write_sweep(result, dir);
  return result;
}

}  // namespace ctsim
