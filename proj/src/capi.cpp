#include "ctsim/ctsim.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "ctsim/error.hpp"
#include "ctsim/runner.hpp"
#include "ctsim/scenario.hpp"
#include "ctsim/slp.hpp"
#include "ctsim/sweep.hpp"

struct ctsim_scenario {
  ctsim::Scenario value;
};

struct ctsim_run {
  ctsim::RunOutput value;
};

struct ctsim_sweep {
  ctsim::SweepSpec value;
};

namespace {

thread_local std::string last_error;

ctsim_status from_errc(ctsim::Errc code) {
  switch (code) {
    case ctsim::Errc::kInvalidArgument: return CTSIM_E_INVALID_ARGUMENT;
    case ctsim::Errc::kPastEvent: return CTSIM_E_PAST_EVENT;
    case ctsim::Errc::kOutOfRange: return CTSIM_E_OUT_OF_RANGE;
    case ctsim::Errc::kParse: return CTSIM_E_PARSE;
    case ctsim::Errc::kInvalidScenario: return CTSIM_E_INVALID_SCENARIO;
    case ctsim::Errc::kIo: return CTSIM_E_IO;
    case ctsim::Errc::kRuntime: return CTSIM_E_RUNTIME;
  }
  return CTSIM_E_RUNTIME;
}

ctsim_status fail(ctsim_status s, std::string what) {
  last_error = std::move(what);
  return s;
}

template <typename F>
ctsim_status try_(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const ctsim::Error& e) {
    return fail(from_errc(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CTSIM_E_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(CTSIM_E_RUNTIME, e.what());
  } catch (...) {
    return fail(CTSIM_E_RUNTIME, "unknown error");
  }
}

ctsim_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf == nullptr || cap < s.size() + 1) {
    return fail(CTSIM_E_BUFFER_TOO_SMALL, "buffer needs " + std::to_string(s.size() + 1) + " bytes");
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return CTSIM_OK;
}

double or_nan(const std::optional<double>& v) { return v ? *v : std::nan(""); }

ctsim_role role_of(const std::string& name) {
  using ctsim::MrcRole;
  if (name == ctsim::to_string(MrcRole::kLeader)) return CTSIM_ROLE_LEADER;
  if (name == ctsim::to_string(MrcRole::kCentralController)) return CTSIM_ROLE_CONTROLLER;
  if (name == ctsim::to_string(MrcRole::kCommandedDevice)) return CTSIM_ROLE_DEVICE;
  return CTSIM_ROLE_FOLLOWER;
}

#define CTSIM_REQUIRE(p) \
  if ((p) == nullptr) return fail(CTSIM_E_NULL, #p " is null")

}  // namespace

extern "C" {

const char* ctsim_version(void) { return CTSIM_VERSION; }

const char* ctsim_status_name(ctsim_status status) {
  switch (status) {
    case CTSIM_OK: return "ok";
    case CTSIM_E_INVALID_ARGUMENT: return "invalid argument";
    case CTSIM_E_PAST_EVENT: return "event in the past";
    case CTSIM_E_OUT_OF_RANGE: return "out of range";
    case CTSIM_E_PARSE: return "parse error";
    case CTSIM_E_INVALID_SCENARIO: return "invalid scenario";
    case CTSIM_E_IO: return "i/o error";
    case CTSIM_E_RUNTIME: return "runtime error";
    case CTSIM_E_NULL: return "null argument";
    case CTSIM_E_BUFFER_TOO_SMALL: return "buffer too small";
    case CTSIM_E_BAD_FRAME: return "bad frame";
  }
  return "unknown status";
}

const char* ctsim_last_error(void) { return last_error.c_str(); }

ctsim_status ctsim_scenario_load(const char* path, ctsim_scenario** out) {
  return try_([&] {
    CTSIM_REQUIRE(path);
    CTSIM_REQUIRE(out);
    *out = new ctsim_scenario{ctsim::load_scenario(path)};
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_parse(const char* text, ctsim_scenario** out) {
  return try_([&] {
    CTSIM_REQUIRE(text);
    CTSIM_REQUIRE(out);
    *out = new ctsim_scenario{ctsim::parse_scenario(text)};
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_set(ctsim_scenario* scenario, const char* key, const char* value) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    CTSIM_REQUIRE(key);
    CTSIM_REQUIRE(value);
    ctsim::set_field(scenario->value, key, value);
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_set_seed(ctsim_scenario* scenario, uint64_t seed) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    scenario->value.seed = seed;
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_use_full_durations(ctsim_scenario* scenario) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    scenario->value = ctsim::with_full_durations(scenario->value);
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_validate(const ctsim_scenario* scenario) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    ctsim::validate(scenario->value);
    return CTSIM_OK;
  });
}

ctsim_status ctsim_scenario_echo(const ctsim_scenario* scenario, char* buf, size_t cap,
                                 size_t* needed) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    return copy_out(ctsim::echo_scenario(scenario->value), buf, cap, needed);
  });
}

void ctsim_scenario_free(ctsim_scenario* scenario) { delete scenario; }

ctsim_status ctsim_run_scenario(const ctsim_scenario* scenario, ctsim_run** out) {
  return try_([&] {
    CTSIM_REQUIRE(scenario);
    CTSIM_REQUIRE(out);
    *out = new ctsim_run{ctsim::run_scenario(scenario->value)};
    return CTSIM_OK;
  });
}

ctsim_status ctsim_run_summary_get(const ctsim_run* run, ctsim_run_summary* out) {
  return try_([&] {
    CTSIM_REQUIRE(run);
    CTSIM_REQUIRE(out);
    const auto& r = run->value;
    ctsim_run_summary s{};
    s.seed = r.report.seed;
    s.gp_ms = r.report.gp_ms;
    s.rounds = r.rounds.size();
    for (const auto& round : r.rounds) s.rounds_all_received += round.all_received() ? 1 : 0;
    s.events = r.events_processed;
    s.sync_mean_ms = r.report.sync.samples ? r.report.sync.mean_ms : std::nan("");
    s.sync_max_ms = r.report.sync.samples ? r.report.sync.max_ms : std::nan("");
    s.mean_pid_err_pct = or_nan(r.report.mean_pid_err(true));
    s.mean_avg_err_pct = or_nan(r.report.mean_avg_err(true));
    *out = s;
    return CTSIM_OK;
  });
}

ctsim_status ctsim_run_node_count(const ctsim_run* run, size_t* out) {
  return try_([&] {
    CTSIM_REQUIRE(run);
    CTSIM_REQUIRE(out);
    *out = run->value.report.nodes.size();
    return CTSIM_OK;
  });
}

ctsim_status ctsim_run_node_metrics(const ctsim_run* run, size_t node, ctsim_node_metrics* out) {
  return try_([&] {
    CTSIM_REQUIRE(run);
    CTSIM_REQUIRE(out);
    const auto& nodes = run->value.report.nodes;
    if (node >= nodes.size()) return fail(CTSIM_E_OUT_OF_RANGE, "node index out of range");
    const auto& n = nodes[node];
    ctsim_node_metrics m{};
    m.node = n.node;
    m.role = role_of(n.role);
    m.pid_err_pct = or_nan(n.pid_err_pct);
    m.trx_err_pct = or_nan(n.trx_err_pct);
    m.avg_err_pct = or_nan(n.avg_err_pct());
    m.abs_err_cm_s = or_nan(n.abs_err_cm_s);
    m.sync_mean_ms = or_nan(n.sync_mean_ms);
    m.sync_max_ms = or_nan(n.sync_max_ms);
    m.duty_cycle = n.duty_cycle;
    m.records = n.records;
    *out = m;
    return CTSIM_OK;
  });
}

ctsim_status ctsim_run_report_csv(const ctsim_run* run, char* buf, size_t cap, size_t* needed) {
  return try_([&] {
    CTSIM_REQUIRE(run);
    return copy_out(ctsim::to_csv(std::span<const ctsim::RunReport>(&run->value.report, 1)), buf,
                    cap, needed);
  });
}

ctsim_status ctsim_run_write(const ctsim_run* run, const char* dir) {
  return try_([&] {
    CTSIM_REQUIRE(run);
    CTSIM_REQUIRE(dir);
    ctsim::write_run(run->value, dir);
    return CTSIM_OK;
  });
}

void ctsim_run_free(ctsim_run* run) { delete run; }

ctsim_status ctsim_sweep_load(const char* path, ctsim_sweep** out) {
  return try_([&] {
    CTSIM_REQUIRE(path);
    CTSIM_REQUIRE(out);
    *out = new ctsim_sweep{ctsim::load_sweep(path)};
    return CTSIM_OK;
  });
}

ctsim_status ctsim_sweep_parse(const char* text, const char* base_dir, ctsim_sweep** out) {
  return try_([&] {
    CTSIM_REQUIRE(text);
    CTSIM_REQUIRE(out);
    *out = new ctsim_sweep{ctsim::parse_sweep(text, base_dir ? base_dir : ".")};
    return CTSIM_OK;
  });
}

ctsim_status ctsim_sweep_size(const ctsim_sweep* sweep, size_t* cells, size_t* runs) {
  return try_([&] {
    CTSIM_REQUIRE(sweep);
    if (cells) *cells = sweep->value.cell_count();
    if (runs) *runs = sweep->value.run_count();
    return CTSIM_OK;
  });
}

ctsim_status ctsim_sweep_run(const ctsim_sweep* sweep, unsigned jobs, int full,
                             const char* out_dir, size_t* failed_cells) {
  return try_([&] {
    CTSIM_REQUIRE(sweep);
    CTSIM_REQUIRE(out_dir);
    ctsim::SweepOptions opts;
    opts.jobs = jobs;
    opts.full = full != 0;
    const auto result = ctsim::run_sweep_to_dir(sweep->value, opts, out_dir);
    if (failed_cells) {
      *failed_cells = 0;
      for (const auto& c : result.cells) *failed_cells += c.errors.empty() ? 0 : 1;
    }
    return CTSIM_OK;
  });
}

void ctsim_sweep_free(ctsim_sweep* sweep) { delete sweep; }

uint16_t ctsim_crc16(const uint8_t* data, size_t len) {
  if (data == nullptr) len = 0;
  return ctsim::crc16_ccitt_false(std::span<const std::uint8_t>(data, len));
}

ctsim_status ctsim_slp_encode(uint8_t phase, uint8_t seq, const uint8_t* payload, size_t len,
                              uint8_t* out, size_t cap, size_t* written) {
  return try_([&] {
    if (len > 0) CTSIM_REQUIRE(payload);
    ctsim::SlpFrame f;
    f.phase = phase;
    f.seq = seq;
    if (len > 0) f.payload.assign(payload, payload + len);
    const auto bytes = ctsim::encode_frame(f);
    if (written) *written = bytes.size();
    if (out == nullptr || cap < bytes.size()) {
      return fail(CTSIM_E_BUFFER_TOO_SMALL, "frame needs " + std::to_string(bytes.size()) + " bytes");
    }
    std::memcpy(out, bytes.data(), bytes.size());
    return CTSIM_OK;
  });
}

ctsim_status ctsim_slp_decode(const uint8_t* bytes, size_t len, uint8_t* phase, uint8_t* seq,
                              uint8_t* payload, size_t cap, size_t* payload_len) {
  return try_([&] {
    if (len > 0) CTSIM_REQUIRE(bytes);
    const auto r = ctsim::decode_frame(std::span<const std::uint8_t>(bytes, len));
    if (!r.ok()) return fail(CTSIM_E_BAD_FRAME, ctsim::to_string(r.error));
    const auto& f = *r.frame;
    if (payload_len) *payload_len = f.payload.size();
    if (phase) *phase = f.phase;
    if (seq) *seq = f.seq;
    if (!f.payload.empty()) {
      if (payload == nullptr || cap < f.payload.size()) {
        return fail(CTSIM_E_BUFFER_TOO_SMALL, "payload needs " + std::to_string(f.payload.size()) + " bytes");
      }
      std::memcpy(payload, f.payload.data(), f.payload.size());
    }
    return CTSIM_OK;
  });
}

}  // extern "C"
