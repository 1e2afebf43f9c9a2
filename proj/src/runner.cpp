#include "ctsim/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "ctsim/error.hpp"
#include "ctsim/kernel.hpp"

namespace ctsim {

namespace {

NodeClock draw_clock(RngStreams& rng, const char* purpose, std::uint32_t node, const Scenario& s) {
  auto& stream = rng.stream(purpose, node);
  NodeClock c;
  c.node_id = node;
  c.drift_ppm = stream.uniform(-s.drift_ppm_max, s.drift_ppm_max);
  c.offset_us = static_cast<std::int64_t>(stream.uniform(0.0, s.clock_offset_max_ms * 1000.0));
  return c;
}

MrcRole role_of(const Scenario& s, std::uint32_t node) {
  if (s.mode == Mode::kCentralController) {
    return node == s.coordinator ? MrcRole::kCentralController : MrcRole::kCommandedDevice;
  }
  return node == s.coordinator ? MrcRole::kLeader : MrcRole::kFollower;
}

void append(std::string& out, const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  out += buf;
}

}  // namespace

std::string default_run_id(const Scenario& scenario) {
  return scenario.name + "-s" + std::to_string(scenario.seed);
}

RunOutput run_scenario(const Scenario& scenario, const std::string& run_id) {
  validate(scenario);
  const Scenario& s = scenario;

  RngStreams rng(s.seed);
  Kernel kernel;
  Topology topology = s.build_topology();
  const auto n = static_cast<std::uint32_t>(topology.size());

  std::vector<NodeClock> nu_clocks;
  std::vector<NodeClock> ccu_clocks;
  for (std::uint32_t i = 0; i < n; ++i) {
    nu_clocks.push_back(draw_clock(rng, "nu-clock", i, s));
    ccu_clocks.push_back(draw_clock(rng, "ccu-clock", i, s));
  }

  const GlossyConfig gcfg = s.glossy_config();
  GlossyNetwork network(kernel, topology, nu_clocks, gcfg, s.radio, s.coordinator, rng);

  const TargetSchedule schedule = s.target_schedule();
  std::vector<std::unique_ptr<Ccu>> ccus;
  for (std::uint32_t i = 0; i < n; ++i) {
    CcuConfig cfg;
    cfg.role = role_of(s, i);
    cfg.pp_us = s.pp_us_for(cfg.role);
    cfg.gains = s.gains;
    cfg.u_min = s.u_min;
    cfg.u_max = s.u_max;
    cfg.plant = s.plant;
    cfg.anchor = topology.position(i);
    cfg.physics_step_us = s.physics_step_us;
    ccus.push_back(std::make_unique<Ccu>(kernel, i, ccu_clocks[i], cfg, schedule, schedule, rng));
  }

  std::vector<std::unique_ptr<SlpLink>> links;
  const SlpSchedule slp = s.slp_schedule();
  for (std::uint32_t i = 0; i < n; ++i) {
    links.push_back(std::make_unique<SlpLink>(kernel, network, i, ccu_clocks[i], *ccus[i], slp,
                                              s.serial, rng));
  }
  network.set_round_end_hook([&links](const RoundResult& r) { links[r.node]->on_round_end(r); });
  if (s.mobility) {
    network.set_position_refresh([&](VirtualTime t) {
      for (std::uint32_t i = 0; i < n; ++i) {
        if (ccus[i]->mobile()) topology.set_position(i, ccus[i]->position_at(t));
      }
    });
  }

  for (auto& c : ccus) c->start();
  network.start(VirtualTime{static_cast<std::uint64_t>(std::llround(s.first_round_ms * 1000.0))});
  const auto end = VirtualTime{static_cast<std::uint64_t>(std::llround(s.effective_duration_s() * 1e6))};
  kernel.run_until(end);

  RunOutput out;
  out.scenario = s;
  out.rounds = network.rounds();
  out.events_processed = kernel.processed_total();

  std::vector<NodeHiLog> hi_logs;
  for (std::uint32_t i = 0; i < n; ++i) {
    const Ccu& c = *ccus[i];
    NodeRun nr;
    nr.node = i;
    nr.role = c.role();
    nr.nu_clock = nu_clocks[i];
    nr.ccu_clock = ccu_clocks[i];
    nr.mobile = c.mobile();
    if (c.robot()) nr.final_pose = c.robot()->pose;
    nr.records = c.records();
    nr.hi_stamps = c.hi_stamps();
    nr.pid_trace = c.pid_trace();
    nr.rx_trace = c.rx_trace();
    nr.handover_trace = c.handover_trace();
    nr.link = links[i]->stats();
    nr.phases = links[i]->phase_trace();
    nr.wire = links[i]->wire_trace();
    nr.glossy = network.node(i);
    hi_logs.push_back({i, ccu_clocks[i], c.hi_stamps()});
    out.nodes.push_back(std::move(nr));
  }

  RunReport& rep = out.report;
  rep.run_id = run_id.empty() ? default_run_id(s) : run_id;
  rep.seed = s.seed;
  rep.gp_ms = static_cast<double>(gcfg.gp_us) / 1000.0;
  if (s.mode == Mode::kCentralController) {
    rep.pp_ms = s.pp_ms;
  } else {
    rep.lpp_ms = s.lpp_ms;
    rep.fpp_ms = s.fpp_ms;
  }
  rep.sync = sync_error(hi_logs);
  for (const auto& nr : out.nodes) {
    NodeReport r;
    r.node = nr.node;
    r.role = to_string(nr.role);
    r.records = nr.records.size();
    if (nr.mobile) {
      r.pid_err_pct = pid_err(nr.records);
      r.trx_err_pct = trx_err(nr.records);
      r.abs_err_cm_s = abs_err(nr.records);
    }
    r.sync_mean_ms = rep.sync.node_mean_ms(nr.node);
    r.sync_max_ms = rep.sync.node_max_ms(nr.node);
    const auto rounds = nr.glossy.rounds_completed;
    if (rounds > 0) r.duty_cycle = duty_cycle(nr.glossy, rounds * gcfg.gp_us, gcfg.gp_us);
    rep.nodes.push_back(std::move(r));
  }
  return out;
}

std::string RunOutput::trace_log() const {
  std::string out;
  append(out, "# run %s seed %llu\n", report.run_id.c_str(),
         static_cast<unsigned long long>(report.seed));
  for (const auto& r : rounds) {
    std::size_t got = 0;
    for (auto t : r.first_rx_ns) got += t >= 0 ? 1 : 0;
    const auto done = r.completion_us();
    append(out,
           "round seq=%u start_us=%llu keep_alive=%d received=%zu/%zu completion_us=%s ci=%u "
           "capture=%u collisions=%u\n",
           r.round_seq, static_cast<unsigned long long>(r.start.ticks), r.keep_alive ? 1 : 0, got,
           r.first_rx_ns.size(), format_optional(done).c_str(), r.ci_receptions,
           r.capture_receptions, r.collisions);
  }
  for (const auto& nr : nodes) {
    append(out, "node id=%u role=%s nu_drift_ppm=%.6f nu_offset_us=%lld ccu_drift_ppm=%.6f ccu_offset_us=%lld\n",
           nr.node, to_string(nr.role), nr.nu_clock.drift_ppm,
           static_cast<long long>(nr.nu_clock.offset_us), nr.ccu_clock.drift_ppm,
           static_cast<long long>(nr.ccu_clock.offset_us));
    for (const auto& h : nr.hi_stamps) {
      append(out, "hi node=%u round=%u ccu_local_us=%lld\n", nr.node, h.round_seq,
             static_cast<long long>(h.ccu_local_us));
    }
    for (const auto& v : nr.rx_trace) {
      append(out, "rx node=%u round=%u t_us=%llu speed=%s\n", nr.node, v.round_seq,
             static_cast<unsigned long long>(v.at.ticks), format_number(v.value).c_str());
    }
    for (const auto& v : nr.handover_trace) {
      append(out, "handover node=%u round=%u t_us=%llu speed=%s\n", nr.node, v.round_seq,
             static_cast<unsigned long long>(v.at.ticks), format_number(v.value).c_str());
    }
    for (const auto& r : nr.records) {
      append(out, "record node=%u round=%u t_us=%llu local_us=%lld target=%s measured=%s rx=%s\n",
             r.node_id, r.round_seq, static_cast<unsigned long long>(r.global_time_us),
             static_cast<long long>(r.local_time_us), format_number(r.target_speed).c_str(),
             format_number(r.measured_speed).c_str(),
             format_number(r.last_rx_payload_speed).c_str());
    }
    const auto& l = nr.link;
    append(out,
           "link node=%u sent=%llu ok=%llu bad_sof=%llu bad_length=%llu bad_crc=%llu timeouts=%llu "
           "rounds_skipped=%llu\n",
           nr.node, static_cast<unsigned long long>(l.frames_sent),
           static_cast<unsigned long long>(l.frames_ok), static_cast<unsigned long long>(l.bad_sof),
           static_cast<unsigned long long>(l.bad_length), static_cast<unsigned long long>(l.bad_crc),
           static_cast<unsigned long long>(l.timeouts),
           static_cast<unsigned long long>(l.rounds_skipped));
  }
  return out;
}

void write_run(const RunOutput& run, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "trace", ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + (dir / "trace").string() + ": " + ec.message());
  write_csv(std::span<const RunReport>(&run.report, 1), dir / "report.csv");
  auto write_text = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(Errc::kIo, "cannot write " + p.string());
    f << text;
    if (!f) throw Error(Errc::kIo, "write failed: " + p.string());
  };
  write_text(dir / "config.echo", echo_scenario(run.scenario));
  write_text(dir / "trace" / (run.report.run_id + ".log"), run.trace_log());
}

}  // namespace ctsim
