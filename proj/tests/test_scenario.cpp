#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctsim/error.hpp"
#include "ctsim/runner.hpp"
#include "ctsim/scenario.hpp"
#include "doctest.h"

using namespace ctsim;

namespace {

const std::string kMinimalLf =
    "name = lf\n"
    "mode = leader-follower\n"
    "lpp_ms = 600\n"
    "fpp_ms = 300\n"
    "schedule_speeds = 0,14,34,20\n"
    "segment_s = 6\n";

const std::string kPairLf =
    "name = pair\n"
    "mode = leader-follower\n"
    "topology = pair\n"
    "lpp_ms = 600\n"
    "fpp_ms = 300\n"
    "schedule = 0:14,10:34\n"
    "duration_s = 20\n";

std::optional<Errc> code_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string message_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Scenario lossless(Scenario s) {
  s.radio.p_loss = 0.0;
  s.radio.p_loss_ci = 0.0;
  return s;
}

}  // namespace

TEST_CASE("minimal leader-follower scenario") {
  const auto s = parse_scenario(kMinimalLf);
  CHECK(s.mode == Mode::kLeaderFollower);
  CHECK(s.effective_duration_s() == 24.0);
  CHECK(s.glossy_config().gp_us == 600'000);
  CHECK(s.pp_us_for(MrcRole::kLeader) == 600'000);
  CHECK(s.pp_us_for(MrcRole::kFollower) == 300'000);
  CHECK(s.target_schedule().value_at(7.0) == 14.0);
  CHECK(s.target_schedule().value_at(13.0) == 34.0);
  CHECK(s.build_topology().size() == 5);
}

TEST_CASE("gd not shorter than gp is rejected") {
  const auto text = kMinimalLf + "gd_ms = 700\n";
  CHECK(code_of(text) == Errc::kInvalidScenario);
  CHECK(message_of(text).find("gd < gp violated") != std::string::npos);
}

TEST_CASE("parser diagnostics") {
  CHECK(code_of(kMinimalLf + "colour = red\n") == Errc::kParse);
  CHECK(message_of(kMinimalLf + "colour = red\n").find("colour") != std::string::npos);
  CHECK(message_of(kMinimalLf + "colour = red\n").find("line 7") != std::string::npos);
  CHECK(message_of(kMinimalLf + "lpp_ms = 500\n").find("duplicate key 'lpp_ms'") != std::string::npos);
  CHECK(code_of(kMinimalLf + "n_tx = three\n") == Errc::kParse);
  CHECK(code_of(kMinimalLf + "early_off = maybe\n") == Errc::kParse);
  CHECK(code_of(kMinimalLf + "just words\n") == Errc::kParse);
  CHECK_FALSE(code_of("# only a comment\n" + kMinimalLf + "\n   \n"));
  CHECK_FALSE(code_of(kMinimalLf + "gd_ms = 10 # trailing comment\n"));
}

TEST_CASE("invariants are enforced") {
  CHECK(code_of(kMinimalLf + "pp_ms = 600\n") == Errc::kInvalidScenario);
  CHECK(code_of("mode = central-controller\nschedule_speeds = 1\n") == Errc::kInvalidScenario);
  CHECK(code_of(kMinimalLf + "schedule = 0:1\n") == Errc::kInvalidScenario);
  CHECK(code_of(kMinimalLf + "p_loss = 1.5\n") == Errc::kInvalidScenario);
  CHECK(code_of(kMinimalLf + "name = bad name\n"));
  CHECK(code_of(kMinimalLf + "topology = custom\npositions = 0:0,100:0\n") ==
        Errc::kInvalidScenario);
  CHECK(message_of(kMinimalLf + "topology = custom\npositions = 0:0,100:0\n").find("connected") !=
        std::string::npos);
  CHECK(code_of(kMinimalLf + "topology = custom\npositions = 0:0,0:0\n") == Errc::kInvalidScenario);
  CHECK_FALSE(code_of(kMinimalLf + "topology = custom\npositions = 0:0,10:0\n"));
  CHECK(code_of(kMinimalLf + "coordinator = 9\n") == Errc::kInvalidScenario);
  CHECK(code_of(kMinimalLf + "handover_margin_ms = 10\n") == Errc::kInvalidScenario);
  CHECK(code_of(kMinimalLf + "gp_ms = 30000\n") == Errc::kInvalidScenario);
}

TEST_CASE("echo is lossless for every key") {
  auto s = parse_scenario(kMinimalLf + "ki = 0.7\np_loss = 0.125\ntau_s = 0.33\n");
  const auto echo = echo_scenario(s);
  const auto again = parse_scenario(echo);
  CHECK(echo_scenario(again) == echo);
  // Unset optional fields are left out.
  for (const auto& key : scenario_keys()) {
    if (key == "positions" || key == "schedule" || key == "pp_ms") continue;
    CAPTURE(key);
    CHECK(("\n" + echo).find("\n" + key + " = ") != std::string::npos);
  }
  CHECK(again.gains.ki == 0.7);
  CHECK(again.radio.p_loss == 0.125);
  CHECK(again.plant.tau_s == 0.33);
}

TEST_CASE("shipped scenario files load and echo cleanly") {
  for (const auto& entry : std::filesystem::directory_iterator(CTSIM_CONFIG_DIR)) {
    if (entry.path().extension() != ".scn") continue;
    CAPTURE(entry.path().string());
    const auto s = load_scenario(entry.path());
    CHECK(echo_scenario(parse_scenario(echo_scenario(s))) == echo_scenario(s));
  }
  CHECK(code_of(""));
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.scn"), Error);
}

TEST_CASE("full durations replace the scaled ones") {
  auto s = parse_scenario(kMinimalLf + "full_segment_s = 12\n");
  CHECK(s.effective_duration_s() == 24.0);
  CHECK(with_full_durations(s).effective_duration_s() == 48.0);
  auto t = parse_scenario(kPairLf + "full_duration_s = 60\n");
  CHECK(with_full_durations(t).effective_duration_s() == 60.0);
}

TEST_CASE("leader-follower run produces a complete report") {
  const auto s = parse_scenario(kMinimalLf);
  const auto run = run_scenario(s);
  REQUIRE(run.report.nodes.size() == 5);
  CHECK(run.report.run_id == "lf-s1");
  CHECK(run.nodes[0].role == MrcRole::kLeader);
  for (std::uint32_t i = 1; i < 5; ++i) CHECK(run.nodes[i].role == MrcRole::kFollower);
  for (const auto& n : run.report.nodes) {
    CHECK(n.duty_cycle == doctest::Approx(20.0 / 600.0).epsilon(1e-9));
    CHECK(n.duty_cycle > 0.0);
    CHECK(n.duty_cycle < 1.0);
    REQUIRE(n.sync_mean_ms);
    CHECK(*n.sync_mean_ms < 10.0);
    if (n.pid_err_pct) CHECK(*n.pid_err_pct >= 0.0);
    if (n.trx_err_pct) CHECK(*n.trx_err_pct >= 0.0);
  }
  CHECK_FALSE(run.report.nodes[0].trx_err_pct);
  CHECK(run.report.nodes[1].trx_err_pct);
  for (const auto& nr : run.nodes) {
    REQUIRE(nr.records.size() >= 30);
    for (std::size_t i = 1; i < nr.records.size(); ++i)
      CHECK(nr.records[i].global_time_us > nr.records[i - 1].global_time_us);
  }
}

TEST_CASE("runs are deterministic in the seed") {
  const auto s = parse_scenario(kMinimalLf);
  const auto a = run_scenario(s);
  const auto b = run_scenario(s);
  std::vector<RunReport> ra{a.report}, rb{b.report};
  CHECK(to_csv(ra) == to_csv(rb));
  CHECK(a.trace_log() == b.trace_log());
  CHECK(a.events_processed == b.events_processed);

  auto s2 = s;
  s2.seed = 2;
  const auto c = run_scenario(s2);
  CHECK(c.trace_log() != a.trace_log());
}

TEST_CASE("followers receive exactly the previous round's handover") {
  const auto run = run_scenario(lossless(parse_scenario(kPairLf)));
  const auto& leader = run.nodes[0].handover_trace;
  const auto& rx = run.nodes[1].rx_trace;
  REQUIRE(rx.size() >= 30);
  for (const auto& v : rx) {
    REQUIRE(v.round_seq >= 1);
    const auto it = std::find_if(leader.begin(), leader.end(),
                                 [&](const RoundValue& h) { return h.round_seq == v.round_seq - 1; });
    REQUIRE(it != leader.end());
    CHECK(it->value == v.value);
  }
}

TEST_CASE("one leader PID update per flood payload when LPP equals GP") {
  const auto run = run_scenario(lossless(parse_scenario(kPairLf)));
  const auto& pid = run.nodes[0].pid_trace;
  const auto& ho = run.nodes[0].handover_trace;
  for (std::size_t i = 1; i < ho.size(); ++i) {
    const auto n = std::count_if(pid.begin(), pid.end(), [&](const PidSample& p) {
      return ho[i - 1].at < p.at && p.at <= ho[i].at;
    });
    CHECK(n == 1);
  }
}

TEST_CASE("slow leader floods stale speeds for up to three rounds") {
  auto s = lossless(parse_scenario(kPairLf));
  s.lpp_ms = 2400.0;
  const auto run = run_scenario(s);
  const auto& pid = run.nodes[0].pid_trace;
  const auto& ho = run.nodes[0].handover_trace;
  // Index of the PID update each handover carries.
  std::vector<long> source;
  for (const auto& h : ho) {
    source.push_back(std::count_if(pid.begin(), pid.end(),
                                   [&](const PidSample& p) { return p.at <= h.at; }));
  }
  std::size_t run_len = 1;
  std::size_t longest = 1;
  for (std::size_t i = 1; i < source.size(); ++i) {
    run_len = source[i] == source[i - 1] ? run_len + 1 : 1;
    longest = std::max(longest, run_len);
  }
  CHECK(longest == 4);
}

TEST_CASE("faster follower loops shrink the tracking error") {
  std::vector<double> trx;
  for (double fpp : {1200.0, 600.0, 300.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto s = lossless(parse_scenario(kPairLf));
      s.fpp_ms = fpp;
      s.seed = seed;
      sum += *run_scenario(s).report.mean_trx_err();
    }
    trx.push_back(sum / 5.0);
  }
  CHECK(trx[0] > 0.0);
  CHECK(trx[0] > trx[1]);
  CHECK(trx[1] > trx[2]);
}

TEST_CASE("packet loss raises the error against the target") {
  auto base = parse_scenario(kMinimalLf);
  base.segment_s = 12.0;
  double clean_pid = 0.0, lossy_pid = 0.0;
  double clean_trx = 0.0, lossy_trx = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto a = lossless(base);
    a.seed = seed;
    const auto ra = run_scenario(a).report;
    clean_pid += *ra.mean_pid_err(true);
    clean_trx += *ra.mean_trx_err();
    auto b = base;
    b.seed = seed;
    b.radio.p_loss = 0.5;
    b.radio.p_loss_ci = 0.5;
    const auto rb = run_scenario(b).report;
    lossy_pid += *rb.mean_pid_err(true);
    lossy_trx += *rb.mean_trx_err();
  }
  CHECK(lossy_pid > clean_pid);
  // Followers hold the last value they heard, so fewer updates leave less
  // gap to the received speed.
  CHECK(lossy_trx < clean_trx);
}

TEST_CASE("commanded devices pick up a schedule step within one GP and one PP") {
  auto s = lossless(parse_scenario(
      "name = cc\nmode = central-controller\npp_ms = 600\nmobility = false\n"
      "schedule = 0:14,20:34\nduration_s = 30\n"));
  const auto run = run_scenario(s);
  for (std::uint32_t i = 1; i < 5; ++i) {
    const auto& pid = run.nodes[i].pid_trace;
    const auto it = std::find_if(pid.begin(), pid.end(),
                                 [](const PidSample& p) { return p.setpoint == 34.0; });
    REQUIRE(it != pid.end());
    // Controller time starts at its own local clock, so allow its offset.
    CHECK(it->at.seconds() <= 20.0 + 0.6 + 0.6 + 0.6);
    CHECK(it->at.seconds() >= 20.0 - 1.0);
  }
  CHECK_FALSE(run.report.nodes[0].pid_err_pct);
  CHECK(run.nodes[0].role == MrcRole::kCentralController);
  CHECK(run.nodes[2].role == MrcRole::kCommandedDevice);
}

TEST_CASE("without jitter or drift the CCU clocks agree to the microsecond") {
  auto s = lossless(parse_scenario(kPairLf));
  s.serial.jitter_us = 0;
  s.serial.ccu_poll_us = 0;
  s.drift_ppm_max = 0.0;
  const auto run = run_scenario(s);
  CHECK(run.report.sync.samples > 20);
  CHECK(run.report.sync.max_ms <= 0.002);
}

TEST_CASE("static nodes keep millisecond sync at short and long periods") {
  std::vector<double> means;
  for (double gp : {250.0, 2000.0}) {
    auto s = parse_scenario(
        "name = sync\nmode = central-controller\npp_ms = 600\nmobility = false\n"
        "schedule_speeds = 14\nsegment_s = 1000\n");
    s.gp_ms = gp;
    s.duration_s = 200 * gp / 1000.0;
    const auto run = run_scenario(s);
    CHECK(run.report.sync.mean_ms <= 10.0);
    CHECK(run.report.sync.max_ms <= 15.0);
    means.push_back(run.report.sync.mean_ms);
  }
  CHECK(std::max(means[0], means[1]) <= 2.0 * std::min(means[0], means[1]));
}

TEST_CASE("run outputs land on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "ctsim_test_run";
  std::filesystem::remove_all(dir);
  const auto run = run_scenario(parse_scenario(kMinimalLf));
  write_run(run, dir);
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(dir / "config.echo"));
  CHECK(std::filesystem::exists(dir / "trace" / "lf-s1.log"));
  const auto rerun = run_scenario(load_scenario(dir / "config.echo"));
  std::vector<RunReport> r{rerun.report};
  CHECK(to_csv(r) == slurp(dir / "report.csv"));
  std::filesystem::remove_all(dir);
}
