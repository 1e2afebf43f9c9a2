#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctsim/ctsim.h"

namespace {

int report_failure(const char* what, ctsim_status s) {
  std::fprintf(stderr, "ctsim: %s: %s: %s\n", what, ctsim_status_name(s), ctsim_last_error());
  return 2;
}

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

int cmd_run(const std::string& scenario_path, const std::vector<std::uint64_t>& seed,
            const std::string& out, bool full) {
  ctsim_scenario* sc = nullptr;
  ctsim_status s = ctsim_scenario_load(scenario_path.c_str(), &sc);
  if (s != CTSIM_OK) return report_failure("load scenario", s);
  if (!seed.empty()) ctsim_scenario_set_seed(sc, seed.front());
  if (full) ctsim_scenario_use_full_durations(sc);

  ctsim_run* run = nullptr;
  s = ctsim_run_scenario(sc, &run);
  ctsim_scenario_free(sc);
  if (s != CTSIM_OK) return report_failure("run", s);

  s = ctsim_run_write(run, out.c_str());
  if (s != CTSIM_OK) {
    ctsim_run_free(run);
    return report_failure("write outputs", s);
  }

  ctsim_run_summary sum{};
  ctsim_run_summary_get(run, &sum);
  std::printf("seed %llu  gp %.1f ms  rounds %llu (%llu complete)  events %llu\n",
              static_cast<unsigned long long>(sum.seed), sum.gp_ms,
              static_cast<unsigned long long>(sum.rounds),
              static_cast<unsigned long long>(sum.rounds_all_received),
              static_cast<unsigned long long>(sum.events));
  std::printf("sync error  mean %s ms  max %s ms\n", num(sum.sync_mean_ms).c_str(),
              num(sum.sync_max_ms).c_str());
  size_t n = 0;
  ctsim_run_node_count(run, &n);
  std::printf("%-5s %-11s %9s %9s %9s %10s\n", "node", "role", "pid_err%", "trx_err%", "avg%", "duty");
  static const char* roles[] = {"leader", "follower", "controller", "device"};
  for (size_t i = 0; i < n; ++i) {
    ctsim_node_metrics m{};
    ctsim_run_node_metrics(run, i, &m);
    std::printf("%-5u %-11s %9s %9s %9s %10.6f\n", m.node, roles[m.role], num(m.pid_err_pct).c_str(),
                num(m.trx_err_pct).c_str(), num(m.avg_err_pct).c_str(), m.duty_cycle);
  }
  std::printf("outputs written to %s\n", out.c_str());
  ctsim_run_free(run);
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& out, unsigned jobs, bool full) {
  ctsim_sweep* sw = nullptr;
  ctsim_status s = ctsim_sweep_load(spec_path.c_str(), &sw);
  if (s != CTSIM_OK) return report_failure("load sweep", s);
  size_t cells = 0;
  size_t runs = 0;
  ctsim_sweep_size(sw, &cells, &runs);
  std::printf("sweep: %zu cells, %zu runs, %u job%s\n", cells, runs, jobs, jobs == 1 ? "" : "s");
  std::fflush(stdout);
  size_t failed = 0;
  s = ctsim_sweep_run(sw, jobs, full ? 1 : 0, out.c_str(), &failed);
  ctsim_sweep_free(sw);
  if (s != CTSIM_OK) return report_failure("sweep", s);
  std::printf("done: %zu failed cell%s; outputs written to %s\n", failed, failed == 1 ? "" : "s",
              out.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_check(const std::string& scenario_path) {
  ctsim_scenario* sc = nullptr;
  ctsim_status s = ctsim_scenario_load(scenario_path.c_str(), &sc);
  if (s != CTSIM_OK) return report_failure("load scenario", s);
  size_t need = 0;
  ctsim_scenario_echo(sc, nullptr, 0, &need);
  std::string text(need, '\0');
  ctsim_scenario_echo(sc, text.data(), text.size(), nullptr);
  std::fputs(text.c_str(), stdout);
  ctsim_scenario_free(sc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concurrent-transmission multi-robot coordination simulator"};
  app.set_version_flag("--version", ctsim_version());
  app.require_subcommand(1);

  std::string scenario;
  std::vector<std::uint64_t> seed;
  std::string out;
  bool full = false;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed")->expected(1);
  run->add_option("--out", out, "Output directory")->required();
  run->add_flag("--full", full, "Use the long experiment durations");

  std::string spec;
  unsigned jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("--spec", spec, "Sweep specification")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Cells run in parallel")->check(CLI::Range(1u, 256u));
  sweep->add_flag("--full", full, "Use the long experiment durations");

  auto* check = app.add_subcommand("check", "Validate a scenario and print it with defaults filled in");
  check->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(scenario, seed, out, full);
  if (*sweep) return cmd_sweep(spec, out, jobs, full);
  return cmd_check(scenario);
}
