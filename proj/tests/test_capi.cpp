#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "ctsim/ctsim.h"
#include "doctest.h"

namespace {

const std::string kConfigs = CTSIM_CONFIG_DIR;

const char* kPair =
    "name = capi\n"
    "mode = central-controller\n"
    "topology = pair\n"
    "pp_ms = 600\n"
    "schedule_speeds = 20\n"
    "segment_s = 6\n";

std::string echo_of(const ctsim_scenario* sc) {
  size_t need = 0;
  REQUIRE(ctsim_scenario_echo(sc, nullptr, 0, &need) == CTSIM_E_BUFFER_TOO_SMALL);
  std::string text(need, '\0');
  REQUIRE(ctsim_scenario_echo(sc, text.data(), text.size(), nullptr) == CTSIM_OK);
  text.resize(need - 1);
  return text;
}

std::string csv_of(const ctsim_run* run) {
  size_t need = 0;
  ctsim_run_report_csv(run, nullptr, 0, &need);
  std::string text(need, '\0');
  REQUIRE(ctsim_run_report_csv(run, text.data(), text.size(), nullptr) == CTSIM_OK);
  text.resize(need - 1);
  return text;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::strlen(ctsim_version()) > 0);
  CHECK(std::string(ctsim_status_name(CTSIM_OK)) == "ok");
  CHECK(std::string(ctsim_status_name(CTSIM_E_PARSE)) == "parse error");
  CHECK(std::string(ctsim_status_name(static_cast<ctsim_status>(99))) == "unknown status");
}

TEST_CASE("null arguments are reported, not dereferenced") {
  ctsim_scenario* sc = nullptr;
  CHECK(ctsim_scenario_parse(nullptr, &sc) == CTSIM_E_NULL);
  CHECK(ctsim_scenario_parse(kPair, nullptr) == CTSIM_E_NULL);
  CHECK(ctsim_run_scenario(nullptr, nullptr) == CTSIM_E_NULL);
  CHECK(ctsim_scenario_validate(nullptr) == CTSIM_E_NULL);
  ctsim_scenario_free(nullptr);
  ctsim_run_free(nullptr);
  ctsim_sweep_free(nullptr);
}

TEST_CASE("parse errors carry a message") {
  ctsim_scenario* sc = nullptr;
  CHECK(ctsim_scenario_parse("mode = sideways\n", &sc) == CTSIM_E_PARSE);
  CHECK(sc == nullptr);
  CHECK(std::strlen(ctsim_last_error()) > 0);

  CHECK(ctsim_scenario_load("/nonexistent/x.scn", &sc) == CTSIM_E_IO);
  CHECK(ctsim_scenario_parse("name = x\nmode = central-controller\n", &sc) ==
        CTSIM_E_INVALID_SCENARIO);
}

TEST_CASE("set, validate and echo") {
  ctsim_scenario* sc = nullptr;
  REQUIRE(ctsim_scenario_parse(kPair, &sc) == CTSIM_OK);
  CHECK(ctsim_scenario_set(sc, "gp_ms", "400") == CTSIM_OK);
  CHECK(ctsim_scenario_set(sc, "no_such_key", "1") == CTSIM_E_PARSE);
  CHECK(ctsim_scenario_set(sc, "gp_ms", "abc") == CTSIM_E_PARSE);
  CHECK(ctsim_scenario_validate(sc) == CTSIM_OK);
  CHECK(ctsim_scenario_set(sc, "gd_ms", "500") == CTSIM_OK);
  CHECK(ctsim_scenario_validate(sc) == CTSIM_E_INVALID_SCENARIO);
  CHECK(ctsim_scenario_set(sc, "gd_ms", "20") == CTSIM_OK);

  const std::string echo = echo_of(sc);
  CHECK(echo.find("gp_ms = 400\n") != std::string::npos);
  char tiny[4];
  size_t need = 0;
  CHECK(ctsim_scenario_echo(sc, tiny, sizeof tiny, &need) == CTSIM_E_BUFFER_TOO_SMALL);
  CHECK(need == echo.size() + 1);

  ctsim_scenario* again = nullptr;
  REQUIRE(ctsim_scenario_parse(echo.c_str(), &again) == CTSIM_OK);
  CHECK(echo_of(again) == echo);
  ctsim_scenario_free(again);
  ctsim_scenario_free(sc);
}

TEST_CASE("a run exposes summary, node metrics and a report") {
  ctsim_scenario* sc = nullptr;
  REQUIRE(ctsim_scenario_parse(kPair, &sc) == CTSIM_OK);
  REQUIRE(ctsim_scenario_set_seed(sc, 11) == CTSIM_OK);
  ctsim_run* run = nullptr;
  REQUIRE(ctsim_run_scenario(sc, &run) == CTSIM_OK);

  ctsim_run_summary sum{};
  REQUIRE(ctsim_run_summary_get(run, &sum) == CTSIM_OK);
  CHECK(sum.seed == 11);
  CHECK(sum.gp_ms == 600.0);
  CHECK(sum.rounds > 0);
  CHECK(sum.rounds_all_received <= sum.rounds);
  CHECK(sum.events > 0);
  CHECK(std::isfinite(sum.sync_mean_ms));

  size_t n = 0;
  REQUIRE(ctsim_run_node_count(run, &n) == CTSIM_OK);
  REQUIRE(n == 2);
  ctsim_node_metrics m{};
  REQUIRE(ctsim_run_node_metrics(run, 0, &m) == CTSIM_OK);
  CHECK(m.role == CTSIM_ROLE_CONTROLLER);
  CHECK(std::isnan(m.pid_err_pct));
  REQUIRE(ctsim_run_node_metrics(run, 1, &m) == CTSIM_OK);
  CHECK(m.role == CTSIM_ROLE_DEVICE);
  CHECK(std::isfinite(m.pid_err_pct));
  CHECK(m.duty_cycle == doctest::Approx(20.0 / 600.0).epsilon(1e-9));
  CHECK(m.records > 0);
  CHECK(ctsim_run_node_metrics(run, 2, &m) == CTSIM_E_OUT_OF_RANGE);

  const std::string csv = csv_of(run);
  CHECK(csv.rfind("run_id,seed,gp_ms,", 0) == 0);

  // Same scenario, same seed, same bytes.
  ctsim_run* twin = nullptr;
  REQUIRE(ctsim_run_scenario(sc, &twin) == CTSIM_OK);
  CHECK(csv_of(twin) == csv);
  ctsim_run_free(twin);

  const auto dir = std::filesystem::temp_directory_path() / "ctsim_test_capi_run";
  std::filesystem::remove_all(dir);
  REQUIRE(ctsim_run_write(run, dir.c_str()) == CTSIM_OK);
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::exists(dir / "config.echo"));
  CHECK(std::filesystem::is_directory(dir / "trace"));
  std::filesystem::remove_all(dir);

  ctsim_run_free(run);
  ctsim_scenario_free(sc);
}

TEST_CASE("sweeps run through the C interface") {
  const char* spec =
      "name = capi-sweep\n"
      "base = central_controller.scn\n"
      "set.segment_s = 4\n"
      "axis.gp_ms = 10,600\n"
      "master_seed = 3\n";
  ctsim_sweep* sw = nullptr;
  REQUIRE(ctsim_sweep_parse(spec, kConfigs.c_str(), &sw) == CTSIM_OK);
  size_t cells = 0;
  size_t runs = 0;
  REQUIRE(ctsim_sweep_size(sw, &cells, &runs) == CTSIM_OK);
  CHECK(cells == 2);
  CHECK(runs == 2);

  const auto dir = std::filesystem::temp_directory_path() / "ctsim_test_capi_sweep";
  std::filesystem::remove_all(dir);
  size_t failed = 99;
  REQUIRE(ctsim_sweep_run(sw, 2, 0, dir.c_str(), &failed) == CTSIM_OK);
  CHECK(failed == 1);
  for (const char* f : {"report.csv", "cells.csv", "heatmap.csv", "config.echo"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  std::filesystem::remove_all(dir);
  ctsim_sweep_free(sw);

  CHECK(ctsim_sweep_load("/nonexistent/x.sweep", &sw) == CTSIM_E_IO);
}

TEST_CASE("frame codec through the C interface") {
  const std::uint8_t check[] = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  CHECK(ctsim_crc16(check, sizeof check) == 0x29B1);

  const std::uint8_t payload[] = {0x01, 0x02, 0x03};
  std::uint8_t frame[64];
  size_t written = 0;
  REQUIRE(ctsim_slp_encode(2, 9, payload, sizeof payload, frame, sizeof frame, &written) ==
          CTSIM_OK);
  CHECK(written == 4 + sizeof payload + 2);
  CHECK(ctsim_slp_encode(2, 9, payload, sizeof payload, frame, 4, &written) ==
        CTSIM_E_BUFFER_TOO_SMALL);

  std::uint8_t phase = 0;
  std::uint8_t seq = 0;
  std::uint8_t out[16];
  size_t out_len = 0;
  REQUIRE(ctsim_slp_encode(2, 9, payload, sizeof payload, frame, sizeof frame, &written) ==
          CTSIM_OK);
  REQUIRE(ctsim_slp_decode(frame, written, &phase, &seq, out, sizeof out, &out_len) == CTSIM_OK);
  CHECK(phase == 2);
  CHECK(seq == 9);
  CHECK(out_len == sizeof payload);
  CHECK(std::memcmp(out, payload, sizeof payload) == 0);

  frame[written - 1] ^= 0x10;
  CHECK(ctsim_slp_decode(frame, written, &phase, &seq, out, sizeof out, &out_len) ==
        CTSIM_E_BAD_FRAME);
}
