#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctsim/error.hpp"
#include "ctsim/sweep.hpp"
#include "doctest.h"

using namespace ctsim;

namespace {

const std::filesystem::path kConfigs = CTSIM_CONFIG_DIR;

const std::string kSmall =
    "name = small\n"
    "set.name = small\n"
    "set.mode = central-controller\n"
    "set.topology = pair\n"
    "set.pp_ms = 600\n"
    "set.schedule_speeds = 20\n"
    "set.segment_s = 6\n"
    "axis.gp_ms = 200,600\n"
    "axis.pp_ratio = 0.5,1,2\n"
    "repetitions = 2\n"
    "master_seed = 7\n";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t count_fields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ctsim_test_sweep_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("grid files expand to the expected cell counts") {
  const auto cc = load_sweep(kConfigs / "cc_grid.sweep");
  CHECK(cc.cell_count() == 50);
  CHECK(enumerate_cells(cc).size() == 50);

  const auto lf = load_sweep(kConfigs / "lf_grid.sweep");
  CHECK(lf.cell_count() == 9 * 5 * 5);

  const auto pp = load_sweep(kConfigs / "pp_study.sweep");
  CHECK(pp.cell_count() == 12 * 5);
  CHECK(pp.run_count() == 12 * 5 * 10);
}

TEST_CASE("range axes include both ends") {
  const auto spec = parse_sweep(kSmall + "axis.n_tx = 1:3:1\n");
  REQUIRE(spec.axes.size() == 3);
  CHECK(spec.axes[2].values == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("cells enumerate in row-major order") {
  const auto spec = parse_sweep(kSmall);
  const auto cells = enumerate_cells(spec);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0] == CellCoords{{"gp_ms", "200"}, {"pp_ratio", "0.5"}});
  CHECK(cells[1] == CellCoords{{"gp_ms", "200"}, {"pp_ratio", "1"}});
  CHECK(cells[3] == CellCoords{{"gp_ms", "600"}, {"pp_ratio", "0.5"}});
}

TEST_CASE("malformed sweep files are rejected") {
  CHECK_THROWS_AS(parse_sweep(kSmall + "axis.seed = 1,2\n"), Error);
  CHECK_THROWS_AS(parse_sweep(kSmall + "master_seed = x\n"), Error);
  CHECK_THROWS_AS(parse_sweep(kSmall + "bogus = 1\n"), Error);
  CHECK_THROWS_AS(load_sweep(kConfigs / "does_not_exist.sweep"), Error);
}

TEST_CASE("ratio axes scale the periods") {
  const auto spec = parse_sweep(kSmall);
  const auto cells = enumerate_cells(spec);
  const auto s = cell_scenario(spec, cells[5], 0, false);
  CHECK(s.gp_ms == 600.0);
  CHECK(*s.pp_ms == 1200.0);

  const auto lf = load_sweep(kConfigs / "lf_grid.sweep");
  const CellCoords c{{"gp_ms", "400"}, {"lpp_ratio", "2"}, {"fpp_ratio", "0.25"}};
  const auto t = cell_scenario(lf, c, 0, false);
  CHECK(*t.lpp_ms == 800.0);
  CHECK(*t.fpp_ms == 200.0);
}

TEST_CASE("cell seeds are distinct and depend only on coordinates") {
  const auto spec = parse_sweep(kSmall);
  std::set<std::uint64_t> seeds;
  for (const auto& c : enumerate_cells(spec)) {
    for (std::uint32_t r = 0; r < spec.repetitions; ++r) {
      seeds.insert(cell_seed(spec.master_seed, c, r));
      CHECK(cell_seed(spec.master_seed, c, r) == cell_seed(spec.master_seed, c, r));
    }
  }
  CHECK(seeds.size() == spec.run_count());
  const CellCoords c{{"gp_ms", "200"}};
  CHECK(cell_seed(1, c, 0) != cell_seed(2, c, 0));
}

TEST_CASE("execution order and thread count do not change results") {
  const auto spec = parse_sweep(kSmall);
  const auto reference = run_sweep(spec);
  const std::string expected = to_csv(reference.all_runs());

  std::vector<std::size_t> order(spec.cell_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937 gen(3);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(order.begin(), order.end(), gen);
    SweepOptions opt;
    opt.order = order;
    opt.jobs = 1 + static_cast<unsigned>(trial);
    const auto shuffled = run_sweep(spec, opt);
    CHECK(to_csv(shuffled.all_runs()) == expected);
    CHECK(shuffled.cells_csv() == reference.cells_csv());
  }
}

TEST_CASE("a failing cell is recorded and the rest still run") {
  // gp_ms = 10 is not longer than the 20 ms flood window.
  std::string text = kSmall;
  text.replace(text.find("axis.gp_ms = 200,600"), 20, "axis.gp_ms = 10,600");
  const auto spec = parse_sweep(text);
  const auto result = run_sweep(spec);
  std::size_t failed = 0;
  for (const auto& c : result.cells) {
    if (c.coords.front().second == "10") {
      CHECK(c.runs.empty());
      CHECK(c.errors.size() == spec.repetitions);
      CHECK(c.errors.front().find("gd < gp") != std::string::npos);
      ++failed;
    } else {
      CHECK(c.runs.size() == spec.repetitions);
      CHECK(c.errors.empty());
    }
  }
  CHECK(failed == 3);
  const auto rows = lines_of(result.cells_csv());
  CHECK(rows.size() == 1 + result.cells.size());
}

TEST_CASE("heatmap has one column per GP and one row per other combination") {
  const auto spec = parse_sweep(kSmall);
  const auto result = run_sweep(spec);
  const auto rows = lines_of(result.heatmap_csv());
  REQUIRE(rows.size() == 1 + 3);
  CHECK(rows[0] == "row,gp_ms=200,gp_ms=600");
  CHECK(rows[1].rfind("pp_ratio=0.5,", 0) == 0);
  for (const auto& r : rows) CHECK(count_fields(r) == 3);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find("NA") == std::string::npos);
}

TEST_CASE("sweep output directory holds every artefact") {
  const auto spec = parse_sweep(kSmall);
  const auto dir = scratch_dir("outputs");
  const auto result = run_sweep_to_dir(spec, {}, dir);
  for (const char* f : {"report.csv", "cells.csv", "heatmap.csv", "config.echo"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  std::size_t traces = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "trace")) ++traces;
  CHECK(traces == spec.run_count());

  const auto report = lines_of(slurp(dir / "report.csv"));
  CHECK(report[0] == kReportCsvHeader);
  CHECK(report.size() == 1 + spec.run_count() * 2);

  // The echo alone reproduces the sweep.
  const auto again = parse_sweep(slurp(dir / "config.echo"));
  CHECK(to_csv(run_sweep(again).all_runs()) == slurp(dir / "report.csv"));
  std::filesystem::remove_all(dir);
}
