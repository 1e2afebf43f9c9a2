#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ctsim/error.hpp"
#include "ctsim/radio.hpp"
#include "doctest.h"

using namespace ctsim;

namespace {

Transmission tx(std::uint32_t sender, std::vector<std::uint8_t> packet, std::int64_t start_ns) {
  Transmission t;
  t.sender = sender;
  t.packet = std::move(packet);
  t.start_ns = start_ns;
  t.airtime_us = airtime(t.packet.size());
  return t;
}

RadioParams lossless() {
  RadioParams p;
  p.p_loss = 0.0;
  p.p_loss_ci = 0.0;
  return p;
}

}  // namespace

TEST_CASE("airtime follows the 802.15.4 byte time") {
  CHECK_THROWS_AS(airtime(0), Error);
  CHECK(airtime(1) == 224);
  CHECK(airtime(10) == 512);
  CHECK(airtime(127) == 4256);
  try {
    airtime(128);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kOutOfRange);
  }
}

TEST_CASE("log-distance path loss") {
  CHECK(received_power({0, 0}, {1, 0}, 0.0) == doctest::Approx(-40.0));
  CHECK(received_power({0, 0}, {10, 0}, 0.0) == doctest::Approx(-70.0));
  CHECK(received_power({0, 0}, {0, 100}, 5.0) == doctest::Approx(5.0 - 40.0 - 60.0));
  CHECK_THROWS_AS(received_power({3, 4}, {3, 4}, 0.0), Error);
}

TEST_CASE("no in-range transmission is idle") {
  RngStream rng(1);
  const auto t = tx(0, {1, 2, 3}, 0);
  std::vector<Arrival> a{{&t, -60.0, false}};
  CHECK(resolve_reception(a, lossless(), rng).kind == ReceptionOutcome::Kind::kIdle);
  CHECK(resolve_reception(std::span<const Arrival>{}, lossless(), rng).kind ==
        ReceptionOutcome::Kind::kIdle);
}

TEST_CASE("single lossless sender is received") {
  RngStream rng(1);
  const auto t = tx(4, {9, 8}, 1000);
  std::vector<Arrival> a{{&t, -60.0, true}};
  const auto out = resolve_reception(a, lossless(), rng);
  REQUIRE(out.received());
  CHECK(out.via == ReceptionOutcome::Via::kSingle);
  CHECK(out.from == 4);
  CHECK(out.packet == t.packet);
  CHECK(out.rx_end_ns == 1000 + static_cast<std::int64_t>(airtime(2)) * 1000);
}

TEST_CASE("identical packets within the CI window interfere constructively") {
  RngStream rng(1);
  const auto a = tx(0, {7, 7, 7}, 0);
  const auto b = tx(1, {7, 7, 7}, 300);  // 0.3 us skew
  std::vector<Arrival> arr{{&a, -60.0, true}, {&b, -61.0, true}};
  const auto out = resolve_reception(arr, lossless(), rng);
  REQUIRE(out.received());
  CHECK(out.via == ReceptionOutcome::Via::kConstructive);
}

TEST_CASE("different payloads at equal power collide") {
  RngStream rng(1);
  const auto a = tx(0, {1}, 0);
  const auto b = tx(1, {2}, 0);
  std::vector<Arrival> arr{{&a, -60.0, true}, {&b, -60.0, true}};
  CHECK(resolve_reception(arr, lossless(), rng).kind == ReceptionOutcome::Kind::kCollision);
}

TEST_CASE("identical packets with 2 us skew and equal power collide") {
  RngStream rng(1);
  const auto a = tx(0, {5, 5}, 0);
  const auto b = tx(1, {5, 5}, 1000);
  const auto c = tx(2, {5, 5}, 2000);
  std::vector<Arrival> arr{{&a, -60.0, true}, {&b, -60.0, true}, {&c, -60.0, true}};
  CHECK(resolve_reception(arr, lossless(), rng).kind == ReceptionOutcome::Kind::kCollision);
}

TEST_CASE("capture needs the power margin and an early enough start") {
  RngStream rng(1);
  const auto strong = tx(0, {1, 1}, 100000);
  const auto weak1 = tx(1, {2, 2}, 0);
  const auto weak2 = tx(2, {3, 3}, 50000);
  // 3 dB over the sum of two -70 dBm signals is -64 dBm.
  {
    std::vector<Arrival> arr{{&strong, -63.9, true}, {&weak1, -70.0, true}, {&weak2, -70.0, true}};
    const auto out = resolve_reception(arr, lossless(), rng);
    REQUIRE(out.received());
    CHECK(out.via == ReceptionOutcome::Via::kCapture);
    CHECK(out.from == 0);
  }
  {
    std::vector<Arrival> arr{{&strong, -64.1, true}, {&weak1, -70.0, true}, {&weak2, -70.0, true}};
    CHECK(resolve_reception(arr, lossless(), rng).kind == ReceptionOutcome::Kind::kCollision);
  }
  {
    const auto late = tx(0, {1, 1}, 161000);
    std::vector<Arrival> arr{{&late, -50.0, true}, {&weak1, -70.0, true}};
    CHECK(resolve_reception(arr, lossless(), rng).kind == ReceptionOutcome::Kind::kCollision);
  }
  {
    RadioParams p = lossless();
    p.capture_enabled = false;
    std::vector<Arrival> arr{{&strong, -40.0, true}, {&weak1, -70.0, true}};
    CHECK(resolve_reception(arr, p, rng).kind == ReceptionOutcome::Kind::kCollision);
  }
}

TEST_CASE("disabling CI turns aligned identical packets into a collision or capture") {
  RngStream rng(1);
  RadioParams p = lossless();
  p.ci_enabled = false;
  const auto a = tx(0, {7}, 0);
  const auto b = tx(1, {7}, 0);
  std::vector<Arrival> equal{{&a, -60.0, true}, {&b, -60.0, true}};
  CHECK(resolve_reception(equal, p, rng).kind == ReceptionOutcome::Kind::kCollision);
  std::vector<Arrival> skewed{{&a, -50.0, true}, {&b, -60.0, true}};
  CHECK(resolve_reception(skewed, p, rng).via == ReceptionOutcome::Via::kCapture);
}

TEST_CASE("loss probabilities apply per reception") {
  RngStream rng(9);
  RadioParams p;
  p.p_loss = 0.01;
  p.p_loss_ci = 0.05;
  const auto a = tx(0, {1}, 0);
  const auto b = tx(1, {1}, 100);
  std::vector<Arrival> single{{&a, -60.0, true}};
  std::vector<Arrival> pair{{&a, -60.0, true}, {&b, -60.0, true}};
  int lost_single = 0;
  int lost_ci = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    lost_single += resolve_reception(single, p, rng).kind == ReceptionOutcome::Kind::kMissed;
    lost_ci += resolve_reception(pair, p, rng).kind == ReceptionOutcome::Kind::kMissed;
  }
  CHECK(lost_single / double(n) == doctest::Approx(0.01).epsilon(0.1));
  CHECK(lost_ci / double(n) == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("resolution is deterministic for a fixed random state") {
  RadioParams p;
  p.p_loss = 0.3;
  p.p_loss_ci = 0.3;
  const auto a = tx(0, {1}, 0);
  const auto b = tx(1, {1}, 200);
  std::vector<Arrival> arr{{&a, -60.0, true}, {&b, -62.0, true}};
  RngStream r1(77);
  RngStream r2(77);
  for (int i = 0; i < 1000; ++i) {
    CHECK(resolve_reception(arr, p, r1).kind == resolve_reception(arr, p, r2).kind);
  }
}

TEST_CASE("adding an identical aligned transmitter keeps a reception") {
  std::mt19937_64 gen(5);
  RngStream rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::vector<std::uint8_t> payload{static_cast<std::uint8_t>(gen()), 1, 2};
    std::vector<Transmission> txs;
    const int k = 1 + static_cast<int>(gen() % 4);
    for (int i = 0; i < k; ++i) txs.push_back(tx(i, payload, static_cast<std::int64_t>(gen() % 500)));
    std::vector<Arrival> arr;
    for (const auto& t : txs) arr.push_back({&t, -50.0 - static_cast<double>(gen() % 30), true});
    const auto before = resolve_reception(arr, lossless(), rng);
    REQUIRE(before.received());

    const auto extra = tx(k, payload, static_cast<std::int64_t>(gen() % 500));
    arr.push_back({&extra, -50.0 - static_cast<double>(gen() % 30), true});
    CHECK(resolve_reception(arr, lossless(), rng).received());
  }
}

TEST_CASE("topology-aware resolution ignores out-of-range and own transmissions") {
  Topology topo({{0, 0}, {10, 0}, {100, 0}}, 30.0);
  RngStream rng(1);
  std::vector<Transmission> txs{tx(2, {1}, 0), tx(0, {2}, 0)};
  const auto out = resolve_reception(topo, 1, txs, lossless(), rng);
  REQUIRE(out.received());
  CHECK(out.from == 0);
  CHECK(resolve_reception(topo, 0, std::vector<Transmission>{tx(0, {1}, 0)}, lossless(), rng).kind ==
        ReceptionOutcome::Kind::kIdle);
}

TEST_CASE("default topologies") {
  const auto line = Topology::line5();
  CHECK(line.size() == 5);
  CHECK(line.connected());
  CHECK(line.diameter() == 3);
  CHECK(line.hop_distances(0) == std::vector<int>{0, 1, 2, 3, 2});
  const auto pair = Topology::pair();
  CHECK(pair.diameter() == 1);
  CHECK(pair.neighbors(0) == std::vector<std::uint32_t>{1});
}

TEST_CASE("links are symmetric and follow moved nodes") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> coord(0.0, 80.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Position> pos;
    for (int i = 0; i < 6; ++i) pos.push_back({coord(gen), coord(gen)});
    Topology t(pos, 30.0);
    for (std::uint32_t a = 0; a < 6; ++a) {
      CHECK_FALSE(t.in_range(a, a));
      for (std::uint32_t b = 0; b < 6; ++b) CHECK(t.in_range(a, b) == t.in_range(b, a));
    }
  }
  Topology t({{0, 0}, {20, 0}}, 30.0);
  CHECK(t.in_range(0, 1));
  t.set_position(1, {31, 0});
  CHECK_FALSE(t.in_range(0, 1));
  CHECK_FALSE(t.connected());
  CHECK_FALSE(t.diameter().has_value());
  CHECK(t.hop_distances(0) == std::vector<int>{0, -1});
}
