#include <doctest.h>

#include "v2x/forecast.hpp"

#include <cmath>
#include <numeric>

using namespace v2x;

TEST_CASE("seasonal naive") {
  std::vector<double> flat(48, 3.5);
  for (double v : seasonal_naive(flat, 24)) CHECK(v == 3.5);

  std::vector<double> periodic(72);
  for (int k = 0; k < 72; ++k) periodic[k] = std::sin((k % 24) * 2 * M_PI / 24) + 2.0;
  std::vector<double> today(periodic.begin() + 48, periodic.end());
  std::vector<double> hist(periodic.begin(), periodic.begin() + 48);
  CHECK(relative_error(seasonal_naive(hist, 24), today) == 0.0);

  std::vector<double> yesterday(24);
  std::iota(yesterday.begin(), yesterday.end(), 1.0);
  const auto p = seasonal_naive(yesterday, 24);
  for (int k = 0; k < 24; ++k) CHECK(p[k] == k + 1.0);
  CHECK_THROWS_AS(seasonal_naive(std::vector<double>(23, 1.0), 24), ForecastError);
}

TEST_CASE("relative error") {
  const Series a{{1.0, 2.0, 3.0}, {4.0, 0.5, 0.0}};
  CHECK(relative_error(a, a) == 0.0);
  Series b = a;
  for (auto& row : b)
    for (double& v : row) v *= 1.3;
  CHECK(std::abs(relative_error(b, a) - 0.3) <= 1e-12);
  CHECK(relative_error(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}) == 1.0);
  // Joint scaling leaves the ratio unchanged.
  Series a7 = a, b7 = b;
  for (auto* s : {&a7, &b7})
    for (auto& row : *s)
      for (double& v : row) v *= 7.0;
  CHECK(std::abs(relative_error(b7, a7) - relative_error(b, a)) <= 1e-12);
  CHECK_THROWS_AS(relative_error(std::vector<double>{1.0}, std::vector<double>{0.0}), ForecastError);
  CHECK_THROWS_AS(relative_error(Series{{1.0, 2.0}}, Series{{1.0}}), ForecastError);
}

TEST_CASE("error injection") {
  GenParams gp;
  const Scenario s = default_scenario(gp);
  const Series load = TruthForecaster{}.predict(s, 1, 24).load;

  CHECK(inject_error(load, 0.0, 3).values == load);
  const InjectResult r = inject_error(load, 0.30, 3);
  CHECK(r.realized_re == doctest::Approx(relative_error(r.values, load)).epsilon(1e-12));
  CHECK(std::abs(relative_error(r.values, load) - 0.30) <= 0.02);
  for (const auto& row : r.values)
    for (double v : row) CHECK(v >= 0.0);
  CHECK(inject_error(load, 0.30, 3).values == r.values);
  CHECK(inject_error(load, 0.30, 4).values != r.values);

  CHECK_THROWS_AS(inject_error(Series{{0.0, 0.0}}, 0.1, 1), ForecastError);
  CHECK_THROWS_AS(inject_error(load, 1.5, 1), ForecastError);

  SUBCASE("counts stay integral") {
    const Series arrivals = arrival_counts(s);
    const InjectResult e = inject_error(arrivals, 0.2, 9, true);
    for (const auto& row : e.values)
      for (double v : row) CHECK(v == std::round(v));
    CHECK(std::abs(relative_error(e.values, arrivals) - 0.2) <= 0.02);
  }
}

TEST_CASE("calibration over seeds") {
  GenParams gp;
  const Scenario s = default_scenario(gp);
  const ForecastBundle truth = TruthForecaster{}.predict(s, 1, 24);
  for (double target : {0.05, 0.20, 0.35}) {
    int load_hits = 0, pv_hits = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      load_hits += std::abs(inject_error(truth.load, target, seed).realized_re - target) <= 0.02;
      pv_hits += std::abs(inject_error(truth.pv, target, seed).realized_re - target) <= 0.02;
    }
    CHECK(load_hits >= 48);
    CHECK(pv_hits >= 48);
  }
}

TEST_CASE("forecasters") {
  GenParams gp;
  gp.evs_per_community = 5;
  const Scenario s = default_scenario(gp);
  const ForecastBundle t = TruthForecaster{}.predict(s, 13, 24);
  CHECK(t.first_slot == 13);
  CHECK(t.slots() == 12);
  CHECK(t.load[2][0] == s.communities[2].building.inflexible_load[12]);
  CHECK_THROWS_AS(TruthForecaster{}.predict(s, 0, 24), ForecastError);

  const ForecastBundle n = SeasonalNaiveForecaster{}.predict(s, 1, 24);
  CHECK(n.load[0] == s.communities[0].history.load);

  InjectedForecaster inj(s, Channel::pv, 0.25, 5);
  const ForecastBundle b = inj.predict(s, 1, 24);
  CHECK(b.load == TruthForecaster{}.predict(s, 1, 24).load);
  CHECK(std::abs(relative_error(b.pv, TruthForecaster{}.predict(s, 1, 24).pv) - 0.25) <= 0.02);
  CHECK(inj.predict(s, 10, 24).pv[0][0] == b.pv[0][9]);
  CHECK(b.provenance == "injected(pv,0.25,5)");
  CHECK(parse_channel("ev") == Channel::ev);
  CHECK_THROWS_AS(parse_channel("price"), ForecastError);
}

TEST_CASE("planned fleets") {
  GenParams gp;
  gp.evs_per_community = 5;
  const Scenario s = default_scenario(gp);
  const ForecastBundle truth = TruthForecaster{}.predict(s, 1, 24);

  SUBCASE("truth reproduces the realized fleets") {
    const auto f = planned_fleets(s, truth, 1);
    for (std::size_t c = 0; c < s.communities.size(); ++c) {
      REQUIRE(f[c].size() == s.communities[c].fleet.size());
      int ids = 0;
      for (const EvSpec& e : f[c]) {
        CHECK(e.id >= 0);
        ids += e.id;
      }
      int expect = 0;
      for (const EvSpec& e : s.communities[c].fleet) expect += e.id;
      CHECK(ids == expect);
    }
  }
  SUBCASE("over and under prediction") {
    ForecastBundle f = truth;
    int slot = -1;
    for (int k = 0; k < 24 && slot < 0; ++k)
      if (truth.arrivals[0][k] >= 1) slot = k + 1;
    REQUIRE(slot > 1);
    f.arrivals[0][slot - 1] += 2;
    auto more = planned_fleets(s, f, 1);
    CHECK(more[0].size() == s.communities[0].fleet.size() + 2);
    int synthetic = 0;
    for (const EvSpec& e : more[0])
      if (e.id < 0) {
        ++synthetic;
        CHECK(e.arrival_slot == slot);
        CHECK(e.departure_slot >= slot);
        CHECK(e.desired_energy <= e.capacity_upper);
      }
    CHECK(synthetic == 2);

    f.arrivals[0][slot - 1] = 0;
    auto fewer = planned_fleets(s, f, 1);
    CHECK(fewer[0].size() == s.communities[0].fleet.size() - static_cast<std::size_t>(truth.arrivals[0][slot - 1]));
    // Once the slot is reached the realized records appear regardless.
    auto later = planned_fleets(s, f, slot);
    int present = 0;
    for (const EvSpec& e : later[0]) present += e.arrival_slot == slot;
    CHECK(present == static_cast<int>(truth.arrivals[0][slot - 1]));
  }
}
