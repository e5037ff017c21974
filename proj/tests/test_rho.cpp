#include <doctest.h>

#include "v2x/rho.hpp"

#include <cmath>
#include <filesystem>

using namespace v2x;

namespace {

Scenario tiny(int horizon, std::vector<EvSpec> fleet, double load = 0.0) {
  Scenario s;
  s.horizon = horizon;
  s.grid.node_count = 2;
  s.grid.branches = {{0, 1, 0.01, 0.01}};
  s.grid.q_load_kvar = {0.0, 0.0};
  s.grid.v_min = {0.9, 0.9};
  s.grid.v_max = {1.1, 1.1};
  s.tariff.tou_prices.assign(horizon, 0.2);
  s.tariff.v2g_prices.assign(horizon, 0.05);
  CommunitySpec c;
  c.node_id = 1;
  c.building.inflexible_load.assign(horizon, load);
  c.building.outdoor_temp.assign(horizon, 25.0);
  c.pv_available.assign(horizon, 0.0);
  c.history.load.assign(24, load);
  c.history.pv.assign(24, 0.0);
  c.history.arrivals.assign(24, 0.0);
  c.fleet = std::move(fleet);
  s.communities.push_back(c);
  size_caps(s);
  return s;
}

EvSpec parked_ev(int id, int arrival, int departure, double initial, double desired) {
  EvSpec e;
  e.id = id;
  e.arrival_slot = arrival;
  e.departure_slot = departure;
  e.initial_energy = initial;
  e.desired_energy = desired;
  return e;
}

DayResult fake(StackingMode m, double total, const std::string& hash = "h") {
  DayResult r;
  r.scenario_hash = hash;
  r.mode = m;
  r.total_cost = total;
  return r;
}

}  // namespace

TEST_CASE("shrinking window") {
  CHECK(shrink_window(1, 24).first == 1);
  CHECK(shrink_window(1, 24).size() == 24);
  CHECK(shrink_window(24, 24).size() == 1);
  CHECK(shrink_window(13, 24).size() == 12);
  CHECK(shrink_window(13, 24).last == 24);
  CHECK_THROWS_AS(shrink_window(0, 24), RhoError);
  CHECK_THROWS_AS(shrink_window(25, 24), RhoError);
}

TEST_CASE("relative extra cost") {
  const std::vector<std::vector<double>> a{{1.0, 1.0}};
  CHECK(rec(a, a) == 0.0);
  CHECK(rec(a, {{1.1, 0.9}}) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rec(a, {{2.0, 2.0}}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(rec({{0.0, 0.0}}, {{1.0, 1.0}}), RhoError);
  CHECK_THROWS_AS(rec(a, {{1.0}}), RhoError);
}

TEST_CASE("report aggregation") {
  SUBCASE("equal costs") {
    const Report r = aggregate_report({fake(StackingMode::charge_only, 50), fake(StackingMode::full_stacking, 50)});
    for (const ModeSummary& m : r.modes) CHECK(m.reduction_pct == 0.0);
  }
  SUBCASE("reductions and marginals") {
    const Report r = aggregate_report({fake(StackingMode::charge_only, 100), fake(StackingMode::full_stacking, 80),
                                       fake(StackingMode::stacking_minus_v2b, 95)});
    CHECK(r.modes[1].reduction_pct == doctest::Approx(20.0));
    CHECK(r.marginal.at("v2b") == doctest::Approx(15.0));
    CHECK(r.marginal.count("v2g") == 0);
  }
  CHECK_THROWS_AS(aggregate_report({fake(StackingMode::full_stacking, 1)}), RhoError);
  CHECK_THROWS_AS(aggregate_report({fake(StackingMode::charge_only, 1), fake(StackingMode::full_stacking, 1, "x")}),
                  RhoError);
}

TEST_CASE("sweep aggregation") {
  std::vector<SweepCell> cells;
  for (double v : {0.1, 0.2, 0.3}) cells.push_back({Channel::pv, 0.2, 0, 0.2, v, 0.0, 0});
  cells.push_back({Channel::pv, 0.3, 0, 0.3, 0.5, 0.0, 0});
  const auto rows = aggregate_sweep(cells);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].runs == 3);
  CHECK(rows[0].mean_rec == doctest::Approx(0.2));
  CHECK(rows[0].std_rec == doctest::Approx(0.1));
  CHECK(rows[1].std_rec == 0.0);
}

TEST_CASE("empty fleets buy the load") {
  const Scenario s = tiny(6, {}, 3.0);
  const DayResult r = run_day(s, TruthForecaster{}, StackingMode::full_stacking);
  CHECK(r.diagnostics.empty());
  CHECK(r.total_cost == doctest::Approx(6 * 3.0 * 0.2).epsilon(1e-7));
  CHECK(r.grid_energy == doctest::Approx(18.0).epsilon(1e-7));
  CHECK(r.log.size() == 6);
}

TEST_CASE("truth loop matches the offline solve") {
  const Scenario s = tiny(8, {parked_ev(0, 1, 6, 20, 40), parked_ev(1, 3, 8, 30, 35)}, 2.0);
  for (StackingMode m : {StackingMode::charge_only, StackingMode::full_stacking}) {
    const DayResult loop = run_day(s, TruthForecaster{}, m);
    const DayResult off = solve_one_shot(s, m);
    CHECK(loop.diagnostics.empty());
    CHECK(off.diagnostics.empty());
    CHECK(std::abs(loop.total_cost - off.total_cost) <= 1e-6 * std::abs(off.total_cost));
    CHECK(rec(off.cost_matrix(), loop.cost_matrix()) <= 1e-5);
  }
}

TEST_CASE("unreachable target falls back to the soft terminal") {
  // 7 kW over two slots cannot lift 10 kWh to 40 kWh.
  const Scenario s = tiny(4, {parked_ev(0, 1, 2, 10, 40)});
  const DayResult r = run_day(s, TruthForecaster{}, StackingMode::full_stacking);
  REQUIRE_FALSE(r.log[0].recourse.empty());
  CHECK(r.diagnostics.size() >= 1);
  double shortfall = 0.0;
  for (const EvDecision& e : r.executed.evs) shortfall += e.shortfall;
  CHECK(shortfall == doctest::Approx(40 - 10 - 2 * 7 * 0.95).epsilon(1e-6));
}

TEST_CASE("costs round-trip through CSV") {
  const Scenario s = tiny(4, {parked_ev(0, 1, 4, 20, 30)}, 1.0);
  const DayResult r = run_day(s, TruthForecaster{}, StackingMode::full_stacking);
  const auto dir = std::filesystem::temp_directory_path() / "v2x_rho_test";
  std::filesystem::remove_all(dir);
  write_day_result(dir, "day", r);
  CHECK(read_total_cost(dir / "day.costs.csv") == doctest::Approx(r.total_cost).epsilon(1e-12));
  CHECK(std::filesystem::exists(dir / "day.json"));
  CHECK(std::filesystem::exists(dir / "day.ev.csv"));
  CHECK_THROWS_AS(read_total_cost(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir);
}
