#include <doctest.h>

#include "v2x/stackmodel.hpp"

#include <filesystem>
#include <fstream>

using namespace v2x;

namespace {

// One community on a two-node line, flat prices, no load, no PV and the
// outdoor temperature at the preferred temperature.
Scenario tiny(int horizon, std::vector<EvSpec> fleet) {
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
  c.id = 0;
  c.node_id = 1;
  c.building.inflexible_load.assign(horizon, 0.0);
  c.building.outdoor_temp.assign(horizon, 25.0);
  c.pv_available.assign(horizon, 0.0);
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

struct Solved {
  StackModel model;
  MiqpSolution sol;
  DecisionSet d;
};

Solved solve(const Scenario& s, const WindowData& w, StackingMode mode) {
  Solved r{build_model(s, w, mode), {}, {}};
  r.sol = solve_miqp(r.model.problem, model_solver_settings());
  REQUIRE(r.sol.status == MiqpStatus::optimal);
  r.d = extract_decisions(r.model, r.sol.x);
  return r;
}

double day_cost(const DecisionSet& d, const Scenario& s) {
  std::vector<double> peak;
  double total = 0.0;
  for (int t = d.first_slot; t < d.first_slot + d.slots; ++t) total += evaluate_costs(d, s, t, peak).sum.total;
  return total;
}

}  // namespace

TEST_CASE("battery and thermal steps") {
  CHECK(battery_step(20, 0, 0, 0.9, 0.95, 1) == 20.0);
  CHECK(battery_step(20, 10, 0, 0.9, 0.95, 1) == doctest::Approx(29.0).epsilon(1e-14));
  CHECK(battery_step(29, 0, 9.5, 0.9, 0.95, 1) == doctest::Approx(19.0).epsilon(1e-14));
  CHECK_THROWS(battery_step(20, -1, 0, 0.9, 0.95, 1));

  CHECK(thermal_step(25, 25, 0, 1, 3.3, 1.35, 1) == 25.0);
  CHECK(thermal_step(25, 30, 0, 1, 3.3, 1.35, 1) == doctest::Approx(25 + 5 / 4.455).epsilon(1e-14));
  CHECK(thermal_step(25, 30, 0, 1, 3.3, 1.35, 1) == doctest::Approx(26.1223).epsilon(1e-5));
  CHECK(thermal_step(25, 30, 5 / 1.35, 1, 3.3, 1.35, 1) == doctest::Approx(25.0).epsilon(1e-14));
  CHECK_THROWS(thermal_step(25, 30, 0, 1, 0.0, 1.35, 1));
  CHECK_THROWS(thermal_step(25, 30, 0, 1, 3.3, -1.0, 1));
}

TEST_CASE("mid-market price") {
  CHECK(mid_market_price(0.32, 0.10) == doctest::Approx(0.21).epsilon(1e-14));
  CHECK(mid_market_price(0.32, 0.20) == doctest::Approx(0.26).epsilon(1e-14));
  CHECK(mid_market_price(0.17, 0.17) == 0.17);
  CHECK_THROWS(mid_market_price(0.1, 0.2));
}

TEST_CASE("tariff cost") {
  Tariff tou;
  tou.tou_prices = {0.20, 0.32};
  CHECK(tariff_cost({{1.0, 1.0}}, tou, {}).total() == doctest::Approx(0.52).epsilon(1e-14));
  CHECK(tariff_cost({{0.0, 0.0}}, tou, {}).total() == 0.0);
  CHECK_THROWS(tariff_cost({{1.0, 1.0, 1.0}}, tou, {}));
  CHECK_THROWS(tariff_cost({{-1.0, 1.0}}, tou, {}));

  Tariff tpt;
  tpt.kind = TariffKind::tpt;
  tpt.tpt_energy_price = 0.20;
  tpt.tpt_peak_price = 0.80;
  TariffCost c = tariff_cost({{2.0, 4.0}}, tpt, {});
  CHECK(c.energy == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(c.peak == doctest::Approx(3.2).epsilon(1e-14));
  CHECK(c.total() == doctest::Approx(4.4).epsilon(1e-14));
  CHECK(tariff_cost({{0.0, 0.0}}, tpt, {}).total() == 0.0);
  // Only the increase over an already billed peak is charged.
  CHECK(tariff_cost({{2.0, 4.0}}, tpt, {3.0}).peak == doctest::Approx(0.8).epsilon(1e-14));
  tpt.peak_scope = PeakScope::coincident;
  CHECK(tariff_cost({{2.0, 4.0}, {3.0, 1.0}}, tpt, {}).peak == doctest::Approx(0.8 * 5.0).epsilon(1e-14));
}

TEST_CASE("stacking modes") {
  for (StackingMode m : all_modes()) {
    CHECK(parse_mode(to_string(m)) == m);
    const StreamMask k = stream_mask(m);
    const StreamMask c = stream_mask(StackingMode::charge_only);
    // Every mode allows at least what charge_only allows.
    CHECK((k.v2b || !c.v2b));
    CHECK((k.v2g || !c.v2g));
    CHECK((k.trading || !c.trading));
  }
  CHECK(parse_mode("full") == StackingMode::full_stacking);
  CHECK_THROWS(parse_mode("v2x"));
  CHECK(stream_mask(StackingMode::charge_only).discharge == false);
  CHECK(stream_mask(StackingMode::stacking_minus_v2b).v2b == false);
  CHECK(stream_mask(StackingMode::stacking_minus_v2b).v2g == true);
}

TEST_CASE("charge_only splits the required energy evenly") {
  const int H = 4;
  Scenario s = tiny(H, {parked_ev(1, 1, H, 20.0, 40.0)});
  Solved r = solve(s, WindowData::full_horizon(s), StackingMode::charge_only);
  const double each = (40.0 - 20.0) / 0.95 / H;
  REQUIRE(r.d.evs.size() == static_cast<std::size_t>(H));
  for (const EvDecision& e : r.d.evs) {
    CHECK(e.charge == doctest::Approx(each).epsilon(1e-7));
    CHECK(e.discharge == 0.0);
  }
  CHECK(r.d.evs.back().energy == doctest::Approx(40.0).epsilon(1e-9));
  // Grid cost of the energy plus the quadratic battery term.
  const double expect = H * (0.2 * each + 0.01 * each * each);
  CHECK(r.sol.objective == doctest::Approx(expect).epsilon(1e-8));
  CHECK(day_cost(r.d, s) == doctest::Approx(expect).epsilon(1e-8));
  CHECK(audit_decisions(r.d, s, WindowData::full_horizon(s), StackingMode::charge_only).empty());
}

TEST_CASE("empty fleets leave only HVAC and grid purchases") {
  GenParams gp;
  gp.evs_per_community = 0;
  Scenario s = default_scenario(gp);
  const WindowData w = WindowData::full_horizon(s);
  Solved r = solve(s, w, StackingMode::full_stacking);
  CHECK(r.d.evs.empty());
  for (const CommunityDecision& c : r.d.communities) {
    CHECK(c.v2b == 0.0);
    CHECK(c.v2g == 0.0);
    CHECK(c.trade_sell == 0.0);
    CHECK(c.ev_export == 0.0);
  }
  CHECK(audit_decisions(r.d, s, w, StackingMode::full_stacking).empty());
  CHECK(day_cost(r.d, s) == doctest::Approx(r.sol.objective).epsilon(1e-8));
}

TEST_CASE("an unreachable departure is diagnosed by EV") {
  // One slot of 7 kW charging cannot lift 20 kWh to 40 kWh.
  Scenario s = tiny(3, {parked_ev(1, 1, 3, 30.0, 40.0), parked_ev(7, 2, 2, 20.0, 40.0)});
  try {
    build_model(s, WindowData::full_horizon(s), StackingMode::full_stacking);
    FAIL("expected a ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("EV 7") != std::string::npos);
    CHECK(std::string(e.what()).find("EV 1") == std::string::npos);
  }

  SUBCASE("soft terminal reports the shortfall") {
    WindowData w = WindowData::full_horizon(s);
    w.soft_terminal = true;
    Solved r = solve(s, w, StackingMode::full_stacking);
    for (const EvDecision& e : r.d.evs)
      if (e.ev_id == 7) {
        CHECK(e.energy == doctest::Approx(20.0 + 0.95 * 7.0).epsilon(1e-8));
        CHECK(e.shortfall == doctest::Approx(40.0 - 20.0 - 0.95 * 7.0).epsilon(1e-8));
      }
    CHECK(audit_decisions(r.d, s, w, StackingMode::full_stacking).empty());
  }
}

TEST_CASE("evaluate_costs recomputes each term") {
  Scenario s = tiny(2, {parked_ev(1, 1, 2, 20.0, 20.0)});
  s.tariff.tou_prices = {0.32, 0.2};
  s.tariff.v2g_prices = {0.05, 0.05};
  DecisionSet d;
  d.first_slot = 1;
  d.slots = 1;
  CommunityDecision c;
  c.slot = 1;
  c.indoor_temp = 25.0;
  d.communities = {c};
  std::vector<double> peak;

  SlotCosts zero = evaluate_costs(d, s, 1, peak);
  CHECK(zero.sum.total == 0.0);
  CHECK(zero.sum.discomfort == 0.0);

  d.communities[0].grid = 1.0;
  d.evs = {{1, 0, 1, 2.0, 0.0, 0.0, 21.9, 0.0}};
  SlotCosts a = evaluate_costs(d, s, 1, peak);
  CHECK(a.sum.grid == doctest::Approx(0.32).epsilon(1e-14));
  CHECK(a.sum.battery == doctest::Approx(0.04).epsilon(1e-14));

  d.communities[0].v2g = 3.0;
  d.communities[0].indoor_temp = 26.0;
  SlotCosts b = evaluate_costs(d, s, 1, peak);
  CHECK(b.sum.v2g_revenue == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(b.sum.discomfort == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(b.sum.total == doctest::Approx(0.32 + 0.04 + 0.1 - 0.15).epsilon(1e-14));
  CHECK(b.sum.total == b.sum.grid + b.sum.battery + b.sum.discomfort - b.sum.v2g_revenue);

  SUBCASE("TPT charges each peak increase once") {
    s.tariff.kind = TariffKind::tpt;
    std::vector<double> pk;
    d.communities[0].v2g = 0.0;
    d.communities[0].grid = 2.0;
    CHECK(evaluate_costs(d, s, 1, pk).sum.grid == doctest::Approx(0.2 * 2 + 0.8 * 2).epsilon(1e-14));
    CHECK(pk[0] == 2.0);
    d.communities[0].grid = 1.5;
    CHECK(evaluate_costs(d, s, 1, pk).sum.grid == doctest::Approx(0.2 * 1.5).epsilon(1e-14));
    d.communities[0].grid = 4.0;
    CHECK(evaluate_costs(d, s, 1, pk).sum.grid == doctest::Approx(0.2 * 4 + 0.8 * 2).epsilon(1e-14));
  }
}

TEST_CASE("modes nest and every solution passes the audit") {
  GenParams gp;
  gp.evs_per_community = 2;
  for (TariffKind kind : {TariffKind::tou, TariffKind::tpt}) {
    gp.tariff = kind;
    Scenario s = default_scenario(gp);
    const WindowData w = WindowData::full_horizon(s);
    std::map<StackingMode, double> cost;
    for (StackingMode m : all_modes()) {
      Solved r = solve(s, w, m);
      const auto audit = audit_decisions(r.d, s, w, m);
      CHECK_MESSAGE(audit.empty(), to_string(m) << ": " << (audit.empty() ? "" : audit.front()));
      cost[m] = day_cost(r.d, s);
      CHECK(cost[m] == doctest::Approx(r.sol.objective).epsilon(1e-8));
    }
    const double full = cost[StackingMode::full_stacking], base = cost[StackingMode::charge_only];
    for (StackingMode m : all_modes()) {
      CHECK(full <= cost[m] * (1 + 1e-6));
      CHECK(cost[m] <= base * (1 + 1e-6));
    }
  }
}

TEST_CASE("TPT realized peak floor") {
  GenParams gp;
  gp.evs_per_community = 1;
  gp.tariff = TariffKind::tpt;
  Scenario s = default_scenario(gp);
  WindowData w = WindowData::full_horizon(s);
  Solved free_peak = solve(s, w, StackingMode::full_stacking);
  // A billed peak above any import makes the peak charge vanish.
  w.realized_peak.assign(s.communities.size(), 1e4);
  Solved floored = solve(s, w, StackingMode::full_stacking);
  double energy = 0.0;
  for (const CommunityDecision& c : floored.d.communities) energy += 0.2 * c.grid;
  double other = 0.0;
  std::vector<double> big(s.communities.size(), 1e4);
  for (int t = 1; t <= s.horizon; ++t) {
    SlotCosts sc = evaluate_costs(floored.d, s, t, big);
    other += sc.sum.battery + sc.sum.discomfort - sc.sum.v2g_revenue;
  }
  CHECK(floored.sol.objective == doctest::Approx(energy + other).epsilon(1e-8));
  CHECK(floored.sol.objective <= free_peak.sol.objective + 1e-9);
}

TEST_CASE("audit reports constructed violations") {
  Scenario s = tiny(4, {parked_ev(1, 1, 4, 20.0, 30.0)});
  const WindowData w = WindowData::full_horizon(s);
  Solved r = solve(s, w, StackingMode::full_stacking);
  REQUIRE(audit_decisions(r.d, s, w, StackingMode::full_stacking).empty());

  auto has = [](const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& e : v)
      if (e.find(needle) != std::string::npos) return true;
    return false;
  };
  SUBCASE("simultaneous charge and discharge") {
    DecisionSet d = r.d;
    d.evs[0].discharge = 1e-3;
    d.evs[0].charge += 1e-3;
    CHECK(has(audit_decisions(d, s, w, StackingMode::full_stacking), "charges and discharges together"));
  }
  SUBCASE("terminal energy") {
    DecisionSet d = r.d;
    d.evs.back().energy -= 1e-3;
    CHECK(has(audit_decisions(d, s, w, StackingMode::full_stacking), "terminal energy"));
  }
  SUBCASE("stream used outside its mode") {
    DecisionSet d = r.d;
    d.communities[0].v2g = 0.5;
    CHECK(has(audit_decisions(d, s, w, StackingMode::v2b_only), "V2G used"));
  }
  SUBCASE("locality") {
    DecisionSet d = r.d;
    d.communities[1].renew = d.communities[1].hvac + 1e-6;
    CHECK(has(audit_decisions(d, s, w, StackingMode::full_stacking), "renewables exceed local demand"));
  }
  SUBCASE("trading imbalance") {
    DecisionSet d = r.d;
    d.communities[2].trade_sell += 1e-3;
    CHECK(has(audit_decisions(d, s, w, StackingMode::full_stacking), "trading imbalance"));
  }
}

TEST_CASE("decision CSVs") {
  Scenario s = tiny(3, {parked_ev(1, 1, 3, 20.0, 30.0)});
  Solved r = solve(s, WindowData::full_horizon(s), StackingMode::full_stacking);
  const auto dir = std::filesystem::temp_directory_path() / "v2x_test_decisions";
  std::filesystem::create_directories(dir);
  write_decisions_csv(dir, "day", r.d);
  auto lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string l;
    int n = 0;
    while (std::getline(in, l)) ++n;
    return n;
  };
  CHECK(lines(dir / "day.ev.csv") == 1 + 3);
  CHECK(lines(dir / "day.community.csv") == 1 + 3);
  CHECK(lines(dir / "day.flow.csv") == 1 + 3 * (1 + 1 + 2));
  std::filesystem::remove_all(dir);
}
