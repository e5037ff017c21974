#include <doctest.h>

#include "v2x/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace v2x;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("v2x_test_scenario_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_hourly(const fs::path& p, int rows, int skip_hour = -1) {
  std::ofstream out(p);
  out << "timestamp,price\n";
  for (int k = 0; k < rows; ++k) {
    const int day = 1 + k / 24, hour = k % 24;
    if (hour == skip_hour && day == 1) continue;
    char buf[40];
    std::snprintf(buf, sizeof buf, "2022-03-%02dT%02d:00,%d.%02d\n", day, hour, k % 7, k % 100);
    out << buf;
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const std::vector<std::string>& report, const std::string& needle) {
  return std::any_of(report.begin(), report.end(),
                     [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("hourly price files") {
  const fs::path dir = scratch("prices");
  write_hourly(dir / "day.csv", 24);
  PriceSeries day = load_price_series(dir / "day.csv", "nem");
  CHECK(day.prices.size() == 24);
  CHECK(day.market == "nem");
  CHECK(day.prices[3] == doctest::Approx(3.03));

  write_hourly(dir / "gap.csv", 24, 13);
  try {
    load_price_series(dir / "gap.csv", "nem");
    FAIL("gap accepted");
  } catch (const ScenarioError& e) {
    CHECK(std::string(e.what()).find("missing hour 13") != std::string::npos);
  }

  write_hourly(dir / "week.csv", 168);
  PriceSeries week = load_price_series(dir / "week.csv", "nyiso");
  auto days = split_days(week);
  REQUIRE(days.size() == 7);
  for (std::size_t d = 0; d < days.size(); ++d) {
    REQUIRE(days[d].size() == 24);
    for (int h = 0; h < 24; ++h) CHECK(days[d][h] == week.prices[24 * d + h]);
  }
  CHECK(split_days(week, 12).size() == 6);

  CHECK_THROWS_AS(load_price_series(dir / "absent.csv", "x"), IoError);
  {
    std::ofstream out(dir / "bad.csv");
    out << "timestamp,price\n2022-03-01T00:00,abc\n";
  }
  CHECK_THROWS_AS(load_price_series(dir / "bad.csv", "x"), ScenarioError);
  {
    std::ofstream out(dir / "back.csv");
    out << "timestamp,price\n2022-03-01T05:00,1\n2022-03-01T04:00,1\n";
  }
  CHECK_THROWS_WITH_AS(load_price_series(dir / "back.csv", "x"), doctest::Contains("non-monotone"), ScenarioError);
  {
    std::ofstream out(dir / "stamp.csv");
    out << "timestamp,price\n2022-13-01T05:00,1\n";
  }
  CHECK_THROWS_AS(load_price_series(dir / "stamp.csv", "x"), ScenarioError);

  write_price_csv(dir / "out.csv", "2022-12-31", 12, std::vector<double>(24, 0.25));
  PriceSeries back = load_price_series(dir / "out.csv", "x");
  CHECK(back.first_hour == 12);
  CHECK(back.timestamps.back() == "2023-01-01T11:00");
  fs::remove_all(dir);
}

TEST_CASE("EV fleet generation") {
  FleetParams p;
  SUBCASE("three hundred EVs") {
    auto fleet = generate_ev_fleet(300, p, 7);
    REQUIRE(fleet.size() == 300);
    std::set<int> ids;
    const int a_lo = arrival_slot_for_hour(14, p.start_hour), a_hi = arrival_slot_for_hour(23, p.start_hour);
    const int d_lo = departure_slot_for_hour(5, p.start_hour), d_hi = departure_slot_for_hour(11, p.start_hour);
    for (const EvSpec& ev : fleet) {
      ids.insert(ev.id);
      CHECK(ev.capacity_upper == 50.0);
      CHECK(ev.initial_energy >= 20.0);
      CHECK(ev.initial_energy <= 30.0);
      CHECK(ev.arrival_slot >= a_lo);
      CHECK(ev.arrival_slot <= a_hi);
      CHECK(ev.departure_slot >= d_lo);
      CHECK(ev.departure_slot <= d_hi);
      CHECK(ev.arrival_slot < ev.departure_slot);
      CHECK(ev.desired_energy <= ev.capacity_upper);
    }
    CHECK(ids.size() == 300);
  }
  SUBCASE("empty fleet") { CHECK(generate_ev_fleet(0, p, 7).empty()); }
  SUBCASE("determinism") {
    auto a = generate_ev_fleet(40, p, 99), b = generate_ev_fleet(40, p, 99);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].arrival_slot == b[k].arrival_slot);
      CHECK(a[k].departure_slot == b[k].departure_slot);
      CHECK(a[k].initial_energy == b[k].initial_energy);
    }
    auto c = generate_ev_fleet(40, p, 100);
    bool differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) differs |= a[k].initial_energy != c[k].initial_energy;
    CHECK(differs);
  }
  SUBCASE("empty support") {
    p.arrival_hour.lo = 20;
    p.arrival_hour.hi = 19;
    CHECK_THROWS_AS(generate_ev_fleet(5, p, 1), ScenarioError);
  }
  SUBCASE("overlapping windows") {
    p.departure_hour = {9.0, 1.0, 10.0, 13.0};
    CHECK_THROWS_AS(generate_ev_fleet(5, p, 1), ScenarioError);
  }
  SUBCASE("truncated normal stays in window") {
    std::mt19937_64 rng(3);
    TruncatedNormal d{0.0, 1.0, 2.0, 2.5};
    for (int k = 0; k < 200; ++k) {
      const double v = sample_truncated_normal(d, rng);
      CHECK(v >= 2.0);
      CHECK(v <= 2.5);
    }
  }
}

TEST_CASE("slot mapping") {
  CHECK(arrival_slot_for_hour(12, 12) == 1);
  CHECK(arrival_slot_for_hour(18, 12) == 7);
  CHECK(departure_slot_for_hour(12, 12) == 24);
  CHECK(departure_slot_for_hour(7, 12) == 19);
  Scenario s;
  CHECK(s.clock_hour(1) == 12);
  CHECK(s.clock_hour(13) == 0);
}

TEST_CASE("default scenario validates") {
  GenParams gp;
  Scenario s = default_scenario(gp);
  CHECK(validate_scenario(s).empty());
  REQUIRE(s.communities.size() == 6);
  const int nodes[] = {7, 14, 16, 17, 24, 30};
  for (int k = 0; k < 6; ++k) CHECK(s.communities[k].node_id == nodes[k]);
  CHECK(s.total_evs() == 300);
  CHECK(s.grid.branches.size() == 32);

  std::set<int> ids;
  for (const auto& c : s.communities)
    for (const auto& ev : c.fleet) ids.insert(ev.id);
  CHECK(ids.size() == 300);

  Scenario again = default_scenario(gp);
  CHECK(scenario_hash(s) == scenario_hash(again));
  gp.seed = 5;
  CHECK(scenario_hash(s) != scenario_hash(default_scenario(gp)));
  gp.tariff = TariffKind::tpt;
  CHECK(validate_scenario(default_scenario(gp)).empty());
}

TEST_CASE("constructed violations") {
  GenParams gp;
  gp.evs_per_community = 3;
  Scenario s = default_scenario(gp);
  REQUIRE(validate_scenario(s).empty());

  SUBCASE("terminal energy above capacity") {
    s.communities[0].fleet[0].desired_energy = 60.0;
    auto r = validate_scenario(s);
    REQUIRE(r.size() == 1);
    CHECK(mentions(r, "terminal energy bound"));
  }
  SUBCASE("Big-M below import cap") {
    s.big_m = s.communities[2].grid_import_cap * 0.5;
    CHECK(mentions(validate_scenario(s), "Big-M sizing"));
  }
  SUBCASE("overlapping fleets") {
    s.communities[1].fleet.push_back(s.communities[0].fleet[0]);
    s.communities[1].fleet.back().community_id = 1;
    CHECK(mentions(validate_scenario(s), "more than one fleet"));
  }
  SUBCASE("unknown node") {
    s.communities[3].node_id = 40;
    CHECK(!validate_scenario(s).empty());
  }
  SUBCASE("mesh feeder") {
    s.grid.branches.push_back({5, 20, 0.1, 0.1});
    CHECK(!validate_scenario(s).empty());
  }
  SUBCASE("temperature order") {
    s.communities[0].building.preferred_temp = 30.0;
    CHECK(validate_scenario(s).size() == 1);
  }
  SUBCASE("short tariff") {
    s.tariff.tou_prices.pop_back();
    CHECK(!validate_scenario(s).empty());
  }
}

TEST_CASE("scenario file round trip") {
  const fs::path dir = scratch("io");
  GenParams gp;
  gp.evs_per_community = 4;
  Scenario s = default_scenario(gp);
  save_scenario(s, dir / "a.json");
  for (const char* f : {"a.tou.csv", "a.v2g.csv", "a.branches.csv", "a.nodes.csv"}) CHECK(fs::exists(dir / f));
  Scenario back = load_scenario(dir / "a.json");
  CHECK(scenario_hash(back) == scenario_hash(s));
  CHECK(validate_scenario(back).empty());
  CHECK(back.communities[2].fleet[1].initial_energy == s.communities[2].fleet[1].initial_energy);
  CHECK(back.grid.q_load_kvar == s.grid.q_load_kvar);

  save_scenario(back, dir / "sub" / "a.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "sub" / "a.json"));
  CHECK(slurp(dir / "a.branches.csv") == slurp(dir / "sub" / "a.branches.csv"));
  CHECK(scenario_hash_hex(s).size() == 16);

  CHECK_THROWS_AS(load_scenario(dir / "missing.json"), IoError);
  fs::remove(dir / "a.v2g.csv");
  CHECK_THROWS_AS(load_scenario(dir / "a.json"), IoError);
  fs::remove_all(dir);
}
