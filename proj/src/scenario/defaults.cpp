#include "v2x/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace v2x {
namespace {

struct Ieee33Branch {
  int from, to;
  double r, x;
};

// IEEE bus numbering (1-based).
constexpr Ieee33Branch kBranches[] = {
    {1, 2, 0.0922, 0.0470},   {2, 3, 0.4930, 0.2511},   {3, 4, 0.3660, 0.1864},   {4, 5, 0.3811, 0.1941},
    {5, 6, 0.8190, 0.7070},   {6, 7, 0.1872, 0.6188},   {7, 8, 0.7114, 0.2351},   {8, 9, 1.0300, 0.7400},
    {9, 10, 1.0440, 0.7400},  {10, 11, 0.1966, 0.0650}, {11, 12, 0.3744, 0.1238}, {12, 13, 1.4680, 1.1550},
    {13, 14, 0.5416, 0.7129}, {14, 15, 0.5910, 0.5260}, {15, 16, 0.7463, 0.5450}, {16, 17, 1.2890, 1.7210},
    {17, 18, 0.7320, 0.5740}, {2, 19, 0.1640, 0.1565},  {19, 20, 1.5042, 1.3554}, {20, 21, 0.4095, 0.4784},
    {21, 22, 0.7089, 0.9373}, {3, 23, 0.4512, 0.3083},  {23, 24, 0.8980, 0.7091}, {24, 25, 0.8960, 0.7011},
    {6, 26, 0.2030, 0.1034},  {26, 27, 0.2842, 0.1447}, {27, 28, 1.0590, 0.9337}, {28, 29, 0.8042, 0.7006},
    {29, 30, 0.5075, 0.2585}, {30, 31, 0.9744, 0.9630}, {31, 32, 0.3105, 0.3619}, {32, 33, 0.3410, 0.5302},
};

// Reactive loads (kVAr) of buses 1..33.
constexpr double kQLoad[] = {0,  60, 40, 80, 30, 20, 100, 100, 20, 20, 30, 35, 35, 80, 10, 20,  20,
                             40, 40, 40, 40, 40, 50, 200, 200, 25, 25, 20, 70, 600, 70, 100, 40};

constexpr int kCommunityNodes[] = {7, 14, 16, 17, 24, 30};

double bump(double h, double centre, double width) {
  double d = std::abs(h - centre);
  d = std::min(d, 24.0 - d);
  return std::exp(-0.5 * d * d / (width * width));
}

std::vector<double> load_profile(const Scenario& s, double peak, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.04);
  std::vector<double> out(s.horizon);
  for (int t = 1; t <= s.horizon; ++t) {
    const double h = s.clock_hour(t) + 0.5;
    const double shape = 0.35 + 0.25 * bump(h, 7.5, 1.5) + 0.65 * bump(h, 19.5, 2.5);
    out[t - 1] = std::max(0.0, peak * scale * shape * (1.0 + noise(rng)));
  }
  return out;
}

std::vector<double> pv_profile(const Scenario& s, double peak, double clear, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cloud(0.85, 1.0);
  std::vector<double> out(s.horizon);
  for (int t = 1; t <= s.horizon; ++t) {
    const double h = s.clock_hour(t) + 0.5;
    const double sun = h > 6.0 && h < 19.0 ? std::sin(std::numbers::pi * (h - 6.0) / 13.0) : 0.0;
    out[t - 1] = peak * clear * sun * cloud(rng);
  }
  return out;
}

std::vector<double> arrival_counts(const std::vector<EvSpec>& fleet, int horizon) {
  std::vector<double> n(horizon, 0.0);
  for (const EvSpec& ev : fleet) n[ev.arrival_slot - 1] += 1.0;
  return n;
}

}  // namespace

GridModel ieee33_feeder(double v_min, double v_max) {
  GridModel g;
  g.node_count = 33;
  for (const Ieee33Branch& b : kBranches) g.branches.push_back({b.from - 1, b.to - 1, b.r, b.x});
  g.q_load_kvar.assign(std::begin(kQLoad), std::end(kQLoad));
  g.v_min.assign(33, v_min);
  g.v_max.assign(33, v_max);
  return g;
}

void size_caps(Scenario& s) {
  double biggest = std::max(std::abs(s.grid.p_flow_max), std::abs(s.grid.p_flow_min));
  for (CommunitySpec& c : s.communities) {
    double charge = 0.0, discharge = 0.0;
    for (const EvSpec& ev : c.fleet) {
      charge += ev.charge_limit;
      discharge += ev.discharge_limit;
    }
    const double load_peak = c.building.inflexible_load.empty()
                                 ? 0.0
                                 : *std::max_element(c.building.inflexible_load.begin(), c.building.inflexible_load.end());
    c.grid_import_cap = 1.2 * (load_peak + c.building.hvac_max + charge);
    c.trade_buy_cap = c.grid_import_cap;
    c.trade_sell_cap = discharge;
    c.v2g_cap = discharge;
    c.v2b_cap = discharge;
    biggest = std::max({biggest, c.grid_import_cap, c.trade_buy_cap, c.trade_sell_cap, c.v2g_cap, c.v2b_cap});
  }
  s.big_m = 10.0 * biggest;
}

Scenario default_scenario(const GenParams& p) {
  Scenario s;
  s.name = "ieee33-" + std::to_string(p.evs_per_community) + "ev";
  s.start_hour = p.start_hour;
  s.rng_seed = p.seed;
  s.grid = ieee33_feeder(p.v_min, p.v_max);

  std::vector<double> tou(s.horizon), v2g(s.horizon);
  for (int t = 1; t <= s.horizon; ++t) {
    const int h = s.clock_hour(t);
    tou[t - 1] = h >= 14 && h < 20 ? 0.32 : 0.20;
    const double hm = h + 0.5;
    v2g[t - 1] = 0.05 + 0.03 * bump(hm, 8.0, 2.0) + 0.24 * bump(hm, 18.5, 1.6);
  }
  s.tariff.kind = p.tariff;
  s.tariff.tou_prices = tou;
  s.tariff.tpt_energy_price = 0.2;
  s.tariff.tpt_peak_price = 0.8;
  for (int t = 1; t <= s.horizon; ++t) v2g[t - 1] = std::min(v2g[t - 1], s.tariff.retail_price(t));
  s.tariff.v2g_prices = v2g;

  FleetParams fp = p.fleet;
  fp.start_hour = p.start_hour;
  fp.horizon = s.horizon;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double load_peak = p.load_peak_per_ev * std::max(1, p.evs_per_community);
  int next_ev = 0;
  for (int k = 0; k < 6; ++k) {
    CommunitySpec c;
    c.id = k;
    c.node_id = kCommunityNodes[k];
    BuildingSpec& b = c.building;
    const double scale = 0.85 + 0.3 * U(rng);
    const double clear = 0.8 + 0.2 * U(rng);
    const double temp_shift = 2.0 * U(rng) - 1.0;
    b.inflexible_load = load_profile(s, load_peak, scale, rng);
    b.outdoor_temp.resize(s.horizon);
    for (int t = 1; t <= s.horizon; ++t) {
      const double h = s.clock_hour(t) + 0.5;
      b.outdoor_temp[t - 1] = 29.0 + temp_shift + 5.0 * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0);
    }
    b.hvac_max = 10.0;
    c.pv_available = pv_profile(s, p.pv_ratio * load_peak, clear, rng);
    c.fleet = generate_ev_fleet(p.evs_per_community, fp, rng(), next_ev, k);
    next_ev += p.evs_per_community;

    std::vector<EvSpec> yesterday = generate_ev_fleet(p.evs_per_community, fp, rng(), 0, k);
    c.history.load = load_profile(s, load_peak, scale, rng);
    c.history.pv = pv_profile(s, p.pv_ratio * load_peak, clear * (0.9 + 0.2 * U(rng)), rng);
    c.history.arrivals = arrival_counts(yesterday, s.horizon);
    s.communities.push_back(std::move(c));
  }
  size_caps(s);
  return s;
}

}  // namespace v2x
