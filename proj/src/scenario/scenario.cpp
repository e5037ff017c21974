#include "v2x/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace v2x {

double Tariff::retail_price(int slot) const {
  if (kind == TariffKind::tpt) return tpt_energy_price;
  return tou_prices.at(slot - 1);
}

double Tariff::trade_price(int slot) const {
  const double buy = retail_price(slot);
  const double sell = v2g_prices.at(slot - 1);
  return 0.5 * (buy + sell);
}

int Scenario::total_evs() const {
  int n = 0;
  for (const CommunitySpec& c : communities) n += static_cast<int>(c.fleet.size());
  return n;
}

double sample_truncated_normal(const TruncatedNormal& d, std::mt19937_64& rng) {
  if (!(d.lo <= d.hi) || d.sd < 0) throw ScenarioError("truncated normal has an empty support");
  if (d.sd == 0 || d.lo == d.hi) {
    if (d.mean < d.lo || d.mean > d.hi) {
      if (d.lo == d.hi) return d.lo;
      throw ScenarioError("truncated normal has an empty support");
    }
    return d.mean;
  }
  std::normal_distribution<double> N(d.mean, d.sd);
  for (int i = 0; i < 100000; ++i) {
    const double v = N(rng);
    if (v >= d.lo && v <= d.hi) return v;
  }
  throw ScenarioError("truncated normal window has negligible probability mass");
}

int arrival_slot_for_hour(int clock_hour, int start_hour) { return (clock_hour - start_hour + 24) % 24 + 1; }

int departure_slot_for_hour(int clock_hour, int start_hour) {
  const int slot = (clock_hour - start_hour + 24) % 24;
  return slot == 0 ? 24 : slot;
}

std::vector<EvSpec> generate_ev_fleet(int count, const FleetParams& p, std::uint64_t seed, int first_id,
                                      int community_id) {
  if (count < 0) throw ScenarioError("EV count must be nonnegative");
  const TruncatedNormal& a = p.arrival_hour;
  const TruncatedNormal& d = p.departure_hour;
  if (!(a.lo <= a.hi) || !(d.lo <= d.hi)) throw ScenarioError("infeasible truncation window: empty support");
  if (a.lo < 0 || a.hi > 23 || d.lo < 0 || d.hi > 23)
    throw ScenarioError("truncation windows must lie inside clock hours 0..23");
  // Every combination of rounded hours must give arrival before departure.
  const int a_last = arrival_slot_for_hour(static_cast<int>(std::round(a.hi)), p.start_hour);
  const int a_first = arrival_slot_for_hour(static_cast<int>(std::round(a.lo)), p.start_hour);
  const int d_first = departure_slot_for_hour(static_cast<int>(std::round(d.lo)), p.start_hour);
  const int d_last = departure_slot_for_hour(static_cast<int>(std::round(d.hi)), p.start_hour);
  if (a_first > a_last || d_first > d_last || a_last >= d_first || d_last > p.horizon)
    throw ScenarioError("infeasible truncation windows: arrival and departure supports do not fit the horizon");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(p.initial_min, p.initial_max);
  std::vector<EvSpec> fleet;
  fleet.reserve(count);
  for (int k = 0; k < count; ++k) {
    EvSpec ev;
    ev.id = first_id + k;
    ev.community_id = community_id;
    const int ah = static_cast<int>(std::round(sample_truncated_normal(a, rng)));
    const int dh = static_cast<int>(std::round(sample_truncated_normal(d, rng)));
    ev.arrival_slot = arrival_slot_for_hour(ah, p.start_hour);
    ev.departure_slot = departure_slot_for_hour(dh, p.start_hour);
    ev.capacity_upper = p.capacity_upper;
    ev.capacity_lower = p.capacity_lower;
    ev.initial_energy = U(rng);
    ev.desired_energy = p.desired_energy;
    ev.charge_limit = p.charge_limit;
    ev.discharge_limit = p.discharge_limit;
    ev.charge_eff = p.charge_eff;
    ev.discharge_eff = p.discharge_eff;
    fleet.push_back(ev);
  }
  return fleet;
}

namespace {

class Report {
 public:
  template <class... Args>
  void add(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    items.push_back(os.str());
  }
  std::vector<std::string> items;
};

void check_series(Report& r, const std::string& what, const std::vector<double>& v, std::size_t len,
                  bool nonneg) {
  if (v.size() != len) {
    r.add(what, ": expected ", len, " values, got ", v.size());
    return;
  }
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (!std::isfinite(v[t])) r.add(what, ": non-finite value at slot ", t + 1);
    else if (nonneg && v[t] < 0) r.add(what, ": negative value ", v[t], " at slot ", t + 1);
  }
}

void check_grid(Report& r, const GridModel& g) {
  if (g.node_count < 1) {
    r.add("grid: node_count must be at least 1");
    return;
  }
  const std::size_t nn = static_cast<std::size_t>(g.node_count);
  if (g.branches.size() + 1 != nn)
    r.add("grid: ", g.branches.size(), " branches for ", g.node_count, " nodes (a radial feeder needs node_count - 1)");
  std::vector<int> parent(nn, -1);
  for (std::size_t b = 0; b < g.branches.size(); ++b) {
    const Branch& br = g.branches[b];
    if (br.from < 0 || br.to < 1 || br.from >= g.node_count || br.to >= g.node_count) {
      r.add("grid: branch ", b, " references a missing node");
      continue;
    }
    if (parent[br.to] >= 0) r.add("grid: node ", br.to, " has more than one feeding branch");
    parent[br.to] = br.from;
    if (br.r_ohm < 0 || br.x_ohm < 0) r.add("grid: branch ", b, " has negative impedance");
  }
  for (int k = 1; k < g.node_count; ++k) {
    if (parent[k] < 0) {
      r.add("grid: node ", k, " has no branch data");
      continue;
    }
    int hops = 0, cur = k;
    while (cur > 0 && parent[cur] >= 0 && hops <= g.node_count) {
      cur = parent[cur];
      ++hops;
    }
    if (cur != 0) r.add("grid: node ", k, " is not connected to the slack node");
  }
  if (g.q_load_kvar.size() != nn) r.add("grid: q_load_kvar needs one value per node");
  if (g.v_min.size() != nn || g.v_max.size() != nn) {
    r.add("grid: voltage bounds need one value per node");
  } else {
    for (std::size_t k = 0; k < nn; ++k)
      if (!(g.v_min[k] < g.v_max[k])) r.add("grid: node ", k, " voltage bounds not increasing");
  }
  if (!(g.p_flow_min < g.p_flow_max) || !(g.q_flow_min < g.q_flow_max)) r.add("grid: flow bounds not increasing");
  if (!(g.base_mva > 0) || !(g.base_kv > 0)) r.add("grid: base quantities must be positive");
  if (!(g.slack_voltage > 0)) r.add("grid: slack voltage must be positive");
}

}  // namespace

std::vector<std::string> validate_scenario(const Scenario& s) {
  Report r;
  const std::size_t H = s.horizon > 0 ? static_cast<std::size_t>(s.horizon) : 0;
  if (s.horizon < 1) r.add("horizon must be at least 1 slot");
  if (!(s.slot_duration > 0)) r.add("slot_duration must be positive");
  if (s.start_hour < 0 || s.start_hour > 23) r.add("start_hour must be a clock hour 0..23");
  if (s.battery_degradation_coeff < 0) r.add("battery degradation coefficient must be nonnegative");
  if (!(s.big_m > 0)) r.add("big_m must be positive");
  check_grid(r, s.grid);

  const Tariff& tf = s.tariff;
  if (tf.kind == TariffKind::tou) check_series(r, "tariff tou_prices", tf.tou_prices, H, true);
  if (tf.tpt_energy_price < 0 || tf.tpt_peak_price < 0) r.add("tariff: two-part prices must be nonnegative");
  check_series(r, "tariff v2g_prices", tf.v2g_prices, H, true);
  if (tf.v2g_prices.size() == H && (tf.kind == TariffKind::tpt || tf.tou_prices.size() == H))
    for (std::size_t t = 1; t <= H; ++t)
      if (tf.v2g_prices[t - 1] > tf.retail_price(static_cast<int>(t)) + 1e-12)
        r.add("tariff: V2G price exceeds the retail price at slot ", t, " (mid-market trading needs sell <= buy)");

  std::set<int> ev_ids, nodes, com_ids;
  for (const CommunitySpec& c : s.communities) {
    const std::string name = "community " + std::to_string(c.id);
    if (!com_ids.insert(c.id).second) r.add(name, ": duplicate community id");
    if (c.node_id < 0 || c.node_id >= s.grid.node_count) r.add(name, ": node ", c.node_id, " not in the grid");
    else if (c.node_id == 0) r.add(name, ": cannot attach to the slack node");
    if (!nodes.insert(c.node_id).second) r.add(name, ": node ", c.node_id, " already hosts a community");
    const BuildingSpec& b = c.building;
    check_series(r, name + " inflexible_load", b.inflexible_load, H, true);
    check_series(r, name + " outdoor_temp", b.outdoor_temp, H, false);
    check_series(r, name + " pv_available", c.pv_available, H, true);
    if (!(b.temp_min <= b.preferred_temp && b.preferred_temp <= b.temp_max))
      r.add(name, ": preferred temperature outside [temp_min, temp_max]");
    if (!(b.temp_min <= b.initial_indoor_temp && b.initial_indoor_temp <= b.temp_max))
      r.add(name, ": initial indoor temperature outside [temp_min, temp_max]");
    if (!(b.hvac_min <= b.hvac_max)) r.add(name, ": hvac_min above hvac_max");
    if (!(b.heat_capacity > 0) || !(b.thermal_resistance > 0))
      r.add(name, ": heat capacity and thermal resistance must be positive");
    if (b.discomfort_coeff < 0) r.add(name, ": discomfort coefficient must be nonnegative");
    const std::pair<const char*, double> caps[] = {{"grid_import_cap", c.grid_import_cap},
                                                   {"trade_buy_cap", c.trade_buy_cap},
                                                   {"trade_sell_cap", c.trade_sell_cap},
                                                   {"v2b_cap", c.v2b_cap},
                                                   {"v2g_cap", c.v2g_cap}};
    for (const auto& [label, v] : caps) {
      if (v < 0) r.add(name, ": ", label, " must be nonnegative");
      if (v > s.big_m) r.add(name, ": big_m ", s.big_m, " is smaller than ", label, " ", v, " (Big-M sizing)");
    }
    const CommunityHistory& h = c.history;
    if (!h.load.empty()) check_series(r, name + " history load", h.load, 24, true);
    if (!h.pv.empty()) check_series(r, name + " history pv", h.pv, 24, true);
    if (!h.arrivals.empty()) check_series(r, name + " history arrivals", h.arrivals, 24, true);

    for (const EvSpec& ev : c.fleet) {
      const std::string en = "EV " + std::to_string(ev.id);
      if (!ev_ids.insert(ev.id).second) r.add(en, ": appears in more than one fleet");
      if (ev.community_id != c.id) r.add(en, ": community_id ", ev.community_id, " but listed under ", name);
      if (!(ev.arrival_slot >= 1 && ev.arrival_slot < ev.departure_slot && ev.departure_slot <= s.horizon))
        r.add(en, ": parking window [", ev.arrival_slot, ", ", ev.departure_slot, "] not inside 1..", s.horizon,
              " with arrival before departure");
      if (!(ev.capacity_lower <= ev.initial_energy && ev.initial_energy <= ev.capacity_upper))
        r.add(en, ": initial energy ", ev.initial_energy, " outside the battery bounds [", ev.capacity_lower, ", ",
              ev.capacity_upper, "]");
      if (ev.desired_energy > ev.capacity_upper)
        r.add(en, ": desired energy ", ev.desired_energy, " exceeds battery capacity ", ev.capacity_upper,
              " (terminal energy bound)");
      if (ev.desired_energy < ev.capacity_lower)
        r.add(en, ": desired energy ", ev.desired_energy, " below the battery lower bound ", ev.capacity_lower);
      if (ev.charge_limit < 0 || ev.discharge_limit < 0) r.add(en, ": power limits must be nonnegative");
      if (!(ev.charge_eff >= 0 && ev.charge_eff <= 1)) r.add(en, ": charge efficiency outside [0, 1]");
      if (!(ev.discharge_eff > 0 && ev.discharge_eff <= 1)) r.add(en, ": discharge efficiency outside (0, 1]");
    }
  }
  if (s.big_m < std::abs(s.grid.p_flow_max) || s.big_m < std::abs(s.grid.p_flow_min))
    r.add("big_m ", s.big_m, " is smaller than the feeder flow caps (Big-M sizing)");
  return r.items;
}

}  // namespace v2x
