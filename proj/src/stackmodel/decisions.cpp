#include "v2x/stackmodel.hpp"

#include "util/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace v2x {

const CommunityDecision& DecisionSet::at(int community, int slot) const {
  const int k = slot - first_slot;
  if (k < 0 || k >= slots) throw std::out_of_range("slot outside the decision set");
  return communities.at(static_cast<std::size_t>(community * slots + k));
}

DecisionSet DecisionSet::slot_view(int slot) const {
  const int k = slot - first_slot;
  if (k < 0 || k >= slots) throw std::out_of_range("slot outside the decision set");
  DecisionSet d;
  d.first_slot = slot;
  d.slots = 1;
  for (const EvDecision& e : evs)
    if (e.slot == slot) d.evs.push_back(e);
  for (const CommunityDecision& c : communities)
    if (c.slot == slot) d.communities.push_back(c);
  auto column = [&](const std::vector<std::vector<double>>& m) {
    std::vector<std::vector<double>> out;
    for (const auto& row : m) out.push_back({row.at(k)});
    return out;
  };
  d.flow.active_flow = column(flow.active_flow);
  d.flow.reactive_flow = column(flow.reactive_flow);
  d.flow.voltage = column(flow.voltage);
  return d;
}

DecisionSet extract_decisions(const StackModel& m, const Eigen::VectorXd& raw) {
  const QuadraticProgram& qp = m.problem.qp;
  Eigen::VectorXd x = raw;
  for (int i = 0; i < x.size(); ++i) {
    if (std::abs(x[i] - qp.x_lower[i]) <= 1e-7) x[i] = qp.x_lower[i];
    if (std::abs(x[i] - qp.x_upper[i]) <= 1e-7) x[i] = qp.x_upper[i];
  }
  for (const BinaryInfo& bi : m.problem.binaries) x[bi.var] = std::round(x[bi.var]);
  auto val = [&](int v) { return v >= 0 ? x[v] : 0.0; };

  DecisionSet d;
  d.first_slot = m.first_slot;
  d.slots = m.slots;
  for (std::size_t c = 0; c < m.communities.size(); ++c) {
    const CommunityVars& cv = m.communities[c];
    for (int k = 0; k < m.slots; ++k) {
      CommunityDecision cd;
      cd.community = static_cast<int>(c);
      cd.slot = m.first_slot + k;
      cd.grid = val(cv.grid[k]);
      cd.renew = val(cv.renew[k]);
      cd.hvac = val(cv.hvac[k]);
      cd.indoor_temp = val(cv.temp[k]);
      cd.v2b = val(cv.v2b[k]);
      cd.v2g = val(cv.v2g[k]);
      cd.trade_sell = val(cv.trade_sell[k]);
      cd.trade_buy = val(cv.trade_buy[k]);
      cd.ev_export = val(cv.ev_export[k]);
      cd.community_export = val(cv.community_export[k]);
      cd.direction = val(cv.direction[k]);
      const double demand = m.load[c][k] + cd.hvac - cd.renew;
      cd.v2b = m.mask.v2b ? std::clamp(cd.ev_export, 0.0, std::max(0.0, demand)) : 0.0;
      d.communities.push_back(cd);
    }
  }
  for (const EvVars& ev : m.evs) {
    for (int k = 0; k < m.slots; ++k) {
      if (ev.energy[k] < 0) continue;
      EvDecision e;
      e.ev_id = ev.ev_id;
      e.community = ev.community;
      e.slot = m.first_slot + k;
      e.charge = val(ev.charge[k]);
      e.discharge = val(ev.discharge[k]);
      e.mode = ev.mode[k] >= 0 ? val(ev.mode[k]) : (e.discharge > 0 ? 1.0 : 0.0);
      e.energy = val(ev.energy[k]);
      if (ev.shortfall >= 0 && k == m.slots - 1) e.shortfall = val(ev.shortfall);
      d.evs.push_back(e);
    }
  }
  // The shortfall belongs to the departure slot.
  for (const EvVars& ev : m.evs) {
    if (ev.shortfall < 0) continue;
    int last = -1;
    for (int k = 0; k < m.slots; ++k)
      if (ev.energy[k] >= 0) last = k;
    for (EvDecision& e : d.evs)
      if (e.ev_id == ev.ev_id) e.shortfall = e.slot == m.first_slot + last ? val(ev.shortfall) : 0.0;
  }
  // Sorting by (slot, community, id) keeps per-slot views and CSVs stable.
  std::sort(d.evs.begin(), d.evs.end(), [](const EvDecision& a, const EvDecision& b) {
    return std::tie(a.slot, a.community, a.ev_id) < std::tie(b.slot, b.community, b.ev_id);
  });
  d.flow = m.flow.extract(m.grid, x);
  return d;
}

SlotCosts evaluate_costs(const DecisionSet& d, const Scenario& s, int slot, std::vector<double>& peak_before) {
  const std::size_t nc = s.communities.size();
  const Tariff& tar = s.tariff;
  const double dt = s.slot_duration;
  SlotCosts out;
  out.community.assign(nc, {});
  if (tar.kind == TariffKind::tpt) {
    const std::size_t need = tar.peak_scope == PeakScope::per_community ? nc : 1;
    if (peak_before.size() < need) peak_before.resize(need, 0.0);
  }
  double total_grid = 0.0;
  std::vector<double> grid(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    const CommunityDecision& cd = d.at(static_cast<int>(c), slot);
    const BuildingSpec& b = s.communities[c].building;
    CostBreakdown& k = out.community[c];
    grid[c] = cd.grid;
    total_grid += cd.grid;
    k.grid = tar.retail_price(slot) * cd.grid * dt;
    k.discomfort = b.discomfort_coeff * (cd.indoor_temp - b.preferred_temp) * (cd.indoor_temp - b.preferred_temp);
    k.v2g_revenue = tar.v2g_prices.at(slot - 1) * cd.v2g * dt;
  }
  for (const EvDecision& e : d.evs) {
    if (e.slot != slot) continue;
    const double pc = e.charge * dt, pd = e.discharge * dt;
    out.community.at(e.community).battery += s.battery_degradation_coeff * (pc * pc + pd * pd);
  }
  if (tar.kind == TariffKind::tpt) {
    if (tar.peak_scope == PeakScope::per_community) {
      for (std::size_t c = 0; c < nc; ++c) {
        const double inc = std::max(0.0, grid[c] - peak_before[c]);
        out.community[c].grid += tar.tpt_peak_price * inc;
        peak_before[c] += inc;
      }
    } else {
      const double inc = std::max(0.0, total_grid - peak_before[0]);
      // Split the coincident increase by each community's share of the import.
      for (std::size_t c = 0; c < nc; ++c)
        if (total_grid > 0) out.community[c].grid += tar.tpt_peak_price * inc * grid[c] / total_grid;
      peak_before[0] += inc;
    }
  }
  for (CostBreakdown& k : out.community) {
    k.total = k.grid + k.battery + k.discomfort - k.v2g_revenue;
    out.sum.grid += k.grid;
    out.sum.battery += k.battery;
    out.sum.discomfort += k.discomfort;
    out.sum.v2g_revenue += k.v2g_revenue;
  }
  out.sum.total = out.sum.grid + out.sum.battery + out.sum.discomfort - out.sum.v2g_revenue;
  return out;
}

std::vector<std::string> audit_decisions(const DecisionSet& d, const Scenario& s, const WindowData& w,
                                         StackingMode mode, const AuditLimits& lim) {
  std::vector<std::string> out;
  auto fail = [&](const auto&... parts) {
    std::ostringstream os;
    os.precision(10);
    (os << ... << parts);
    out.push_back(os.str());
  };
  const StreamMask mask = stream_mask(mode);
  const double dt = s.slot_duration;
  const std::size_t nc = s.communities.size();

  std::map<int, const EvSpec*> specs;
  for (const auto& fleet : w.fleets)
    for (const EvSpec& e : fleet) specs[e.id] = &e;
  std::map<std::pair<int, int>, const EvDecision*> by_slot;
  for (const EvDecision& e : d.evs) by_slot[{e.ev_id, e.slot}] = &e;

  for (const EvDecision& e : d.evs) {
    auto it = specs.find(e.ev_id);
    if (it == specs.end()) {
      fail("EV ", e.ev_id, ": not in the window data");
      continue;
    }
    const EvSpec& ev = *it->second;
    if (!ev.parked(e.slot) && (e.charge != 0 || e.discharge != 0)) fail("EV ", ev.id, " active while away at slot ", e.slot);
    if (e.charge * e.discharge > lim.exclusivity)
      fail("EV ", ev.id, " slot ", e.slot, ": charges and discharges together (", e.charge, ", ", e.discharge, ")");
    if (!mask.discharge && e.discharge > lim.bounds) fail("EV ", ev.id, " slot ", e.slot, ": discharges in ", to_string(mode));
    if (e.charge < -lim.bounds || e.charge > ev.charge_limit + lim.bounds || e.discharge < -lim.bounds ||
        e.discharge > ev.discharge_limit + lim.bounds)
      fail("EV ", ev.id, " slot ", e.slot, ": power outside its limits");
    if (e.energy < ev.capacity_lower - lim.bounds || e.energy > ev.capacity_upper + lim.bounds)
      fail("EV ", ev.id, " slot ", e.slot, ": energy ", e.energy, " outside the battery bounds");
    double prev = 0.0;
    bool have_prev = false;
    if (e.slot == std::max(ev.arrival_slot, w.first_slot)) {
      prev = ev.initial_energy;
      have_prev = true;
    } else if (auto p = by_slot.find({ev.id, e.slot - 1}); p != by_slot.end()) {
      prev = p->second->energy;
      have_prev = true;
    }
    if (have_prev) {
      const double expect =
          battery_step(prev, std::max(0.0, e.charge), std::max(0.0, e.discharge), ev.charge_eff, ev.discharge_eff, dt);
      if (std::abs(expect - e.energy) > lim.bounds)
        fail("EV ", ev.id, " slot ", e.slot, ": energy ", e.energy, " breaks the battery dynamics (expected ", expect, ")");
    }
    if (e.slot == ev.departure_slot && std::abs(e.energy + e.shortfall - ev.desired_energy) > lim.terminal)
      fail("EV ", ev.id, ": terminal energy ", e.energy, " differs from the desired ", ev.desired_energy);
  }

  for (int t = d.first_slot; t < d.first_slot + d.slots; ++t) {
    const int k = t - w.first_slot;
    double sells = 0.0, buys = 0.0;
    std::vector<std::vector<double>> inj(s.grid.node_count, std::vector<double>(1, 0.0));
    for (std::size_t c = 0; c < nc; ++c) {
      const CommunitySpec& cs = s.communities[c];
      const BuildingSpec& bs = cs.building;
      const CommunityDecision& cd = d.at(static_cast<int>(c), t);
      const double load = w.load[c][k];
      const double demand = load + cd.hvac - cd.renew;
      sells += cd.trade_sell;
      buys += cd.trade_buy;
      inj[cs.node_id][0] = cd.community_export;

      double ev_net = 0.0;
      for (const EvDecision& e : d.evs)
        if (e.slot == t && e.community == static_cast<int>(c)) ev_net += e.discharge - e.charge;
      if (std::abs(cd.ev_export - ev_net) > lim.balance)
        fail("community ", cs.id, " slot ", t, ": EVPL export ", cd.ev_export, " differs from net discharge ", ev_net);
      if (std::abs(cd.community_export - (cd.ev_export - demand)) > lim.balance)
        fail("community ", cs.id, " slot ", t, ": export identity off by ", cd.community_export - (cd.ev_export - demand));
      if (demand < -lim.locality) fail("community ", cs.id, " slot ", t, ": renewables exceed local demand by ", -demand);
      if (cd.renew > w.pv[c][k] + lim.bounds || cd.renew < -lim.bounds)
        fail("community ", cs.id, " slot ", t, ": renewable use outside availability");
      const double sold = cd.v2g + cd.trade_sell, bought = cd.grid + cd.trade_buy;
      if (std::abs(sold - bought - cd.community_export) > lim.balance)
        fail("community ", cs.id, " slot ", t, ": export not matched by sales and purchases");
      if (cd.community_export > lim.regime && bought > lim.regime)
        fail("community ", cs.id, " slot ", t, ": exports ", cd.community_export, " while buying ", bought);
      if (cd.community_export < -lim.regime && sold > lim.regime)
        fail("community ", cs.id, " slot ", t, ": imports ", -cd.community_export, " while selling ", sold);
      if (!mask.v2b && cd.v2b > lim.bounds) fail("community ", cs.id, " slot ", t, ": V2B used in ", to_string(mode));
      if (!mask.v2g && cd.v2g > lim.bounds) fail("community ", cs.id, " slot ", t, ": V2G used in ", to_string(mode));
      if (!mask.trading && (cd.trade_sell > lim.bounds || cd.trade_buy > lim.bounds))
        fail("community ", cs.id, " slot ", t, ": trading used in ", to_string(mode));
      const double v2b_expect = std::clamp(cd.ev_export, 0.0, std::max(0.0, demand));
      if (mask.v2b && std::abs(cd.v2b - v2b_expect) > lim.balance)
        fail("community ", cs.id, " slot ", t, ": V2B ", cd.v2b, " differs from the building share ", v2b_expect);
      if (cd.grid > cs.grid_import_cap + lim.bounds || cd.grid < -lim.bounds)
        fail("community ", cs.id, " slot ", t, ": grid import outside [0, cap]");
      if (cd.hvac < bs.hvac_min - lim.bounds || cd.hvac > bs.hvac_max + lim.bounds)
        fail("community ", cs.id, " slot ", t, ": HVAC power ", cd.hvac, " outside [", bs.hvac_min, ", ", bs.hvac_max, "]");
      if (cd.indoor_temp < bs.temp_min - lim.bounds || cd.indoor_temp > bs.temp_max + lim.bounds)
        fail("community ", cs.id, " slot ", t, ": indoor temperature ", cd.indoor_temp, " outside comfort bounds");
      double prev = 0.0;
      bool have_prev = true;
      if (t == w.first_slot) prev = w.indoor_temp[c];
      else if (t > d.first_slot) prev = d.at(static_cast<int>(c), t - 1).indoor_temp;
      else have_prev = false;
      if (have_prev) {
        const double expect = thermal_step(prev, bs.outdoor_temp.at(t - 1), cd.hvac, bs.hvac_mode, bs.heat_capacity,
                                           bs.thermal_resistance, dt);
        if (std::abs(expect - cd.indoor_temp) > lim.bounds)
          fail("community ", cs.id, " slot ", t, ": indoor temperature breaks the thermal dynamics");
      }
    }
    if (std::abs(sells - buys) > lim.balance) fail("slot ", t, ": trading imbalance ", sells - buys);
    DecisionSet one = d.slots == 1 ? d : d.slot_view(t);
    for (const NetworkViolation& v : check_solution(s.grid, one.flow, inj, lim.network))
      fail("slot ", t, ": network ", v.kind, " at ", v.index, " off by ", v.magnitude);
  }
  return out;
}

void write_decisions_csv(const std::filesystem::path& dir, const std::string& stem, const DecisionSet& d) {
  using detail::fmt;
  auto open = [&](const std::string& suffix) {
    std::ofstream out(dir / (stem + suffix));
    if (!out) throw IoError("cannot write " + (dir / (stem + suffix)).string());
    return out;
  };
  {
    std::ofstream out = open(".ev.csv");
    out << "slot,community,ev_id,charge_kw,discharge_kw,mode,energy_kwh,shortfall_kwh\n";
    for (const EvDecision& e : d.evs)
      out << e.slot << ',' << e.community << ',' << e.ev_id << ',' << fmt(e.charge) << ',' << fmt(e.discharge) << ','
          << fmt(e.mode) << ',' << fmt(e.energy) << ',' << fmt(e.shortfall) << '\n';
  }
  {
    std::ofstream out = open(".community.csv");
    out << "slot,community,grid_kw,renew_kw,hvac_kw,indoor_temp_c,v2b_kw,v2g_kw,trade_sell_kw,trade_buy_kw,"
           "ev_export_kw,community_export_kw,direction\n";
    for (int t = d.first_slot; t < d.first_slot + d.slots; ++t)
      for (const CommunityDecision& c : d.communities) {
        if (c.slot != t) continue;
        out << c.slot << ',' << c.community << ',' << fmt(c.grid) << ',' << fmt(c.renew) << ',' << fmt(c.hvac) << ','
            << fmt(c.indoor_temp) << ',' << fmt(c.v2b) << ',' << fmt(c.v2g) << ',' << fmt(c.trade_sell) << ','
            << fmt(c.trade_buy) << ',' << fmt(c.ev_export) << ',' << fmt(c.community_export) << ','
            << fmt(c.direction) << '\n';
      }
  }
  {
    std::ofstream out = open(".flow.csv");
    out << "slot,kind,index,value\n";
    for (int k = 0; k < d.slots; ++k) {
      for (std::size_t b = 0; b < d.flow.active_flow.size(); ++b)
        out << d.first_slot + k << ",p_kw," << b << ',' << fmt(d.flow.active_flow[b][k]) << '\n';
      for (std::size_t b = 0; b < d.flow.reactive_flow.size(); ++b)
        out << d.first_slot + k << ",q_kvar," << b << ',' << fmt(d.flow.reactive_flow[b][k]) << '\n';
      for (std::size_t n = 0; n < d.flow.voltage.size(); ++n)
        out << d.first_slot + k << ",v_pu," << n << ',' << fmt(d.flow.voltage[n][k]) << '\n';
    }
  }
}

}  // namespace v2x
