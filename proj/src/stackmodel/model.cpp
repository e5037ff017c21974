#include "v2x/stackmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace v2x {

WindowData WindowData::full_horizon(const Scenario& s) {
  WindowData w;
  w.first_slot = 1;
  w.last_slot = s.horizon;
  for (const CommunitySpec& c : s.communities) {
    w.load.push_back(c.building.inflexible_load);
    w.pv.push_back(c.pv_available);
    w.fleets.push_back(c.fleet);
    w.indoor_temp.push_back(c.building.initial_indoor_temp);
    w.realized_peak.push_back(0.0);
  }
  return w;
}

namespace {

std::string tag(const char* what, int id, int slot) {
  return std::string(what) + std::to_string(id) + "@" + std::to_string(slot);
}

void check_window(const Scenario& s, const WindowData& w) {
  if (w.first_slot < 1 || w.last_slot > s.horizon || w.last_slot < w.first_slot)
    throw ModelError("window [" + std::to_string(w.first_slot) + ", " + std::to_string(w.last_slot) +
                     "] is empty or outside the horizon");
  const std::size_t nc = s.communities.size();
  if (w.load.size() != nc || w.pv.size() != nc || w.fleets.size() != nc || w.indoor_temp.size() != nc)
    throw ModelError("window data must have one entry per community");
  for (std::size_t c = 0; c < nc; ++c)
    if (static_cast<int>(w.load[c].size()) < w.slots() || static_cast<int>(w.pv[c].size()) < w.slots())
      throw ModelError("forecasts do not cover the window for community " + std::to_string(s.communities[c].id));
  if (s.tariff.kind == TariffKind::tou && static_cast<int>(s.tariff.tou_prices.size()) < w.last_slot)
    throw ModelError("TOU prices do not cover the window");
  if (static_cast<int>(s.tariff.v2g_prices.size()) < w.last_slot) throw ModelError("V2G prices do not cover the window");
}

void check_reachable(const EvSpec& ev, int first, int last, double dt, bool can_discharge) {
  const int k0 = std::max(ev.arrival_slot, first);
  const int n = std::min(ev.departure_slot, last) - k0 + 1;
  if (ev.departure_slot > last) return;
  const double up = ev.initial_energy + ev.charge_eff * ev.charge_limit * dt * n;
  const double down = can_discharge ? ev.initial_energy - ev.discharge_limit * dt * n / ev.discharge_eff
                                    : ev.initial_energy;
  std::ostringstream os;
  if (ev.desired_energy > up + 1e-9) {
    os << "EV " << ev.id << " cannot reach its desired energy " << ev.desired_energy << " kWh by slot "
       << ev.departure_slot << ": at most " << up << " kWh from " << ev.initial_energy << " kWh over " << n
       << " slot(s)";
    throw ModelError(os.str());
  }
  if (ev.desired_energy < down - 1e-9) {
    os << "EV " << ev.id << " cannot come down to its desired energy " << ev.desired_energy << " kWh by slot "
       << ev.departure_slot << " from " << ev.initial_energy << " kWh";
    throw ModelError(os.str());
  }
}

}  // namespace

StackModel build_model(const Scenario& s, const WindowData& w, StackingMode mode) {
  check_window(s, w);
  const StreamMask mask = stream_mask(mode);
  const int first = w.first_slot, slots = w.slots();
  const double dt = s.slot_duration, M = s.big_m;
  const Tariff& tar = s.tariff;
  const bool tpt = tar.kind == TariffKind::tpt;
  const bool v2g_on = mask.v2g && w.allow_export;
  const bool trade_on = mask.trading && w.allow_export;

  QpBuilder b;
  StackModel m;
  m.mode = mode;
  m.grid = s.grid;
  m.mask = mask;
  m.first_slot = first;
  m.slots = slots;
  std::vector<BinaryInfo> binaries;
  std::vector<std::vector<LinearExpr>> injection(s.grid.node_count, std::vector<LinearExpr>(slots));
  std::vector<LinearExpr> trade_balance(slots);

  for (std::size_t ci = 0; ci < s.communities.size(); ++ci) {
    const CommunitySpec& cs = s.communities[ci];
    const BuildingSpec& bs = cs.building;
    CommunityVars cv;

    // EVs first so the community rows can reference them.
    std::vector<LinearExpr> ev_net(slots), ev_discharge(slots);
    std::vector<double> ev_discharge_cap(slots, 0.0), ev_charge_cap(slots, 0.0);
    std::vector<bool> any_parked(slots, false);
    for (const EvSpec& ev : w.fleets[ci]) {
      if (ev.departure_slot < first || ev.arrival_slot > w.last_slot) continue;
      if (!w.soft_terminal) check_reachable(ev, first, w.last_slot, dt, mask.discharge);
      EvVars evv;
      evv.ev_id = ev.id;
      evv.community = static_cast<int>(ci);
      evv.charge.assign(slots, -1);
      evv.discharge.assign(slots, -1);
      evv.mode.assign(slots, -1);
      evv.energy.assign(slots, -1);
      const bool both = mask.discharge && ev.charge_limit > 0 && ev.discharge_limit > 0;
      int prev = -1;
      for (int k = 0; k < slots; ++k) {
        const int t = first + k;
        if (!ev.parked(t)) continue;
        any_parked[k] = true;
        const int c = b.add_var(0.0, ev.charge_limit, tag("ev_c", ev.id, t));
        const int d = b.add_var(0.0, mask.discharge ? ev.discharge_limit : 0.0, tag("ev_d", ev.id, t));
        const int e = b.add_var(ev.capacity_lower, ev.capacity_upper, tag("ev_b", ev.id, t));
        evv.charge[k] = c;
        evv.discharge[k] = d;
        evv.energy[k] = e;
        if (both) {
          const int x = b.add_var(0.0, 1.0, tag("ev_x", ev.id, t));
          evv.mode[k] = x;
          b.add_le({{c, 1.0}, {x, ev.charge_limit}}, ev.charge_limit);
          b.add_le({{d, 1.0}, {x, -ev.discharge_limit}}, 0.0);
          binaries.push_back({x, tag("ev_x", ev.id, t), cs.id, ev.id, t, {{d, 1.0}, {c, -1.0}}});
        }
        LinearExpr dyn{{e, 1.0}, {c, -ev.charge_eff * dt}, {d, dt / ev.discharge_eff}};
        double rhs = 0.0;
        if (prev >= 0) dyn.push_back({prev, -1.0});
        else rhs = ev.initial_energy;
        b.add_eq(dyn, rhs);
        prev = e;

        b.add_square_cost(c, s.battery_degradation_coeff * dt * dt);
        b.add_square_cost(d, s.battery_degradation_coeff * dt * dt);
        ev_net[k].push_back({d, 1.0});
        ev_net[k].push_back({c, -1.0});
        ev_discharge[k].push_back({d, 1.0});
        if (mask.discharge) ev_discharge_cap[k] += ev.discharge_limit;
        ev_charge_cap[k] += ev.charge_limit;

        if (t == ev.departure_slot) {
          if (w.soft_terminal) {
            b.set_bounds(e, ev.capacity_lower, std::min(ev.capacity_upper, ev.desired_energy));
            evv.shortfall = b.add_var(0.0, kInf, tag("ev_short", ev.id, t));
            b.add_ge({{e, 1.0}, {evv.shortfall, 1.0}}, ev.desired_energy);
            b.add_linear_cost(evv.shortfall, w.shortfall_penalty);
          } else {
            b.set_bounds(e, ev.desired_energy, ev.desired_energy);
          }
        }
      }
      m.evs.push_back(std::move(evv));
    }

    const double s_cap_all = (v2g_on ? cs.v2g_cap : 0.0) + (trade_on ? cs.trade_sell_cap : 0.0);
    const double g_cap_all = cs.grid_import_cap + (trade_on ? cs.trade_buy_cap : 0.0);
    const double a = 1.0 / (bs.heat_capacity * bs.thermal_resistance);
    for (int k = 0; k < slots; ++k) {
      const int t = first + k;
      const int id = cs.id;
      const double load = w.load[ci][k];
      // Renewables never leave the building, so exports are bounded by the
      // parked EVs' discharge and imports by load, HVAC and charging.
      const double s_cap = std::min(s_cap_all, ev_discharge_cap[k]);
      const double g_cap = std::min(g_cap_all, std::max(0.0, load + bs.hvac_max + ev_charge_cap[k]));
      const int grid = b.add_var(0.0, cs.grid_import_cap, tag("grid", id, t));
      const int renew = b.add_var(0.0, std::max(0.0, w.pv[ci][k]), tag("renew", id, t));
      const int hvac = b.add_var(bs.hvac_min, bs.hvac_max, tag("hvac", id, t));
      const int temp = b.add_var(bs.temp_min, bs.temp_max, tag("temp", id, t));
      const int v2b = b.add_var(0.0, mask.v2b ? cs.v2b_cap : 0.0, tag("v2b", id, t));
      const int v2g = b.add_var(0.0, v2g_on ? std::min(cs.v2g_cap, s_cap) : 0.0, tag("v2g", id, t));
      const int ets = b.add_var(0.0, trade_on ? std::min(cs.trade_sell_cap, s_cap) : 0.0, tag("ets", id, t));
      const int etb = b.add_var(0.0, trade_on ? cs.trade_buy_cap : 0.0, tag("etb", id, t));
      const int evex = any_parked[k] ? b.add_var(-kInf, kInf, tag("ev_ex", id, t))
                                     : b.add_var(0.0, 0.0, tag("ev_ex", id, t));
      const int rcex = b.add_var(-g_cap, s_cap, tag("rc_ex", id, t));
      int y, y_fixed = -1;
      if (s_cap <= 0.0) {
        y = b.add_var(1.0, 1.0, tag("y", id, t));
        y_fixed = 1;
      } else if (g_cap <= 0.0) {
        y = b.add_var(0.0, 0.0, tag("y", id, t));
        y_fixed = 0;
      } else {
        y = b.add_var(0.0, 1.0, tag("y", id, t));
        binaries.push_back({y, tag("y", id, t), id, -1, t, {{grid, 1.0}, {etb, 1.0}, {v2g, -1.0}, {ets, -1.0}}});
      }
      cv.grid.push_back(grid);
      cv.renew.push_back(renew);
      cv.hvac.push_back(hvac);
      cv.temp.push_back(temp);
      cv.v2b.push_back(v2b);
      cv.v2g.push_back(v2g);
      cv.trade_sell.push_back(ets);
      cv.trade_buy.push_back(etb);
      cv.ev_export.push_back(evex);
      cv.community_export.push_back(rcex);
      cv.direction.push_back(y);

      LinearExpr net{{evex, 1.0}};
      for (const Term& term : ev_net[k]) net.push_back({term.var, -term.coeff});
      if (any_parked[k]) b.add_eq(net, 0.0);
      // Renewables serve the local building only.
      b.add_ge({{hvac, 1.0}, {renew, -1.0}}, -load);
      b.add_eq({{rcex, 1.0}, {evex, -1.0}, {hvac, 1.0}, {renew, -1.0}}, -load);
      // Export regime: surplus goes to V2G and trading, a deficit is bought
      // from the grid and the local market, never both. Each row gets the
      // smallest M that leaves it slack on the inactive side.
      b.add_eq({{v2g, 1.0}, {ets, 1.0}, {grid, -1.0}, {etb, -1.0}, {rcex, -1.0}}, 0.0);
      // V2B is the part of the EVPL export consumed by the building.
      b.add_le({{v2b, 1.0}, {hvac, -1.0}, {renew, 1.0}}, load);
      LinearExpr cap{{v2b, 1.0}};
      for (const Term& term : ev_discharge[k]) cap.push_back({term.var, -1.0});
      b.add_le(cap, 0.0);
      const double m_demand = std::min(M, std::max(0.0, load + bs.hvac_max));
      const double m_ev = std::min(M, ev_discharge_cap[k]);
      if (y_fixed < 0) {
        // Valid for every integral point; they cut relaxations that import
        // and sell in the same slot.
        LinearExpr sold{{v2g, 1.0}, {ets, 1.0}};
        for (const Term& term : ev_discharge[k]) sold.push_back({term.var, -1.0});
        b.add_le(sold, 0.0);
        LinearExpr bought{{grid, 1.0}, {etb, 1.0}, {hvac, -1.0}, {renew, 1.0}};
        for (const Term& term : ev_net[k])
          if (term.coeff < 0) bought.push_back({term.var, -1.0});
        b.add_le(bought, load);
        b.add_le({{v2g, 1.0}, {ets, 1.0}, {y, s_cap}}, s_cap);
        b.add_le({{grid, 1.0}, {etb, 1.0}, {y, -g_cap}}, 0.0);
        b.add_ge({{v2b, 1.0}, {hvac, -1.0}, {renew, 1.0}, {y, m_demand}}, load);
        b.add_ge({{v2b, 1.0}, {evex, -1.0}, {y, -m_ev}}, -m_ev);
      } else if (y_fixed == 1) {
        b.add_ge({{v2b, 1.0}, {evex, -1.0}}, 0.0);
      } else {
        b.add_ge({{v2b, 1.0}, {hvac, -1.0}, {renew, 1.0}}, load);
      }

      LinearExpr th{{temp, 1.0}, {hvac, a * bs.hvac_mode * bs.thermal_resistance * dt}};
      double rhs = a * bs.outdoor_temp.at(t - 1);
      if (k == 0) rhs -= (a - 1.0) * w.indoor_temp[ci];
      else th.push_back({cv.temp[k - 1], a - 1.0});
      b.add_eq(th, rhs);
      b.add_square_deviation_cost(temp, bs.discomfort_coeff, bs.preferred_temp);

      b.add_linear_cost(grid, tar.retail_price(t) * dt);
      b.add_linear_cost(v2g, -tar.v2g_prices.at(t - 1) * dt);
      injection[cs.node_id][k].push_back({rcex, 1.0});
      trade_balance[k].push_back({ets, 1.0});
      trade_balance[k].push_back({etb, -1.0});
    }
    if (tpt && tar.peak_scope == PeakScope::per_community) {
      const double floor = ci < w.realized_peak.size() ? w.realized_peak[ci] : 0.0;
      cv.peak = b.add_var(floor, kInf, "peak" + std::to_string(cs.id));
      for (int k = 0; k < slots; ++k) b.add_ge({{cv.peak, 1.0}, {cv.grid[k], -1.0}}, 0.0);
      b.add_linear_cost(cv.peak, tar.tpt_peak_price);
      b.add_constant_cost(-tar.tpt_peak_price * floor);
    }
    m.communities.push_back(std::move(cv));
    m.load.emplace_back(w.load[ci].begin(), w.load[ci].begin() + slots);
  }

  if (tpt && tar.peak_scope == PeakScope::coincident) {
    m.coincident_peak = b.add_var(w.realized_coincident_peak, kInf, "peak");
    for (int k = 0; k < slots; ++k) {
      LinearExpr row{{m.coincident_peak, 1.0}};
      for (const CommunityVars& cv : m.communities) row.push_back({cv.grid[k], -1.0});
      b.add_ge(row, 0.0);
    }
    b.add_linear_cost(m.coincident_peak, tar.tpt_peak_price);
    b.add_constant_cost(-tar.tpt_peak_price * w.realized_coincident_peak);
  }
  if (trade_on)
    for (int k = 0; k < slots; ++k) b.add_eq(trade_balance[k], 0.0);

  m.flow = build_distflow_block(b, s.grid, injection, first, w.last_slot);
  m.problem.qp = b.build();
  m.problem.binaries = std::move(binaries);
  return m;
}

MiqpSettings model_solver_settings() {
  MiqpSettings st;
  st.gap = 1e-7;
  st.qp.eps_abs = st.qp.eps_rel = 1e-8;
  st.qp.kkt_tol = 1e-8;
  st.qp.max_iter = 100000;
  QpSettings fine = st.qp;
  st.qp.polish = false;
  fine.eps_abs = fine.eps_rel = 1e-10;
  fine.kkt_tol = 1e-10;
  fine.max_iter = 200000;
  st.final_qp = fine;
  QpSettings screen = st.qp;
  screen.eps_abs = screen.eps_rel = screen.kkt_tol = 1e-5;
  screen.polish = false;
  screen.max_iter = 20000;
  st.screen_qp = screen;
  return st;
}

}  // namespace v2x
