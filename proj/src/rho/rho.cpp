#include "v2x/rho.hpp"

#include "util/text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <tuple>

namespace v2x {

SlotRange shrink_window(int t, int horizon) {
  if (horizon < 1 || t < 1 || t > horizon)
    throw RhoError("slot " + std::to_string(t) + " outside the horizon 1.." + std::to_string(horizon));
  return {t, horizon};
}

std::vector<std::vector<double>> DayResult::cost_matrix() const {
  std::vector<std::vector<double>> m;
  if (costs.empty()) return m;
  m.assign(costs.front().community.size(), std::vector<double>(costs.size(), 0.0));
  for (std::size_t t = 0; t < costs.size(); ++t)
    for (std::size_t c = 0; c < costs[t].community.size(); ++c) m[c][t] = costs[t].community[c].total;
  return m;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Attempt {
  bool ok = false;
  StackModel model;
  MiqpSolution sol;
  std::string why;
};

using BinaryPlan = std::map<std::string, double>;

Attempt try_solve(const Scenario& s, const WindowData& w, StackingMode mode, const MiqpSettings& st,
                  const BinaryPlan* previous = nullptr) {
  Attempt a;
  try {
    a.model = build_model(s, w, mode);
  } catch (const ModelError& e) {
    a.why = e.what();
    return a;
  }
  MiqpSettings local = st;
  if (previous && !previous->empty()) {
    local.start.clear();
    for (const BinaryInfo& b : a.model.problem.binaries) {
      const auto it = previous->find(b.name);
      local.start.push_back(it == previous->end() ? std::nan("") : it->second);
    }
  }
  try {
    a.sol = solve_miqp(a.model.problem, local);
  } catch (const MiqpError& e) {
    a.why = std::string("solver failure: ") + e.what();
    return a;
  }
  if (!std::isfinite(a.sol.objective)) {
    a.why = "window " + to_string(a.sol.status);
    return a;
  }
  a.ok = true;
  return a;
}

// Decisions for one slot with every EV idle: HVAC steers toward the preferred
// temperature and the grid covers the rest.
DecisionSet idle_slot(const Scenario& s, const WindowData& w, int t) {
  DecisionSet d;
  d.first_slot = t;
  d.slots = 1;
  const double dt = s.slot_duration;
  std::vector<std::vector<double>> inj(s.grid.node_count, std::vector<double>(1, 0.0));
  for (std::size_t c = 0; c < s.communities.size(); ++c) {
    const CommunitySpec& cs = s.communities[c];
    const BuildingSpec& b = cs.building;
    const int k = t - w.first_slot;
    for (const EvSpec& e : w.fleets[c]) {
      if (!e.parked(t) || e.id < 0) continue;
      EvDecision ed;
      ed.ev_id = e.id;
      ed.community = static_cast<int>(c);
      ed.slot = t;
      ed.energy = e.initial_energy;
      d.evs.push_back(ed);
    }
    const double t0 = thermal_step(w.indoor_temp[c], b.outdoor_temp.at(t - 1), 0.0, b.hvac_mode, b.heat_capacity,
                                   b.thermal_resistance, dt);
    const double per_kw = b.hvac_mode * dt / b.heat_capacity;
    double hvac = per_kw != 0.0 ? (t0 - b.preferred_temp) / per_kw : 0.0;
    hvac = std::clamp(hvac, b.hvac_min, b.hvac_max);
    CommunityDecision cd;
    cd.community = static_cast<int>(c);
    cd.slot = t;
    cd.hvac = hvac;
    cd.indoor_temp = thermal_step(w.indoor_temp[c], b.outdoor_temp.at(t - 1), hvac, b.hvac_mode, b.heat_capacity,
                                  b.thermal_resistance, dt);
    const double load = w.load[c][k];
    cd.renew = std::clamp(w.pv[c][k], 0.0, std::max(0.0, load + hvac));
    cd.grid = load + hvac - cd.renew;
    cd.community_export = -cd.grid;
    cd.direction = 0.0;
    d.communities.push_back(cd);
    inj[cs.node_id][0] += cd.community_export;
  }
  d.flow = propagate_flows(s.grid, inj);
  return d;
}

// Appends the slot decisions to a day-long set laid out community-major.
void place(DecisionSet& day, const DecisionSet& slot, int t, std::size_t nc) {
  for (const EvDecision& e : slot.evs) day.evs.push_back(e);
  for (const CommunityDecision& c : slot.communities)
    day.communities[static_cast<std::size_t>(c.community) * day.slots + (t - day.first_slot)] = c;
  auto put = [&](std::vector<std::vector<double>>& dst, const std::vector<std::vector<double>>& src) {
    if (dst.size() != src.size()) dst.assign(src.size(), std::vector<double>(day.slots, 0.0));
    for (std::size_t i = 0; i < src.size(); ++i) dst[i][t - day.first_slot] = src[i].at(0);
  };
  put(day.flow.active_flow, slot.flow.active_flow);
  put(day.flow.reactive_flow, slot.flow.reactive_flow);
  put(day.flow.voltage, slot.flow.voltage);
  (void)nc;
}

void finish(DayResult& r, const Scenario& s, const WindowData& actual, const RunOptions& opt) {
  std::sort(r.executed.evs.begin(), r.executed.evs.end(), [](const EvDecision& a, const EvDecision& b) {
    return std::tie(a.slot, a.community, a.ev_id) < std::tie(b.slot, b.community, b.ev_id);
  });
  r.grid_energy = r.discomfort = r.total_cost = 0.0;
  for (const CommunityDecision& c : r.executed.communities) r.grid_energy += c.grid * s.slot_duration;
  for (const SlotCosts& c : r.costs) {
    r.discomfort += c.sum.discomfort;
    r.total_cost += c.sum.total;
  }
  if (opt.audit) {
    std::vector<std::string> a = audit_decisions(r.executed, s, actual, r.mode);
    r.diagnostics.insert(r.diagnostics.end(), a.begin(), a.end());
  }
}

}  // namespace

DayResult run_day(const Scenario& s, const Forecaster& fc, StackingMode mode, const RunOptions& opt) {
  const int H = s.horizon;
  const std::size_t nc = s.communities.size();
  const WindowData actual = WindowData::full_horizon(s);
  const Series actual_arrivals = arrival_counts(s);

  std::map<int, const EvSpec*> specs;
  std::map<int, double> energy;
  for (const CommunitySpec& c : s.communities)
    for (const EvSpec& e : c.fleet) {
      specs[e.id] = &e;
      energy[e.id] = e.initial_energy;
    }
  std::vector<double> temps = actual.indoor_temp;
  std::vector<double> peaks(nc, 0.0);
  double coincident = 0.0;
  std::vector<double> billed;
  BinaryPlan plan;

  DayResult r;
  r.scenario_hash = scenario_hash_hex(s);
  r.mode = mode;
  r.provenance = fc.provenance();
  r.executed.first_slot = 1;
  r.executed.slots = H;
  r.executed.communities.resize(nc * H);

  for (int t = 1; t <= H; ++t) {
    const SlotRange win = shrink_window(t, H);
    ForecastBundle f = fc.predict(s, win.first, win.last);
    for (std::size_t c = 0; c < nc; ++c) {
      f.load[c][0] = actual.load[c][t - 1];
      f.pv[c][0] = actual.pv[c][t - 1];
      f.arrivals[c][0] = actual_arrivals[c][t - 1];
    }

    WindowData w;
    w.first_slot = win.first;
    w.last_slot = win.last;
    w.load = f.load;
    w.pv = f.pv;
    w.fleets = planned_fleets(s, f, t, opt.synthetic);
    for (auto& fleet : w.fleets)
      for (EvSpec& e : fleet)
        if (e.id >= 0 && e.arrival_slot < t) e.initial_energy = energy.at(e.id);
    w.indoor_temp = temps;
    w.realized_peak = peaks;
    w.realized_coincident_peak = coincident;

    SlotLog lg;
    lg.slot = t;
    const auto t0 = Clock::now();
    Attempt a = try_solve(s, w, mode, opt.solver, &plan);
    if (!a.ok) {
      lg.recourse.push_back("exports disabled: " + a.why);
      w.allow_export = false;
      a = try_solve(s, w, mode, opt.solver);
    }
    if (!a.ok) {
      lg.recourse.push_back("soft terminal energy: " + a.why);
      w.soft_terminal = true;
      a = try_solve(s, w, mode, opt.solver);
    }
    DecisionSet now;
    if (a.ok) {
      lg.status = to_string(a.sol.status);
      lg.nodes = a.sol.nodes;
      lg.gap = a.sol.gap;
      now = extract_decisions(a.model, a.sol.x).slot_view(t);
      plan.clear();
      for (const BinaryInfo& b : a.model.problem.binaries) plan[b.name] = a.sol.x[b.var];
    } else {
      lg.recourse.push_back("EVs idle: " + a.why);
      lg.status = "idle";
      now = idle_slot(s, w, t);
    }
    lg.seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    // Advance the realized state with the executed decisions.
    std::vector<EvDecision> kept;
    for (EvDecision& e : now.evs) {
      auto it = specs.find(e.ev_id);
      if (it == specs.end()) continue;
      const EvSpec& ev = *it->second;
      const double prev = energy.at(e.ev_id);
      e.energy = battery_step(prev, std::max(0.0, e.charge), std::max(0.0, e.discharge), ev.charge_eff,
                              ev.discharge_eff, s.slot_duration);
      energy[e.ev_id] = e.energy;
      if (e.slot == ev.departure_slot) e.shortfall = std::max(0.0, ev.desired_energy - e.energy);
      kept.push_back(e);
    }
    now.evs = std::move(kept);
    double total_grid = 0.0;
    for (CommunityDecision& cd : now.communities) {
      const BuildingSpec& b = s.communities[cd.community].building;
      cd.indoor_temp = thermal_step(temps[cd.community], b.outdoor_temp.at(t - 1), cd.hvac, b.hvac_mode,
                                    b.heat_capacity, b.thermal_resistance, s.slot_duration);
      temps[cd.community] = cd.indoor_temp;
      peaks[cd.community] = std::max(peaks[cd.community], cd.grid);
      total_grid += cd.grid;
    }
    coincident = std::max(coincident, total_grid);
    place(r.executed, now, t, nc);
    r.costs.push_back(evaluate_costs(r.executed, s, t, billed));
    if (opt.keep_forecasts) r.forecasts.push_back(std::move(f));
    for (const std::string& msg : lg.recourse) r.diagnostics.push_back("slot " + std::to_string(t) + ": " + msg);
    r.log.push_back(std::move(lg));
  }
  finish(r, s, actual, opt);
  return r;
}

DayResult solve_one_shot(const Scenario& s, StackingMode mode, const RunOptions& opt) {
  const WindowData actual = WindowData::full_horizon(s);
  DayResult r;
  r.scenario_hash = scenario_hash_hex(s);
  r.mode = mode;
  r.provenance = "offline";
  SlotLog lg;
  lg.slot = 1;
  const auto t0 = Clock::now();
  Attempt a = try_solve(s, actual, mode, opt.solver);
  if (!a.ok) throw RhoError("one-shot solve failed: " + a.why);
  lg.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  lg.status = to_string(a.sol.status);
  lg.nodes = a.sol.nodes;
  lg.gap = a.sol.gap;
  r.log.push_back(lg);
  r.executed = extract_decisions(a.model, a.sol.x);
  std::vector<double> billed;
  for (int t = 1; t <= s.horizon; ++t) r.costs.push_back(evaluate_costs(r.executed, s, t, billed));
  finish(r, s, actual, opt);
  return r;
}

double rec(const std::vector<std::vector<double>>& actual, const std::vector<std::vector<double>>& perturbed) {
  if (actual.size() != perturbed.size()) throw RhoError("cost matrices differ in community count");
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < actual.size(); ++c) {
    if (actual[c].size() != perturbed[c].size()) throw RhoError("cost matrices differ in slot count");
    for (std::size_t t = 0; t < actual[c].size(); ++t) {
      num += std::abs(perturbed[c][t] - actual[c][t]);
      den += actual[c][t];
    }
  }
  if (!(den > 0.0)) throw RhoError("relative extra cost needs a positive total actual cost");
  return num / den;
}

SweepCell run_sweep_cell(const Scenario& s, const DayResult& baseline, Channel channel, double target,
                         std::uint64_t seed, StackingMode mode, const RunOptions& opt) {
  InjectedForecaster f(s, channel, target, seed);
  RunOptions o = opt;
  o.keep_forecasts = false;
  DayResult d = run_day(s, f, mode, o);
  SweepCell cell;
  cell.channel = channel;
  cell.target = target;
  cell.seed = seed;
  cell.realized_re = f.realized_re();
  cell.rec = rec(baseline.cost_matrix(), d.cost_matrix());
  cell.total_cost = d.total_cost;
  for (const SlotLog& l : d.log) cell.recourse_slots += !l.recourse.empty();
  return cell;
}

std::vector<SweepRow> aggregate_sweep(const std::vector<SweepCell>& cells) {
  std::vector<SweepRow> rows;
  std::vector<std::vector<double>> recs;
  for (const SweepCell& c : cells) {
    std::size_t i = 0;
    while (i < rows.size() && !(rows[i].channel == c.channel && rows[i].target == c.target)) ++i;
    if (i == rows.size()) {
      rows.push_back({c.channel, c.target, 0, 0.0, 0.0, 0.0});
      recs.emplace_back();
    }
    rows[i].runs += 1;
    rows[i].mean_re += c.realized_re;
    rows[i].mean_rec += c.rec;
    recs[i].push_back(c.rec);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SweepRow& r = rows[i];
    r.mean_re /= r.runs;
    r.mean_rec /= r.runs;
    double ss = 0.0;
    for (double v : recs[i]) ss += (v - r.mean_rec) * (v - r.mean_rec);
    r.std_rec = r.runs > 1 ? std::sqrt(ss / (r.runs - 1)) : 0.0;
  }
  return rows;
}

std::vector<SweepRow> sweep_error(const Scenario& s, Channel channel, const std::vector<double>& targets,
                                  const std::vector<std::uint64_t>& seeds, StackingMode mode, const RunOptions& opt) {
  const DayResult baseline = run_day(s, TruthForecaster{}, mode, opt);
  std::vector<SweepCell> cells;
  for (double target : targets)
    for (std::uint64_t seed : seeds) cells.push_back(run_sweep_cell(s, baseline, channel, target, seed, mode, opt));
  return aggregate_sweep(cells);
}

Report aggregate_report(const std::vector<DayResult>& results) {
  if (results.empty()) throw RhoError("no results to aggregate");
  Report rep;
  rep.scenario_hash = results.front().scenario_hash;
  const DayResult* base = nullptr;
  for (const DayResult& r : results) {
    if (r.scenario_hash != rep.scenario_hash) throw RhoError("results come from different scenarios");
    if (r.mode == StackingMode::charge_only) base = &r;
  }
  if (!base) throw RhoError("the report needs a charge_only result as its baseline");
  std::map<StackingMode, double> red;
  for (const DayResult& r : results) {
    ModeSummary m;
    m.mode = r.mode;
    m.total_cost = r.total_cost;
    m.grid_energy = r.grid_energy;
    m.discomfort = r.discomfort;
    m.reduction_pct = base->total_cost != 0.0 ? 100.0 * (base->total_cost - r.total_cost) / base->total_cost : 0.0;
    red[r.mode] = m.reduction_pct;
    rep.modes.push_back(m);
  }
  const auto full = red.find(StackingMode::full_stacking);
  if (full != red.end()) {
    const std::pair<const char*, StackingMode> streams[] = {{"v2b", StackingMode::stacking_minus_v2b},
                                                            {"v2g", StackingMode::stacking_minus_v2g},
                                                            {"trading", StackingMode::stacking_minus_trading}};
    for (const auto& [name, loo] : streams)
      if (auto it = red.find(loo); it != red.end()) rep.marginal[name] = full->second - it->second;
  }
  return rep;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

}  // namespace

void write_day_result(const std::filesystem::path& dir, const std::string& stem, const DayResult& r, bool timing) {
  using detail::fmt;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out = open_out(dir / (stem + ".costs.csv"));
    out << "slot,community,grid,battery,discomfort,v2g_revenue,total\n";
    for (std::size_t t = 0; t < r.costs.size(); ++t)
      for (std::size_t c = 0; c < r.costs[t].community.size(); ++c) {
        const CostBreakdown& k = r.costs[t].community[c];
        out << t + r.executed.first_slot << ',' << c << ',' << fmt(k.grid) << ',' << fmt(k.battery) << ','
            << fmt(k.discomfort) << ',' << fmt(k.v2g_revenue) << ',' << fmt(k.total) << '\n';
      }
  }
  {
    std::ofstream out = open_out(dir / (stem + ".log.csv"));
    out << "slot,status,nodes,gap," << (timing ? "seconds," : "") << "recourse\n";
    for (const SlotLog& l : r.log) {
      std::string steps;
      for (const std::string& x : l.recourse) steps += (steps.empty() ? "" : " | ") + x;
      std::replace(steps.begin(), steps.end(), ',', ';');
      std::replace(steps.begin(), steps.end(), '"', '\'');
      out << l.slot << ',' << l.status << ',' << l.nodes << ',' << fmt(l.gap) << ',';
      if (timing) out << fmt(l.seconds) << ',';
      out << '"' << steps << "\"\n";
    }
  }
  write_decisions_csv(dir, stem, r.executed);
  if (!r.forecasts.empty()) {
    std::ofstream out = open_out(dir / (stem + ".forecasts.csv"));
    out << "decision_slot,slot,community,load_kwh,pv_kwh,arrivals\n";
    for (const ForecastBundle& f : r.forecasts)
      for (std::size_t c = 0; c < f.load.size(); ++c)
        for (int k = 0; k < f.slots(); ++k)
          out << f.first_slot << ',' << f.first_slot + k << ',' << c << ',' << fmt(f.load[c][k]) << ','
              << fmt(f.pv[c][k]) << ',' << fmt(f.arrivals[c][k]) << '\n';
  }
  nlohmann::json j;
  j["scenario_hash"] = r.scenario_hash;
  j["mode"] = to_string(r.mode);
  j["provenance"] = r.provenance;
  j["total_cost"] = r.total_cost;
  j["grid_energy_kwh"] = r.grid_energy;
  j["discomfort"] = r.discomfort;
  j["diagnostics"] = r.diagnostics;
  j["slots"] = r.costs.size();
  std::ofstream out = open_out(dir / (stem + ".json"));
  out << j.dump(2) << '\n';
}

double read_total_cost(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto head = detail::split(line);
  const auto col = std::find(head.begin(), head.end(), "total");
  if (col == head.end()) throw IoError(path.string() + ": no 'total' column");
  const std::size_t idx = static_cast<std::size_t>(col - head.begin());
  double sum = 0.0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    double v = 0.0;
    if (cells.size() <= idx || !detail::parse_double(cells[idx], v)) throw IoError(path.string() + ": bad row");
    sum += v;
  }
  return sum;
}

void write_report(const std::filesystem::path& path, const Report& r) {
  nlohmann::json j;
  j["scenario_hash"] = r.scenario_hash;
  for (const ModeSummary& m : r.modes)
    j["modes"].push_back({{"mode", to_string(m.mode)},
                          {"total_cost", m.total_cost},
                          {"grid_energy_kwh", m.grid_energy},
                          {"discomfort", m.discomfort},
                          {"reduction_pct", m.reduction_pct}});
  j["marginal_pp"] = r.marginal;
  for (const auto& [name, pass] : r.checks) j["checks"][name] = pass;
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  using detail::fmt;
  std::ofstream out = open_out(path);
  out << "channel,target_re,runs,mean_re,mean_rec,std_rec\n";
  for (const SweepRow& r : rows)
    out << to_string(r.channel) << ',' << fmt(r.target) << ',' << r.runs << ',' << fmt(r.mean_re) << ','
        << fmt(r.mean_rec) << ',' << fmt(r.std_rec) << '\n';
}

void write_sweep_cells_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  using detail::fmt;
  std::ofstream out = open_out(path);
  out << "channel,target_re,seed,realized_re,rec,total_cost,recourse_slots\n";
  for (const SweepCell& c : cells)
    out << to_string(c.channel) << ',' << fmt(c.target) << ',' << c.seed << ',' << fmt(c.realized_re) << ','
        << fmt(c.rec) << ',' << fmt(c.total_cost) << ',' << c.recourse_slots << '\n';
}

}  // namespace v2x
