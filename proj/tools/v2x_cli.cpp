#include "v2x/rho.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

using namespace v2x;

namespace {

enum Exit { ok = 0, validation = 1, solver = 2, io = 3 };

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  double gap = 1e-7;
  long node_limit = 50000;
  double eps = 1e-8;
  double final_eps = 1e-10;
};

struct Common {
  std::string scenario;
  std::string out;
  int workers = 0;
  bool timing = false;
  SolverOptions solver;
};

std::filesystem::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("V2X_OUTPUT_DIR"); env && *env) return env;
  return "results";
}

RunOptions run_options(const SolverOptions& so) {
  RunOptions o;
  o.solver.gap = so.gap;
  o.solver.node_limit = so.node_limit;
  o.solver.qp.eps_abs = o.solver.qp.eps_rel = o.solver.qp.kkt_tol = so.eps;
  if (o.solver.final_qp)
    o.solver.final_qp->eps_abs = o.solver.final_qp->eps_rel = o.solver.final_qp->kkt_tol = so.final_eps;
  return o;
}

nlohmann::json qp_json(const QpSettings& q) {
  return {{"eps_abs", q.eps_abs},   {"eps_rel", q.eps_rel},   {"kkt_tol", q.kkt_tol},
          {"max_iter", q.max_iter}, {"rho", q.rho},           {"sigma", q.sigma},
          {"alpha", q.alpha},       {"polish", q.polish},     {"scaling_iters", q.scaling_iters}};
}

nlohmann::json options_json(const RunOptions& o) {
  nlohmann::json j;
  j["gap"] = o.solver.gap;
  j["node_limit"] = o.solver.node_limit;
  j["integrality_tol"] = o.solver.integrality_tol;
  j["presolve"] = o.solver.presolve;
  j["node_qp"] = qp_json(o.solver.qp);
  if (o.solver.final_qp) j["final_qp"] = qp_json(*o.solver.final_qp);
  if (o.solver.screen_qp) {
    j["screen_qp"] = qp_json(*o.solver.screen_qp);
    j["screen_margin"] = o.solver.screen_margin;
  }
  const FleetParams& f = o.synthetic;
  j["synthetic_ev"] = {{"departure_hour_mean", f.departure_hour.mean},
                       {"capacity_upper", f.capacity_upper},
                       {"capacity_lower", f.capacity_lower},
                       {"initial_energy", 0.5 * (f.initial_min + f.initial_max)},
                       {"desired_energy", f.desired_energy},
                       {"charge_limit", f.charge_limit},
                       {"discharge_limit", f.discharge_limit},
                       {"charge_eff", f.charge_eff},
                       {"discharge_eff", f.discharge_eff}};
  j["soft_terminal_penalty"] = WindowData{}.shortfall_penalty;
  j["audit"] = o.audit;
  return j;
}

Scenario load_valid(const std::string& path) {
  if (path.empty()) throw ValidationError("--scenario is required");
  Scenario s = load_scenario(path);
  const auto problems = validate_scenario(s);
  if (!problems.empty()) {
    std::ostringstream os;
    os << "scenario " << path << " is invalid:";
    for (const std::string& p : problems) os << "\n  " << p;
    throw ValidationError(os.str());
  }
  return s;
}

std::vector<StackingMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<StackingMode> out;
  for (const std::string& n : names) {
    if (n == "all") {
      for (StackingMode m : all_modes()) out.push_back(m);
      continue;
    }
    try {
      out.push_back(parse_mode(n));
    } catch (const std::exception& e) {
      throw ValidationError(e.what());
    }
  }
  if (out.empty()) throw ValidationError("no modes given");
  return out;
}

void check_target(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("error targets must lie in [0, 1]");
}

std::string band_tag(double target) {
  std::ostringstream os;
  os << "re" << std::fixed << std::setprecision(2) << target;
  return os.str();
}

// Runs jobs on a small pool; each job writes only its own files.
void run_pool(std::size_t jobs, int workers, const std::function<void(std::size_t)>& fn) {
  std::size_t n = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min(n, std::max<std::size_t>(jobs, 1));
  if (n <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < jobs;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = jobs;
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void print_solver_notes(const DayResult& r, const std::string& stem) {
  for (const SlotLog& l : r.log)
    if (l.status != "optimal") std::cerr << stem << ": slot " << l.slot << " solved with status " << l.status << '\n';
  for (const std::string& d : r.diagnostics) std::cerr << stem << ": " << d << '\n';
}

struct GenArgs {
  std::string out = "scenario.json";
  GenParams p;
  std::string tariff = "tou";
};

int cmd_gen(const GenArgs& a) {
  GenParams p = a.p;
  if (a.tariff == "tou") p.tariff = TariffKind::tou;
  else if (a.tariff == "tpt") p.tariff = TariffKind::tpt;
  else throw ValidationError("unknown tariff '" + a.tariff + "' (expected tou or tpt)");
  p.fleet.start_hour = p.start_hour;
  if (p.evs_per_community < 0) throw ValidationError("--evs-per-community must be non-negative");
  const Scenario s = default_scenario(p);
  const auto problems = validate_scenario(s);
  for (const std::string& msg : problems) std::cerr << msg << '\n';
  if (!problems.empty()) return Exit::validation;
  save_scenario(s, a.out);
  std::cout << a.out << " " << scenario_hash_hex(s) << " (" << s.communities.size() << " communities, "
            << s.total_evs() << " EVs)\n";
  return Exit::ok;
}

struct RunArgs {
  Common c;
  std::vector<std::string> modes{"full_stacking", "charge_only"};
  std::string forecaster = "truth";
  std::string channel = "load";
  double target = 0.0;
  std::uint64_t seed = 0;
  bool offline_check = true;
};

std::unique_ptr<Forecaster> make_forecaster(const Scenario& s, const std::string& kind, const std::string& channel,
                                            double target, std::uint64_t seed) {
  if (kind == "truth") return std::make_unique<TruthForecaster>();
  if (kind == "seasonal_naive") return std::make_unique<SeasonalNaiveForecaster>();
  if (kind == "injected") {
    check_target(target);
    try {
      return std::make_unique<InjectedForecaster>(s, parse_channel(channel), target, seed);
    } catch (const ForecastError& e) {
      throw ValidationError(e.what());
    }
  }
  throw ValidationError("unknown forecaster '" + kind + "' (expected truth, seasonal_naive or injected)");
}

std::string run_stem(const std::string& hash, StackingMode m, const RunArgs& a) {
  std::string stem = hash + "_" + to_string(m) + "_" + a.forecaster;
  if (a.forecaster == "injected") stem += "_" + a.channel + "_" + band_tag(a.target) + "_s" + std::to_string(a.seed);
  return stem;
}

int cmd_run(const RunArgs& a, bool compare) {
  const Scenario s = load_valid(a.c.scenario);
  const std::vector<StackingMode> modes = parse_modes(compare ? std::vector<std::string>{"all"} : a.modes);
  const auto fc = make_forecaster(s, compare ? "truth" : a.forecaster, a.channel, a.target, a.seed);
  const std::filesystem::path dir = output_dir(a.c.out);
  const RunOptions opt = run_options(a.c.solver);
  const std::string hash = scenario_hash_hex(s);
  RunArgs named = a;
  if (compare) named.forecaster = "truth";
  const bool offline = named.forecaster == "truth" && a.offline_check;

  std::vector<DayResult> results(modes.size());
  std::vector<double> offline_cost(modes.size(), 0.0);
  run_pool(modes.size(), a.c.workers, [&](std::size_t i) {
    results[i] = run_day(s, *fc, modes[i], opt);
    if (offline) offline_cost[i] = solve_one_shot(s, modes[i], opt).total_cost;
    write_day_result(dir, run_stem(hash, modes[i], named), results[i], a.c.timing);
  });

  bool solver_trouble = false;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string stem = run_stem(hash, modes[i], named);
    print_solver_notes(results[i], stem);
    for (const SlotLog& l : results[i].log) solver_trouble |= l.status == "idle";
    const double recomputed = read_total_cost(dir / (stem + ".costs.csv"));
    if (std::abs(recomputed - results[i].total_cost) > 1e-9 * std::max(1.0, std::abs(results[i].total_cost)))
      throw IoError(stem + ": costs CSV does not reproduce the total");
  }

  bool has_base = false;
  for (StackingMode m : modes) has_base |= m == StackingMode::charge_only;
  nlohmann::json summary;
  if (has_base) {
    Report rep = aggregate_report(results);
    if (offline)
      for (std::size_t i = 0; i < modes.size(); ++i) {
        const double rel = std::abs(results[i].total_cost - offline_cost[i]) / std::max(1e-12, std::abs(offline_cost[i]));
        rep.checks.emplace_back("perfect_foresight_" + to_string(modes[i]), rel <= 1e-6);
      }
    const std::string name = hash + (compare ? "_compare" : "_" + named.forecaster) + ".report.json";
    write_report(dir / name, rep);
    std::cout << "report " << (dir / name).string() << '\n';
    for (const ModeSummary& m : rep.modes)
      std::cout << std::left << std::setw(24) << to_string(m.mode) << " cost " << std::fixed << std::setprecision(4)
                << m.total_cost << "  reduction " << std::setprecision(3) << m.reduction_pct << "%\n";
    for (const auto& [k, pass] : rep.checks) std::cout << k << ": " << (pass ? "pass" : "FAIL") << '\n';
  } else {
    for (std::size_t i = 0; i < modes.size(); ++i)
      std::cout << std::left << std::setw(24) << to_string(modes[i]) << " cost " << std::fixed << std::setprecision(4)
                << results[i].total_cost << '\n';
  }

  nlohmann::json manifest;
  manifest["command"] = compare ? "compare" : "run";
  manifest["scenario"] = a.c.scenario;
  manifest["scenario_hash"] = hash;
  for (StackingMode m : modes) manifest["modes"].push_back(to_string(m));
  manifest["forecaster"] = fc->provenance();
  manifest["offline_check"] = offline;
  manifest["options"] = options_json(opt);
  manifest["workers"] = a.c.workers;
  manifest["output_dir"] = dir.string();
  write_json(dir / (hash + (compare ? "_compare" : "_run") + ".manifest.json"), manifest);
  return solver_trouble ? Exit::solver : Exit::ok;
}

struct SweepArgs {
  Common c;
  std::vector<std::string> channels{"load"};
  std::vector<double> targets{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35};
  int seeds = 20;
  std::uint64_t seed_base = 0;
  std::string mode = "full_stacking";
  bool keep_days = false;
};

int cmd_sweep(const SweepArgs& a) {
  const Scenario s = load_valid(a.c.scenario);
  const StackingMode mode = parse_modes({a.mode}).front();
  std::vector<Channel> channels;
  try {
    for (const std::string& c : a.channels) channels.push_back(parse_channel(c));
  } catch (const ForecastError& e) {
    throw ValidationError(e.what());
  }
  for (double t : a.targets) check_target(t);
  if (a.seeds < 1) throw ValidationError("--seeds must be at least 1");
  const std::filesystem::path dir = output_dir(a.c.out);
  RunOptions opt = run_options(a.c.solver);
  const std::string hash = scenario_hash_hex(s);

  const DayResult baseline = run_day(s, TruthForecaster{}, mode, opt);
  write_day_result(dir, hash + "_" + to_string(mode) + "_truth", baseline, a.c.timing);
  opt.keep_forecasts = false;

  struct Job {
    Channel channel;
    double target;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Channel ch : channels)
    for (double t : a.targets)
      for (int k = 0; k < a.seeds; ++k) jobs.push_back({ch, t, a.seed_base + static_cast<std::uint64_t>(k)});
  std::vector<SweepCell> cells(jobs.size());
  run_pool(jobs.size(), a.c.workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    InjectedForecaster f(s, j.channel, j.target, j.seed);
    const DayResult d = run_day(s, f, mode, opt);
    SweepCell& cell = cells[i];
    cell.channel = j.channel;
    cell.target = j.target;
    cell.seed = j.seed;
    cell.realized_re = f.realized_re();
    cell.rec = rec(baseline.cost_matrix(), d.cost_matrix());
    cell.total_cost = d.total_cost;
    for (const SlotLog& l : d.log) cell.recourse_slots += !l.recourse.empty();
    if (a.keep_days)
      write_day_result(dir,
                       hash + "_" + to_string(mode) + "_" + to_string(j.channel) + "_" + band_tag(j.target) + "_s" +
                           std::to_string(j.seed),
                       d, a.c.timing);
  });

  for (Channel ch : channels) {
    std::vector<SweepCell> mine;
    for (const SweepCell& c : cells)
      if (c.channel == ch) mine.push_back(c);
    const std::string stem = hash + "_" + to_string(mode) + "_" + to_string(ch);
    write_sweep_csv(dir / (stem + ".sweep.csv"), aggregate_sweep(mine));
    write_sweep_cells_csv(dir / (stem + ".cells.csv"), mine);
    std::cout << (dir / (stem + ".sweep.csv")).string() << '\n';
    for (const SweepRow& r : aggregate_sweep(mine))
      std::cout << "  " << to_string(r.channel) << " target " << std::fixed << std::setprecision(2) << r.target
                << "  RE " << std::setprecision(4) << r.mean_re << "  REC " << r.mean_rec << " +- " << r.std_rec << '\n';
  }

  nlohmann::json manifest;
  manifest["command"] = "sweep";
  manifest["scenario"] = a.c.scenario;
  manifest["scenario_hash"] = hash;
  manifest["mode"] = to_string(mode);
  manifest["channels"] = a.channels;
  manifest["targets"] = a.targets;
  manifest["seeds"] = a.seeds;
  manifest["seed_base"] = a.seed_base;
  manifest["options"] = options_json(opt);
  manifest["workers"] = a.c.workers;
  manifest["output_dir"] = dir.string();
  write_json(dir / (hash + "_" + to_string(mode) + ".sweep.manifest.json"), manifest);
  return Exit::ok;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-s,--scenario", c.scenario, "Scenario JSON file")->required();
  cmd->add_option("-o,--out", c.out, "Output directory (default: $V2X_OUTPUT_DIR or ./results)");
  cmd->add_option("-j,--workers", c.workers, "Parallel runs; 0 uses every core")->capture_default_str();
  cmd->add_flag("--timing", c.timing, "Write per-slot solve times");
  cmd->add_option("--gap", c.solver.gap, "Relative MIQP gap")->capture_default_str();
  cmd->add_option("--node-limit", c.solver.node_limit, "Branch-and-bound node limit")->capture_default_str();
  cmd->add_option("--qp-eps", c.solver.eps, "Node QP tolerance")->capture_default_str();
  cmd->add_option("--final-qp-eps", c.solver.final_eps, "Tolerance of the final incumbent re-solve")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network-constrained V2X value stacking with rolling-horizon MIQP"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write the default six-community scenario");
  g->add_option("-o,--out", gen.out, "Scenario JSON path")->capture_default_str();
  g->add_option("--evs-per-community", gen.p.evs_per_community, "EVs per community")->capture_default_str();
  g->add_option("--seed", gen.p.seed, "Generator seed")->capture_default_str();
  g->add_option("--tariff", gen.tariff, "tou or tpt")->capture_default_str();
  g->add_option("--start-hour", gen.p.start_hour, "Clock hour of slot 1")->capture_default_str();
  g->add_option("--pv-ratio", gen.p.pv_ratio, "PV capacity relative to peak load")->capture_default_str();
  g->add_option("--load-peak-per-ev", gen.p.load_peak_per_ev, "Building peak load per EV (kW)")->capture_default_str();
  g->add_option("--v-min", gen.p.v_min, "Lower voltage bound (p.u.)")->capture_default_str();
  g->add_option("--v-max", gen.p.v_max, "Upper voltage bound (p.u.)")->capture_default_str();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run one day of rolling-horizon control per mode");
  add_common(r, run.c);
  r->add_option("-m,--mode", run.modes, "Stacking modes, or 'all'")->capture_default_str();
  r->add_option("-f,--forecaster", run.forecaster, "truth, seasonal_naive or injected")->capture_default_str();
  r->add_option("--channel", run.channel, "Injected error channel: load, pv or ev")->capture_default_str();
  r->add_option("--target", run.target, "Injected relative error")->capture_default_str();
  r->add_option("--seed", run.seed, "Injection seed")->capture_default_str();
  r->add_flag("!--no-offline-check", run.offline_check, "Skip the offline comparison under truth forecasts");

  RunArgs cmp;
  auto* c = app.add_subcommand("compare", "Run every mode under truth forecasts and report cost reductions");
  add_common(c, cmp.c);
  c->add_flag("!--no-offline-check", cmp.offline_check, "Skip the offline comparison");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Relative extra cost under injected forecast errors");
  add_common(s, sw.c);
  s->add_option("--channel", sw.channels, "Error channels: load, pv, ev")->capture_default_str();
  s->add_option("--targets", sw.targets, "Target relative errors")->capture_default_str();
  s->add_option("--seeds", sw.seeds, "Seeds per target")->capture_default_str();
  s->add_option("--seed-base", sw.seed_base, "First seed")->capture_default_str();
  s->add_option("-m,--mode", sw.mode, "Stacking mode")->capture_default_str();
  s->add_flag("--keep-days", sw.keep_days, "Write every perturbed day");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::validation;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_run(run, false);
    if (*c) return cmd_run(cmp, true);
    if (*s) return cmd_sweep(sw);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::io;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::io;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return Exit::solver;
  }
  return Exit::ok;
}
