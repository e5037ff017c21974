#pragma once

#include "v2x/forecast.hpp"
#include "v2x/stackmodel.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

class RhoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SlotRange {
  int first = 1;
  int last = 1;
  int size() const { return last - first + 1; }
};

SlotRange shrink_window(int t, int horizon);

struct RunOptions {
  MiqpSettings solver = model_solver_settings();
  FleetParams synthetic;  // parameters of EVs the forecast adds
  bool audit = true;
  bool keep_forecasts = true;
};

// One slot of the loop: how its window was solved and what recourse, if
// any, was needed.
struct SlotLog {
  int slot = 0;
  std::string status;
  long nodes = 0;
  double gap = 0.0;
  double seconds = 0.0;
  std::vector<std::string> recourse;
};

struct DayResult {
  std::string scenario_hash;
  StackingMode mode = StackingMode::full_stacking;
  std::string provenance;
  DecisionSet executed;
  std::vector<SlotCosts> costs;  // per slot
  std::vector<ForecastBundle> forecasts;
  std::vector<SlotLog> log;
  std::vector<std::string> diagnostics;  // audit of the executed day on realized data
  double grid_energy = 0.0;           // kWh
  double discomfort = 0.0;            // sum of beta (T - T_pref)^2
  double total_cost = 0.0;

  // Total cost per community and slot.
  std::vector<std::vector<double>> cost_matrix() const;
};

// Shrinking-horizon loop: each slot re-plans [t, H] on realized state and
// forecasts, executes slot t and advances the realized battery and thermal
// state. Infeasible windows fall back to disabling exports, then a soft
// terminal constraint, then idling the EVs; every step is logged.
DayResult run_day(const Scenario& s, const Forecaster& forecaster, StackingMode mode, const RunOptions& opt = {});

// Offline full-horizon solve on realized data.
DayResult solve_one_shot(const Scenario& s, StackingMode mode, const RunOptions& opt = {});

// sum |perturbed - actual| / sum actual over communities and slots.
double rec(const std::vector<std::vector<double>>& actual, const std::vector<std::vector<double>>& perturbed);

struct SweepCell {
  Channel channel = Channel::load;
  double target = 0.0;
  std::uint64_t seed = 0;
  double realized_re = 0.0;
  double rec = 0.0;
  double total_cost = 0.0;
  int recourse_slots = 0;
};

struct SweepRow {
  Channel channel = Channel::load;
  double target = 0.0;
  int runs = 0;
  double mean_re = 0.0;
  double mean_rec = 0.0;
  double std_rec = 0.0;
};

SweepCell run_sweep_cell(const Scenario& s, const DayResult& baseline, Channel channel, double target,
                         std::uint64_t seed, StackingMode mode, const RunOptions& opt = {});
// Groups cells by (channel, target); std is the sample standard deviation.
std::vector<SweepRow> aggregate_sweep(const std::vector<SweepCell>& cells);
std::vector<SweepRow> sweep_error(const Scenario& s, Channel channel, const std::vector<double>& targets,
                                  const std::vector<std::uint64_t>& seeds, StackingMode mode = StackingMode::full_stacking,
                                  const RunOptions& opt = {});

struct ModeSummary {
  StackingMode mode = StackingMode::full_stacking;
  double total_cost = 0.0;
  double grid_energy = 0.0;
  double discomfort = 0.0;
  double reduction_pct = 0.0;  // relative to charge_only
};

struct Report {
  std::string scenario_hash;
  std::vector<ModeSummary> modes;
  // reduction(full) - reduction(full minus the stream), in percentage points
  std::map<std::string, double> marginal;
  std::vector<std::pair<std::string, bool>> checks;
};

Report aggregate_report(const std::vector<DayResult>& results);

// <stem>.costs.csv (slot, community, cost terms), <stem>.log.csv and the
// decision CSVs; plus <stem>.json with totals and diagnostics. Solve times
// are only written on request so that repeated runs give identical files.
void write_day_result(const std::filesystem::path& dir, const std::string& stem, const DayResult& r,
                      bool timing = false);
// Re-reads a costs CSV and returns the summed total.
double read_total_cost(const std::filesystem::path& costs_csv);
void write_report(const std::filesystem::path& path, const Report& r);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_sweep_cells_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells);

}  // namespace v2x
