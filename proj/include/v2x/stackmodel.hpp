#pragma once

#include "v2x/miqp.hpp"
#include "v2x/network.hpp"
#include "v2x/scenario.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

// Raised when the fixed state makes a window infeasible before any solve,
// e.g. an EV whose terminal energy is out of reach.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StackingMode {
  full_stacking,
  v2g_only,
  v2b_only,
  trading_only,
  charge_only,
  stacking_minus_v2g,
  stacking_minus_v2b,
  stacking_minus_trading,
};

std::string to_string(StackingMode m);
StackingMode parse_mode(const std::string& s);
const std::vector<StackingMode>& all_modes();

// Value streams a mode allows. Each mode is full stacking with the
// disallowed streams pinned to zero, so every baseline is a restriction of
// full stacking.
struct StreamMask {
  bool v2b = true;
  bool v2g = true;
  bool trading = true;
  bool discharge = true;
};
StreamMask stream_mask(StackingMode m);

double battery_step(double b_prev, double p_charge, double p_discharge, double charge_eff, double discharge_eff,
                    double dt);
double thermal_step(double t_prev, double t_out, double p_ac, double hvac_mode, double heat_capacity,
                    double thermal_resistance, double dt);
double mid_market_price(double buy, double sell);

struct TariffCost {
  double energy = 0.0;
  double peak = 0.0;
  double total() const { return energy + peak; }
};

// grid[community][k] is the import in slot first_slot + k. realized_peak is
// the per-community peak already billed (or a single entry for coincident
// scope); only the increase over it is charged.
TariffCost tariff_cost(const std::vector<std::vector<double>>& grid, const Tariff& tariff,
                       const std::vector<double>& realized_peak, int first_slot = 1, double dt = 1.0);

// Inputs of one window [first_slot, last_slot]. Series are indexed by slot
// offset. Each EV's initial_energy is its energy before its first slot in
// the window.
struct WindowData {
  int first_slot = 1;
  int last_slot = 24;
  std::vector<std::vector<double>> load;
  std::vector<std::vector<double>> pv;
  std::vector<std::vector<EvSpec>> fleets;
  std::vector<double> indoor_temp;
  std::vector<double> realized_peak;
  double realized_coincident_peak = 0.0;
  bool allow_export = true;
  bool soft_terminal = false;
  double shortfall_penalty = 100.0;  // $/kWh when soft_terminal is set

  int slots() const { return last_slot - first_slot + 1; }
  // Whole-day window on the scenario's actual data.
  static WindowData full_horizon(const Scenario& s);
};

struct CommunityVars {
  std::vector<int> grid, renew, hvac, temp, v2b, v2g, trade_sell, trade_buy, ev_export, community_export, direction;
  int peak = -1;
};

// Index -1 means the EV is not parked in that slot.
struct EvVars {
  int ev_id = 0;
  int community = 0;
  std::vector<int> charge, discharge, mode, energy;
  int shortfall = -1;
};

struct StackModel {
  MixedIntegerQP problem;
  StackingMode mode = StackingMode::full_stacking;
  int first_slot = 1;
  int slots = 0;
  std::vector<CommunityVars> communities;
  std::vector<EvVars> evs;
  DistFlowBlock flow;
  int coincident_peak = -1;
  GridModel grid;
  std::vector<std::vector<double>> load;  // [community][k]
  StreamMask mask;
};

StackModel build_model(const Scenario& s, const WindowData& w, StackingMode mode);

// Tight QP tolerances: the audits check identities to 1e-9 absolute, and
// solver residuals are scaled by the largest row magnitude.
MiqpSettings model_solver_settings();

struct EvDecision {
  int ev_id = 0;
  int community = 0;
  int slot = 0;
  double charge = 0.0;
  double discharge = 0.0;
  double mode = 0.0;
  double energy = 0.0;
  double shortfall = 0.0;
};

struct CommunityDecision {
  int community = 0;
  int slot = 0;
  double grid = 0.0;
  double renew = 0.0;
  double hvac = 0.0;
  double indoor_temp = 0.0;
  double v2b = 0.0;
  double v2g = 0.0;
  double trade_sell = 0.0;
  double trade_buy = 0.0;
  double ev_export = 0.0;
  double community_export = 0.0;
  double direction = 0.0;
};

struct DecisionSet {
  int first_slot = 1;
  int slots = 0;
  std::vector<EvDecision> evs;
  std::vector<CommunityDecision> communities;  // community-major, then slot
  FlowState flow;

  const CommunityDecision& at(int community, int slot) const;
  // Restriction to one slot.
  DecisionSet slot_view(int slot) const;
};

// Values within 1e-7 of a variable bound are snapped onto it. V2B, which
// the rows only bound while importing, is reported as the building's share
// of the EVPL export.
DecisionSet extract_decisions(const StackModel& m, const Eigen::VectorXd& x);

struct CostBreakdown {
  double grid = 0.0;
  double battery = 0.0;
  double discomfort = 0.0;
  double v2g_revenue = 0.0;
  double total = 0.0;
};

struct SlotCosts {
  std::vector<CostBreakdown> community;
  CostBreakdown sum;
};

// Recomputes every cost term of one slot from the decisions. peak_before
// carries the TPT peaks billed before this slot and is advanced in place.
SlotCosts evaluate_costs(const DecisionSet& d, const Scenario& s, int slot, std::vector<double>& peak_before);

struct AuditLimits {
  double exclusivity = 1e-9;
  double balance = 1e-6;
  double regime = 1e-6;
  double network = 1e-6;
  double terminal = 1e-6;
  double locality = 1e-9;
  double bounds = 1e-6;
};

// Checks decisions against the model invariants on the given data:
// charge/discharge exclusivity, trading balance, export regime logic, the
// export identity, renewable locality, battery and temperature dynamics and
// bounds, terminal energy and the network. Returns human-readable
// violations.
std::vector<std::string> audit_decisions(const DecisionSet& d, const Scenario& s, const WindowData& w,
                                         StackingMode mode, const AuditLimits& lim = {});

void write_decisions_csv(const std::filesystem::path& dir, const std::string& stem, const DecisionSet& d);

}  // namespace v2x
