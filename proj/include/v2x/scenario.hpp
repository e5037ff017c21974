#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unwritable files.
class IoError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

// Slots are 1-based: slot t covers clock hour (start_hour + t - 1) mod 24.
// An EV is parked for slots arrival_slot..departure_slot; its energy before
// arrival_slot is initial_energy and after departure_slot it must equal
// desired_energy.
struct EvSpec {
  int id = 0;
  int community_id = 0;
  int arrival_slot = 1;
  int departure_slot = 2;
  double capacity_upper = 50.0;
  double capacity_lower = 10.0;
  double initial_energy = 25.0;
  double desired_energy = 40.0;
  double charge_limit = 7.0;
  double discharge_limit = 7.0;
  double charge_eff = 0.95;
  double discharge_eff = 0.95;

  bool parked(int slot) const { return slot >= arrival_slot && slot <= departure_slot; }
};

struct BuildingSpec {
  std::vector<double> inflexible_load;  // kWh per slot
  std::vector<double> outdoor_temp;     // degC per slot
  double preferred_temp = 25.0;
  double temp_min = 22.0;
  double temp_max = 28.0;
  double hvac_min = 0.0;
  double hvac_max = 15.0;
  double heat_capacity = 3.3;
  double thermal_resistance = 1.35;
  double hvac_mode = 1.0;  // +1 cooling, -1 heating
  double discomfort_coeff = 0.1;
  double initial_indoor_temp = 25.0;
};

// Previous-day observations used by the seasonal-naive forecaster.
struct CommunityHistory {
  std::vector<double> load;
  std::vector<double> pv;
  std::vector<double> arrivals;
};

struct CommunitySpec {
  int id = 0;
  int node_id = 0;
  BuildingSpec building;
  std::vector<EvSpec> fleet;
  std::vector<double> pv_available;  // kWh per slot
  double grid_import_cap = 0.0;
  double trade_buy_cap = 0.0;
  double trade_sell_cap = 0.0;
  double v2b_cap = 0.0;
  double v2g_cap = 0.0;
  CommunityHistory history;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

// Radial feeder rooted at node 0 (the slack bus).
struct GridModel {
  int node_count = 1;
  std::vector<Branch> branches;
  std::vector<double> q_load_kvar;  // per node
  std::vector<double> v_min;        // per node, p.u.
  std::vector<double> v_max;
  double p_flow_min = -5000.0;  // kW
  double p_flow_max = 5000.0;
  double q_flow_min = -5000.0;  // kVAr
  double q_flow_max = 5000.0;
  double slack_voltage = 1.0;  // p.u.
  double base_mva = 10.0;
  double base_kv = 12.66;

  double base_impedance() const { return base_kv * base_kv / base_mva; }
  double base_kw() const { return base_mva * 1000.0; }
};

enum class TariffKind { tou, tpt };
enum class PeakScope { per_community, coincident };

struct Tariff {
  TariffKind kind = TariffKind::tou;
  std::vector<double> tou_prices;  // $/kWh per slot
  double tpt_energy_price = 0.2;
  double tpt_peak_price = 0.8;  // $/kW
  PeakScope peak_scope = PeakScope::per_community;
  std::vector<double> v2g_prices;  // $/kWh per slot
  std::string currency = "AUD";

  double retail_price(int slot) const;
  double trade_price(int slot) const;
};

struct Scenario {
  std::string name = "scenario";
  std::string date = "2022-12-24";
  int horizon = 24;
  double slot_duration = 1.0;
  int start_hour = 12;
  std::vector<CommunitySpec> communities;
  GridModel grid;
  Tariff tariff;
  double battery_degradation_coeff = 0.01;
  double big_m = 1e4;
  std::uint64_t rng_seed = 1;

  int total_evs() const;
  int clock_hour(int slot) const { return (start_hour + slot - 1) % 24; }
};

struct TruncatedNormal {
  double mean = 0.0;
  double sd = 1.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct FleetParams {
  TruncatedNormal arrival_hour{18.0, 2.0, 14.0, 23.0};
  TruncatedNormal departure_hour{7.5, 1.5, 5.0, 11.0};
  double capacity_upper = 50.0;
  double capacity_lower = 10.0;
  double initial_min = 20.0;
  double initial_max = 30.0;
  double desired_energy = 40.0;
  double charge_limit = 7.0;
  double discharge_limit = 7.0;
  double charge_eff = 0.95;
  double discharge_eff = 0.95;
  int horizon = 24;
  int start_hour = 12;
};

// Rejection sampling; throws ScenarioError on an empty support.
double sample_truncated_normal(const TruncatedNormal& d, std::mt19937_64& rng);

// Arrival is rounded to the hour the EV first occupies; departure to the
// hour it leaves, so the last parked slot ends at the departure time.
int arrival_slot_for_hour(int clock_hour, int start_hour);
int departure_slot_for_hour(int clock_hour, int start_hour);

std::vector<EvSpec> generate_ev_fleet(int count, const FleetParams& params, std::uint64_t seed, int first_id = 0,
                                      int community_id = 0);

std::vector<std::string> validate_scenario(const Scenario& s);

struct PriceSeries {
  std::string market;
  std::vector<std::string> timestamps;
  std::vector<double> prices;
  int first_hour = 0;  // clock hour of the first row
};

// CSV layout: header "timestamp,price", one row per hour, ISO-8601
// timestamps (YYYY-MM-DDTHH:MM[:SS]), '.' decimal point.
PriceSeries load_price_series(const std::filesystem::path& path, const std::string& market_label);

// Consecutive 24-slot blocks starting at the first row whose clock hour is
// `start_hour`; trailing partial days are dropped.
std::vector<std::vector<double>> split_days(const PriceSeries& series, int start_hour = 0);

void write_price_csv(const std::filesystem::path& path, const std::string& date, int start_hour,
                     const std::vector<double>& prices);

struct GenParams {
  int evs_per_community = 50;
  std::uint64_t seed = 2022;
  TariffKind tariff = TariffKind::tou;
  int start_hour = 12;
  double load_peak_per_ev = 2.0;
  double pv_ratio = 0.8;
  double v_min = 0.95;
  double v_max = 1.05;
  FleetParams fleet;
};

// Modified IEEE 33-bus feeder. Node k is IEEE bus k + 1, so the slack bus
// is node 0 and the communities sit at nodes 7, 14, 16, 17, 24 and 30.
GridModel ieee33_feeder(double v_min = 0.95, double v_max = 1.05);
Scenario default_scenario(const GenParams& params = {});

// Caps and Big-M derived from the fleet and building sizes.
void size_caps(Scenario& s);

// Scenario files: a JSON document plus CSVs (prices, feeder branches,
// nodes) next to it, referenced by relative path.
void save_scenario(const Scenario& s, const std::filesystem::path& json_path);
Scenario load_scenario(const std::filesystem::path& json_path);

// FNV-1a over the canonical serialization.
std::uint64_t scenario_hash(const Scenario& s);
std::string scenario_hash_hex(const Scenario& s);

}  // namespace v2x
