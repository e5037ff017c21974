#include "v2x/stackmodel.hpp"

#include <algorithm>
#include <cmath>

namespace v2x {

std::string to_string(StackingMode m) {
  switch (m) {
    case StackingMode::full_stacking: return "full_stacking";
    case StackingMode::v2g_only: return "v2g_only";
    case StackingMode::v2b_only: return "v2b_only";
    case StackingMode::trading_only: return "trading_only";
    case StackingMode::charge_only: return "charge_only";
    case StackingMode::stacking_minus_v2g: return "stacking_minus_v2g";
    case StackingMode::stacking_minus_v2b: return "stacking_minus_v2b";
    case StackingMode::stacking_minus_trading: return "stacking_minus_trading";
  }
  return "unknown";
}

const std::vector<StackingMode>& all_modes() {
  static const std::vector<StackingMode> modes{
      StackingMode::full_stacking,      StackingMode::v2g_only,           StackingMode::v2b_only,
      StackingMode::trading_only,       StackingMode::charge_only,        StackingMode::stacking_minus_v2g,
      StackingMode::stacking_minus_v2b, StackingMode::stacking_minus_trading};
  return modes;
}

StackingMode parse_mode(const std::string& s) {
  for (StackingMode m : all_modes())
    if (to_string(m) == s) return m;
  if (s == "full") return StackingMode::full_stacking;
  throw std::invalid_argument("unknown stacking mode '" + s + "'");
}

StreamMask stream_mask(StackingMode m) {
  switch (m) {
    case StackingMode::full_stacking: return {true, true, true, true};
    case StackingMode::v2g_only: return {false, true, false, true};
    case StackingMode::v2b_only: return {true, false, false, true};
    case StackingMode::trading_only: return {false, false, true, true};
    case StackingMode::charge_only: return {false, false, false, false};
    case StackingMode::stacking_minus_v2g: return {true, false, true, true};
    case StackingMode::stacking_minus_v2b: return {false, true, true, true};
    case StackingMode::stacking_minus_trading: return {true, true, false, true};
  }
  return {};
}

double battery_step(double b_prev, double p_charge, double p_discharge, double charge_eff, double discharge_eff,
                    double dt) {
  if (p_charge < 0 || p_discharge < 0) throw std::invalid_argument("battery powers must be nonnegative");
  if (!(discharge_eff > 0)) throw std::invalid_argument("discharge efficiency must be positive");
  return b_prev + charge_eff * p_charge * dt - p_discharge * dt / discharge_eff;
}

double thermal_step(double t_prev, double t_out, double p_ac, double hvac_mode, double heat_capacity,
                    double thermal_resistance, double dt) {
  if (!(heat_capacity > 0) || !(thermal_resistance > 0))
    throw std::invalid_argument("heat capacity and thermal resistance must be positive");
  return t_prev - (t_prev - t_out + hvac_mode * thermal_resistance * p_ac * dt) / (heat_capacity * thermal_resistance);
}

double mid_market_price(double buy, double sell) {
  if (sell > buy) throw std::invalid_argument("selling price exceeds buying price");
  if (sell < 0) throw std::invalid_argument("prices must be nonnegative");
  return 0.5 * (buy + sell);
}

TariffCost tariff_cost(const std::vector<std::vector<double>>& grid, const Tariff& tariff,
                       const std::vector<double>& realized_peak, int first_slot, double dt) {
  TariffCost c;
  std::size_t slots = grid.empty() ? 0 : grid.front().size();
  for (const auto& row : grid) {
    if (row.size() != slots) throw std::invalid_argument("grid profile rows differ in length");
    for (double g : row)
      if (g < 0) throw std::invalid_argument("grid profile must be nonnegative");
  }
  if (tariff.kind == TariffKind::tou && first_slot - 1 + slots > tariff.tou_prices.size())
    throw std::invalid_argument("TOU price series shorter than the grid profile");
  for (const auto& row : grid)
    for (std::size_t k = 0; k < slots; ++k) c.energy += tariff.retail_price(first_slot + static_cast<int>(k)) * row[k] * dt;
  if (tariff.kind == TariffKind::tou) return c;

  auto before = [&](std::size_t i) { return i < realized_peak.size() ? realized_peak[i] : 0.0; };
  if (tariff.peak_scope == PeakScope::per_community) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double peak = grid[i].empty() ? 0.0 : *std::max_element(grid[i].begin(), grid[i].end());
      c.peak += tariff.tpt_peak_price * std::max(0.0, peak - before(i));
    }
  } else {
    double peak = 0.0;
    for (std::size_t k = 0; k < slots; ++k) {
      double sum = 0.0;
      for (const auto& row : grid) sum += row[k];
      peak = std::max(peak, sum);
    }
    c.peak = tariff.tpt_peak_price * std::max(0.0, peak - before(0));
  }
  return c;
}

}  // namespace v2x
