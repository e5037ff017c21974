#pragma once

#include "v2x/scenario.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

class ForecastError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Channel { load, pv, ev };

std::string to_string(Channel c);
Channel parse_channel(const std::string& s);

using Series = std::vector<std::vector<double>>;  // [community][slot]

// Prediction for slot k of the horizon is the value 24 slots before it,
// taking the last day of history as the template.
std::vector<double> seasonal_naive(const std::vector<double>& history, int horizon);

// sqrt(sum (pred - actual)^2) / sqrt(sum actual^2) over every community and
// slot.
double relative_error(const Series& predicted, const Series& actual);
double relative_error(const std::vector<double>& predicted, const std::vector<double>& actual);

struct InjectResult {
  Series values;
  double realized_re = 0.0;
};

// Adds seeded zero-mean Gaussian noise scaled so that the relative error of
// the result, after clipping at zero (and rounding for counts), lands within
// `band` of target_re.
InjectResult inject_error(const Series& truth, double target_re, std::uint64_t seed, bool integer = false,
                          double band = 0.02);

// Realized arrivals per community and slot.
Series arrival_counts(const Scenario& s);

struct ForecastBundle {
  int first_slot = 1;
  Series load;
  Series pv;
  Series arrivals;
  std::string provenance = "truth";

  int slots() const { return load.empty() ? 0 : static_cast<int>(load.front().size()); }
};

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  // Predictions for slots first..last of the scenario's day.
  virtual ForecastBundle predict(const Scenario& s, int first, int last) const = 0;
  virtual std::string provenance() const = 0;
};

class TruthForecaster : public Forecaster {
 public:
  ForecastBundle predict(const Scenario& s, int first, int last) const override;
  std::string provenance() const override { return "truth"; }
};

// Repeats the previous day's observations.
class SeasonalNaiveForecaster : public Forecaster {
 public:
  ForecastBundle predict(const Scenario& s, int first, int last) const override;
  std::string provenance() const override { return "seasonal_naive"; }
};

// Truth on every channel except one, which carries calibrated noise drawn
// once for the whole day.
class InjectedForecaster : public Forecaster {
 public:
  InjectedForecaster(const Scenario& s, Channel channel, double target_re, std::uint64_t seed);
  ForecastBundle predict(const Scenario& s, int first, int last) const override;
  std::string provenance() const override;

  Channel channel() const { return channel_; }
  double realized_re() const { return realized_; }

 private:
  Channel channel_;
  double target_;
  std::uint64_t seed_;
  double realized_ = 0.0;
  Series day_;
};

// Fleets the planner sees at slot t. EVs that have arrived by t are the
// realized records; for a later slot with n predicted and m realized
// arrivals, the first min(n, m) realized records are kept and any excess is
// filled with synthetic EVs of the default fleet parameters (negative ids).
std::vector<std::vector<EvSpec>> planned_fleets(const Scenario& s, const ForecastBundle& f, int t,
                                                const FleetParams& defaults = {});

}  // namespace v2x
