#include "v2x/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace v2x {

std::string to_string(Channel c) {
  switch (c) {
    case Channel::load: return "load";
    case Channel::pv: return "pv";
    case Channel::ev: return "ev";
  }
  return "unknown";
}

Channel parse_channel(const std::string& s) {
  if (s == "load") return Channel::load;
  if (s == "pv") return Channel::pv;
  if (s == "ev") return Channel::ev;
  throw ForecastError("unknown error channel '" + s + "' (expected load, pv or ev)");
}

std::vector<double> seasonal_naive(const std::vector<double>& history, int horizon) {
  if (history.size() < 24) throw ForecastError("seasonal naive needs at least 24 values of history");
  if (horizon < 0) throw ForecastError("negative horizon");
  const std::size_t base = history.size() - 24;
  std::vector<double> out(horizon);
  for (int k = 0; k < horizon; ++k) out[k] = history[base + k % 24];
  return out;
}

namespace {

void check_shapes(const Series& a, const Series& b) {
  if (a.size() != b.size()) throw ForecastError("series have different community counts");
  for (std::size_t c = 0; c < a.size(); ++c)
    if (a[c].size() != b[c].size()) throw ForecastError("series have different lengths");
}

double norm(const Series& s) {
  double n = 0.0;
  for (const auto& row : s)
    for (double v : row) n += v * v;
  return std::sqrt(n);
}

}  // namespace

double relative_error(const Series& predicted, const Series& actual) {
  check_shapes(predicted, actual);
  double num = 0.0;
  for (std::size_t c = 0; c < actual.size(); ++c)
    for (std::size_t k = 0; k < actual[c].size(); ++k) {
      const double e = predicted[c][k] - actual[c][k];
      num += e * e;
    }
  const double den = norm(actual);
  if (den == 0.0) throw ForecastError("relative error of an all-zero actual series is undefined");
  return std::sqrt(num) / den;
}

double relative_error(const std::vector<double>& predicted, const std::vector<double>& actual) {
  return relative_error(Series{predicted}, Series{actual});
}

InjectResult inject_error(const Series& truth, double target_re, std::uint64_t seed, bool integer, double band) {
  if (!(target_re >= 0.0 && target_re <= 1.0)) throw ForecastError("target relative error must lie in [0, 1]");
  InjectResult out{truth, 0.0};
  if (target_re == 0.0) return out;
  const double tn = norm(truth);
  if (tn == 0.0) throw ForecastError("cannot inject a relative error into an all-zero series");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Series z = truth;
  for (auto& row : z)
    for (double& v : row) v = N(rng);
  const double zn = norm(z);

  auto apply = [&](double scale) {
    Series p = truth;
    for (std::size_t c = 0; c < p.size(); ++c)
      for (std::size_t k = 0; k < p[c].size(); ++k) {
        double v = std::max(0.0, truth[c][k] + scale * z[c][k]);
        p[c][k] = integer ? std::round(v) : v;
      }
    return p;
  };
  auto in_band = [&](double re) { return std::abs(re - target_re) <= band; };

  double scale = target_re * tn / zn;
  Series p = apply(scale);
  double re = relative_error(p, truth);
  // Clipping shrinks the error; one rescale usually restores it.
  if (re > 0.0) {
    scale *= target_re / re;
    p = apply(scale);
    re = relative_error(p, truth);
  }
  if (!in_band(re)) {
    // Fall back to bisection on the noise scale, keeping the closest draw.
    double lo = 0.0, hi = std::max(scale, 1e-12);
    for (int i = 0; i < 64 && relative_error(apply(hi), truth) < target_re; ++i) hi *= 2.0;
    Series best = p;
    double best_re = re;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      Series q = apply(mid);
      const double r = relative_error(q, truth);
      if (std::abs(r - target_re) < std::abs(best_re - target_re)) {
        best = q;
        best_re = r;
      }
      if (in_band(r)) break;
      (r < target_re ? lo : hi) = mid;
    }
    p = std::move(best);
    re = best_re;
  }
  out.values = std::move(p);
  out.realized_re = re;
  return out;
}

Series arrival_counts(const Scenario& s) {
  Series out(s.communities.size(), std::vector<double>(s.horizon, 0.0));
  for (std::size_t c = 0; c < s.communities.size(); ++c)
    for (const EvSpec& e : s.communities[c].fleet)
      if (e.arrival_slot >= 1 && e.arrival_slot <= s.horizon) out[c][e.arrival_slot - 1] += 1.0;
  return out;
}

namespace {

void check_range(const Scenario& s, int first, int last) {
  if (first < 1 || last > s.horizon || first > last)
    throw ForecastError("forecast window [" + std::to_string(first) + ", " + std::to_string(last) +
                        "] is outside the horizon");
}

Series slice(const Series& day, int first, int last) {
  Series out;
  for (const auto& row : day) {
    if (static_cast<int>(row.size()) < last) throw ForecastError("series shorter than the forecast window");
    out.emplace_back(row.begin() + (first - 1), row.begin() + last);
  }
  return out;
}

Series day_series(const Scenario& s, Channel ch) {
  if (ch == Channel::ev) return arrival_counts(s);
  Series out;
  for (const CommunitySpec& c : s.communities)
    out.push_back(ch == Channel::load ? c.building.inflexible_load : c.pv_available);
  return out;
}

}  // namespace

ForecastBundle TruthForecaster::predict(const Scenario& s, int first, int last) const {
  check_range(s, first, last);
  ForecastBundle b;
  b.first_slot = first;
  b.load = slice(day_series(s, Channel::load), first, last);
  b.pv = slice(day_series(s, Channel::pv), first, last);
  b.arrivals = slice(day_series(s, Channel::ev), first, last);
  b.provenance = provenance();
  return b;
}

ForecastBundle SeasonalNaiveForecaster::predict(const Scenario& s, int first, int last) const {
  check_range(s, first, last);
  Series load, pv, arrivals;
  for (const CommunitySpec& c : s.communities) {
    load.push_back(seasonal_naive(c.history.load, s.horizon));
    pv.push_back(seasonal_naive(c.history.pv, s.horizon));
    std::vector<double> a = seasonal_naive(c.history.arrivals, s.horizon);
    for (double& v : a) v = std::max(0.0, std::round(v));
    arrivals.push_back(std::move(a));
  }
  ForecastBundle b;
  b.first_slot = first;
  b.load = slice(load, first, last);
  b.pv = slice(pv, first, last);
  b.arrivals = slice(arrivals, first, last);
  b.provenance = provenance();
  return b;
}

InjectedForecaster::InjectedForecaster(const Scenario& s, Channel channel, double target_re, std::uint64_t seed)
    : channel_(channel), target_(target_re), seed_(seed) {
  InjectResult r = inject_error(day_series(s, channel), target_re, seed, channel == Channel::ev);
  day_ = std::move(r.values);
  realized_ = r.realized_re;
}

ForecastBundle InjectedForecaster::predict(const Scenario& s, int first, int last) const {
  ForecastBundle b = TruthForecaster{}.predict(s, first, last);
  Series part = slice(day_, first, last);
  switch (channel_) {
    case Channel::load: b.load = std::move(part); break;
    case Channel::pv: b.pv = std::move(part); break;
    case Channel::ev: b.arrivals = std::move(part); break;
  }
  b.provenance = provenance();
  return b;
}

std::string InjectedForecaster::provenance() const {
  std::ostringstream os;
  os << "injected(" << to_string(channel_) << "," << target_ << "," << seed_ << ")";
  return os.str();
}

std::vector<std::vector<EvSpec>> planned_fleets(const Scenario& s, const ForecastBundle& f, int t,
                                                const FleetParams& d) {
  std::vector<std::vector<EvSpec>> out(s.communities.size());
  const int dep_hour = static_cast<int>(std::round(d.departure_hour.mean));
  for (std::size_t c = 0; c < s.communities.size(); ++c) {
    const CommunitySpec& cs = s.communities[c];
    std::vector<EvSpec> fleet = cs.fleet;
    std::sort(fleet.begin(), fleet.end(), [](const EvSpec& a, const EvSpec& b) { return a.id < b.id; });
    for (const EvSpec& e : fleet)
      if (e.arrival_slot <= t) out[c].push_back(e);
    for (int u = t + 1; u <= s.horizon; ++u) {
      const int k = u - f.first_slot;
      if (k < 0 || k >= f.slots()) throw ForecastError("forecast does not cover slot " + std::to_string(u));
      const int predicted = std::max(0, static_cast<int>(std::lround(f.arrivals.at(c).at(k))));
      int kept = 0;
      for (const EvSpec& e : fleet)
        if (e.arrival_slot == u && kept < predicted) {
          out[c].push_back(e);
          ++kept;
        }
      for (int j = kept; j < predicted; ++j) {
        EvSpec e;
        e.id = -static_cast<int>((c + 1) * 100000 + u * 1000 + j + 1);
        e.community_id = cs.id;
        e.arrival_slot = u;
        e.departure_slot = std::clamp(departure_slot_for_hour(dep_hour, s.start_hour), u, s.horizon);
        e.capacity_upper = d.capacity_upper;
        e.capacity_lower = d.capacity_lower;
        e.initial_energy = 0.5 * (d.initial_min + d.initial_max);
        e.charge_limit = d.charge_limit;
        e.discharge_limit = d.discharge_limit;
        e.charge_eff = d.charge_eff;
        e.discharge_eff = d.discharge_eff;
        const double reach = e.initial_energy + e.charge_eff * e.charge_limit * s.slot_duration *
                                                    (e.departure_slot - e.arrival_slot + 1);
        e.desired_energy = std::min({d.desired_energy, reach, e.capacity_upper});
        out[c].push_back(e);
      }
    }
  }
  return out;
}

}  // namespace v2x
