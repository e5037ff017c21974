#include "v2x/scenario.hpp"

#include "util/text.hpp"

#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>

namespace v2x {
using detail::trim;
namespace {

struct Stamp {
  long long hours;  // since 1970-01-01T00
  int hour;
};

bool parse_stamp(const std::string& s, Stamp& out) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed) != 6) return false;
  if (sep != 'T' && sep != ' ') return false;
  std::string rest = s.substr(consumed);
  if (!rest.empty() && rest[0] == ':') {
    int c2 = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &sec, &c2) != 1) return false;
    rest = rest.substr(c2);
  }
  if (!rest.empty() && rest != "Z") return false;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi != 0 || sec != 0) return false;
  out.hours = static_cast<long long>(sys_days(ymd).time_since_epoch().count()) * 24 + h;
  out.hour = h;
  return true;
}

}  // namespace

PriceSeries load_price_series(const std::filesystem::path& path, const std::string& market_label) {
  std::ifstream in(path);
  if (!in) throw IoError("price file not found: " + path.string());
  PriceSeries out;
  out.market = market_label;
  std::string line;
  int lineno = 0;
  bool header = false;
  long long prev = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      if (line != "timestamp,price")
        throw ScenarioError(path.string() + ": expected header 'timestamp,price', got '" + line + "'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    const std::string where = path.string() + " line " + std::to_string(lineno);
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ScenarioError(where + ": unparsable row '" + line + "'");
    const std::string ts = trim(line.substr(0, comma));
    const std::string pv = trim(line.substr(comma + 1));
    Stamp st{};
    if (!parse_stamp(ts, st)) throw ScenarioError(where + ": unparsable timestamp '" + ts + "'");
    double price = 0.0;
    if (!detail::parse_double(pv, price) || !std::isfinite(price))
      throw ScenarioError(where + ": unparsable price '" + pv + "'");
    if (!out.prices.empty()) {
      if (st.hours <= prev) throw ScenarioError(where + ": non-monotone timestamp " + ts);
      if (st.hours != prev + 1) {
        const int missing = static_cast<int>((prev + 1) % 24);
        throw ScenarioError(where + ": gap in hourly series, missing hour " + std::to_string(missing) + " before " +
                            ts);
      }
    } else {
      out.first_hour = st.hour;
    }
    prev = st.hours;
    out.timestamps.push_back(ts);
    out.prices.push_back(price);
  }
  if (!header) throw ScenarioError(path.string() + ": empty price file");
  return out;
}

std::vector<std::vector<double>> split_days(const PriceSeries& series, int start_hour) {
  std::vector<std::vector<double>> days;
  std::size_t first = static_cast<std::size_t>((start_hour - series.first_hour + 24) % 24);
  for (std::size_t i = first; i + 24 <= series.prices.size(); i += 24)
    days.emplace_back(series.prices.begin() + static_cast<long>(i), series.prices.begin() + static_cast<long>(i + 24));
  return days;
}

void write_price_csv(const std::filesystem::path& path, const std::string& date, int start_hour,
                     const std::vector<double>& prices) {
  int y = 0, mo = 0, d = 0;
  if (std::sscanf(date.c_str(), "%4d-%2d-%2d", &y, &mo, &d) != 3) throw ScenarioError("bad date '" + date + "'");
  using namespace std::chrono;
  sys_days day0 = sys_days(year_month_day{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp,price\n";
  for (std::size_t t = 0; t < prices.size(); ++t) {
    const long long hours = static_cast<long long>(start_hour) + static_cast<long long>(t);
    const year_month_day ymd{day0 + days{hours / 24}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:00", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hours % 24);
    out << buf << ',' << detail::fmt(prices[t]) << '\n';
  }
}

}  // namespace v2x
