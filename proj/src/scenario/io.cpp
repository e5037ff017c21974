#include "v2x/scenario.hpp"

#include "util/text.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace v2x {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const char* kFormat = "v2x-scenario/1";

json ev_json(const EvSpec& e) {
  return {{"id", e.id},
          {"community_id", e.community_id},
          {"arrival_slot", e.arrival_slot},
          {"departure_slot", e.departure_slot},
          {"capacity_upper", e.capacity_upper},
          {"capacity_lower", e.capacity_lower},
          {"initial_energy", e.initial_energy},
          {"desired_energy", e.desired_energy},
          {"charge_limit", e.charge_limit},
          {"discharge_limit", e.discharge_limit},
          {"charge_eff", e.charge_eff},
          {"discharge_eff", e.discharge_eff}};
}

EvSpec ev_from(const json& j) {
  EvSpec e;
  e.id = j.at("id").get<int>();
  e.community_id = j.at("community_id").get<int>();
  e.arrival_slot = j.at("arrival_slot").get<int>();
  e.departure_slot = j.at("departure_slot").get<int>();
  e.capacity_upper = j.at("capacity_upper").get<double>();
  e.capacity_lower = j.at("capacity_lower").get<double>();
  e.initial_energy = j.at("initial_energy").get<double>();
  e.desired_energy = j.at("desired_energy").get<double>();
  e.charge_limit = j.at("charge_limit").get<double>();
  e.discharge_limit = j.at("discharge_limit").get<double>();
  e.charge_eff = j.at("charge_eff").get<double>();
  e.discharge_eff = j.at("discharge_eff").get<double>();
  return e;
}

json community_json(const CommunitySpec& c) {
  const BuildingSpec& b = c.building;
  json fleet = json::array();
  for (const EvSpec& e : c.fleet) fleet.push_back(ev_json(e));
  return {{"id", c.id},
          {"node_id", c.node_id},
          {"grid_import_cap", c.grid_import_cap},
          {"trade_buy_cap", c.trade_buy_cap},
          {"trade_sell_cap", c.trade_sell_cap},
          {"v2b_cap", c.v2b_cap},
          {"v2g_cap", c.v2g_cap},
          {"pv_available", c.pv_available},
          {"building",
           {{"inflexible_load", b.inflexible_load},
            {"outdoor_temp", b.outdoor_temp},
            {"preferred_temp", b.preferred_temp},
            {"temp_min", b.temp_min},
            {"temp_max", b.temp_max},
            {"hvac_min", b.hvac_min},
            {"hvac_max", b.hvac_max},
            {"heat_capacity", b.heat_capacity},
            {"thermal_resistance", b.thermal_resistance},
            {"hvac_mode", b.hvac_mode},
            {"discomfort_coeff", b.discomfort_coeff},
            {"initial_indoor_temp", b.initial_indoor_temp}}},
          {"history", {{"load", c.history.load}, {"pv", c.history.pv}, {"arrivals", c.history.arrivals}}},
          {"fleet", fleet}};
}

CommunitySpec community_from(const json& j) {
  CommunitySpec c;
  c.id = j.at("id").get<int>();
  c.node_id = j.at("node_id").get<int>();
  c.grid_import_cap = j.at("grid_import_cap").get<double>();
  c.trade_buy_cap = j.at("trade_buy_cap").get<double>();
  c.trade_sell_cap = j.at("trade_sell_cap").get<double>();
  c.v2b_cap = j.at("v2b_cap").get<double>();
  c.v2g_cap = j.at("v2g_cap").get<double>();
  c.pv_available = j.at("pv_available").get<std::vector<double>>();
  const json& b = j.at("building");
  BuildingSpec& bs = c.building;
  bs.inflexible_load = b.at("inflexible_load").get<std::vector<double>>();
  bs.outdoor_temp = b.at("outdoor_temp").get<std::vector<double>>();
  bs.preferred_temp = b.at("preferred_temp").get<double>();
  bs.temp_min = b.at("temp_min").get<double>();
  bs.temp_max = b.at("temp_max").get<double>();
  bs.hvac_min = b.at("hvac_min").get<double>();
  bs.hvac_max = b.at("hvac_max").get<double>();
  bs.heat_capacity = b.at("heat_capacity").get<double>();
  bs.thermal_resistance = b.at("thermal_resistance").get<double>();
  bs.hvac_mode = b.at("hvac_mode").get<double>();
  bs.discomfort_coeff = b.at("discomfort_coeff").get<double>();
  bs.initial_indoor_temp = b.at("initial_indoor_temp").get<double>();
  if (j.contains("history")) {
    const json& h = j.at("history");
    c.history.load = h.value("load", std::vector<double>{});
    c.history.pv = h.value("pv", std::vector<double>{});
    c.history.arrivals = h.value("arrivals", std::vector<double>{});
  }
  for (const json& e : j.at("fleet")) c.fleet.push_back(ev_from(e));
  return c;
}

json header_json(const Scenario& s) {
  return {{"format", kFormat},
          {"name", s.name},
          {"date", s.date},
          {"horizon", s.horizon},
          {"slot_duration", s.slot_duration},
          {"start_hour", s.start_hour},
          {"battery_degradation_coeff", s.battery_degradation_coeff},
          {"big_m", s.big_m},
          {"rng_seed", s.rng_seed}};
}

json tariff_scalars(const Tariff& t) {
  return {{"kind", t.kind == TariffKind::tou ? "tou" : "tpt"},
          {"tpt_energy_price", t.tpt_energy_price},
          {"tpt_peak_price", t.tpt_peak_price},
          {"peak_scope", t.peak_scope == PeakScope::per_community ? "per_community" : "coincident"},
          {"currency", t.currency}};
}

json grid_scalars(const GridModel& g) {
  return {{"node_count", g.node_count},   {"p_flow_min", g.p_flow_min},       {"p_flow_max", g.p_flow_max},
          {"q_flow_min", g.q_flow_min},   {"q_flow_max", g.q_flow_max},       {"slack_voltage", g.slack_voltage},
          {"base_mva", g.base_mva},       {"base_kv", g.base_kv}};
}

json canonical_json(const Scenario& s) {
  json j = header_json(s);
  json t = tariff_scalars(s.tariff);
  t["tou_prices"] = s.tariff.tou_prices;
  t["v2g_prices"] = s.tariff.v2g_prices;
  j["tariff"] = t;
  json g = grid_scalars(s.grid);
  json br = json::array();
  for (const Branch& b : s.grid.branches) br.push_back({b.from, b.to, b.r_ohm, b.x_ohm});
  g["branches"] = br;
  g["q_load_kvar"] = s.grid.q_load_kvar;
  g["v_min"] = s.grid.v_min;
  g["v_max"] = s.grid.v_max;
  j["grid"] = g;
  json cs = json::array();
  for (const CommunitySpec& c : s.communities) cs.push_back(community_json(c));
  j["communities"] = cs;
  return j;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

std::vector<std::vector<std::string>> read_table(const fs::path& p, const std::string& header) {
  std::ifstream in(p);
  if (!in) throw IoError("file not found: " + p.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool seen = false;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (!seen) {
      if (t != header) throw ScenarioError(p.string() + ": expected header '" + header + "'");
      seen = true;
      continue;
    }
    rows.push_back(detail::split(t));
  }
  return rows;
}

double num(const std::string& s, const fs::path& p) {
  double v = 0;
  if (!detail::parse_double(s, v)) throw ScenarioError(p.string() + ": bad number '" + s + "'");
  return v;
}

}  // namespace

void save_scenario(const Scenario& s, const fs::path& json_path) {
  const fs::path dir = json_path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  const std::string stem = json_path.stem().string();
  const std::string tou = stem + ".tou.csv", v2g = stem + ".v2g.csv";
  const std::string branches = stem + ".branches.csv", nodes = stem + ".nodes.csv";

  json j = header_json(s);
  json t = tariff_scalars(s.tariff);
  if (!s.tariff.tou_prices.empty()) {
    t["tou_prices_csv"] = tou;
    write_price_csv(dir / tou, s.date, s.start_hour, s.tariff.tou_prices);
  }
  t["v2g_prices_csv"] = v2g;
  write_price_csv(dir / v2g, s.date, s.start_hour, s.tariff.v2g_prices);
  j["tariff"] = t;

  json g = grid_scalars(s.grid);
  g["branches_csv"] = branches;
  g["nodes_csv"] = nodes;
  j["grid"] = g;
  {
    std::ofstream out = open_out(dir / branches);
    out << "branch,from,to,r_ohm,x_ohm\n";
    for (std::size_t b = 0; b < s.grid.branches.size(); ++b) {
      const Branch& br = s.grid.branches[b];
      out << b << ',' << br.from << ',' << br.to << ',' << detail::fmt(br.r_ohm) << ',' << detail::fmt(br.x_ohm)
          << '\n';
    }
  }
  {
    std::ofstream out = open_out(dir / nodes);
    out << "node,v_min_pu,v_max_pu,q_load_kvar\n";
    for (int k = 0; k < s.grid.node_count; ++k) {
      auto at = [&](const std::vector<double>& v) { return k < static_cast<int>(v.size()) ? v[k] : 0.0; };
      out << k << ',' << detail::fmt(at(s.grid.v_min)) << ',' << detail::fmt(at(s.grid.v_max)) << ','
          << detail::fmt(at(s.grid.q_load_kvar)) << '\n';
    }
  }
  json cs = json::array();
  for (const CommunitySpec& c : s.communities) cs.push_back(community_json(c));
  j["communities"] = cs;
  std::ofstream out = open_out(json_path);
  out << j.dump(2) << '\n';
}

Scenario load_scenario(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("scenario file not found: " + json_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ScenarioError(json_path.string() + ": " + e.what());
  }
  const fs::path dir = json_path.parent_path();
  Scenario s;
  try {
    if (j.value("format", std::string()) != kFormat)
      throw ScenarioError(json_path.string() + ": unknown format tag");
    s.name = j.at("name").get<std::string>();
    s.date = j.at("date").get<std::string>();
    s.horizon = j.at("horizon").get<int>();
    s.slot_duration = j.at("slot_duration").get<double>();
    s.start_hour = j.at("start_hour").get<int>();
    s.battery_degradation_coeff = j.at("battery_degradation_coeff").get<double>();
    s.big_m = j.at("big_m").get<double>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();

    const json& t = j.at("tariff");
    const std::string kind = t.at("kind").get<std::string>();
    if (kind != "tou" && kind != "tpt") throw ScenarioError("tariff kind must be 'tou' or 'tpt'");
    s.tariff.kind = kind == "tou" ? TariffKind::tou : TariffKind::tpt;
    s.tariff.tpt_energy_price = t.at("tpt_energy_price").get<double>();
    s.tariff.tpt_peak_price = t.at("tpt_peak_price").get<double>();
    const std::string scope = t.value("peak_scope", std::string("per_community"));
    if (scope != "per_community" && scope != "coincident") throw ScenarioError("unknown peak_scope '" + scope + "'");
    s.tariff.peak_scope = scope == "per_community" ? PeakScope::per_community : PeakScope::coincident;
    s.tariff.currency = t.value("currency", std::string("AUD"));
    if (t.contains("tou_prices_csv"))
      s.tariff.tou_prices = load_price_series(dir / t.at("tou_prices_csv").get<std::string>(), "tou").prices;
    s.tariff.v2g_prices = load_price_series(dir / t.at("v2g_prices_csv").get<std::string>(), "v2g").prices;

    const json& g = j.at("grid");
    GridModel& gm = s.grid;
    gm.node_count = g.at("node_count").get<int>();
    gm.p_flow_min = g.at("p_flow_min").get<double>();
    gm.p_flow_max = g.at("p_flow_max").get<double>();
    gm.q_flow_min = g.at("q_flow_min").get<double>();
    gm.q_flow_max = g.at("q_flow_max").get<double>();
    gm.slack_voltage = g.at("slack_voltage").get<double>();
    gm.base_mva = g.at("base_mva").get<double>();
    gm.base_kv = g.at("base_kv").get<double>();
    const fs::path bp = dir / g.at("branches_csv").get<std::string>();
    for (const auto& row : read_table(bp, "branch,from,to,r_ohm,x_ohm")) {
      if (row.size() != 5) throw ScenarioError(bp.string() + ": expected 5 columns");
      gm.branches.push_back({static_cast<int>(num(row[1], bp)), static_cast<int>(num(row[2], bp)), num(row[3], bp),
                             num(row[4], bp)});
    }
    const fs::path np = dir / g.at("nodes_csv").get<std::string>();
    const auto rows = read_table(np, "node,v_min_pu,v_max_pu,q_load_kvar");
    gm.v_min.assign(gm.node_count, 0.95);
    gm.v_max.assign(gm.node_count, 1.05);
    gm.q_load_kvar.assign(gm.node_count, 0.0);
    for (const auto& row : rows) {
      if (row.size() != 4) throw ScenarioError(np.string() + ": expected 4 columns");
      const int k = static_cast<int>(num(row[0], np));
      if (k < 0 || k >= gm.node_count) throw ScenarioError(np.string() + ": node " + row[0] + " out of range");
      gm.v_min[k] = num(row[1], np);
      gm.v_max[k] = num(row[2], np);
      gm.q_load_kvar[k] = num(row[3], np);
    }
    for (const json& c : j.at("communities")) s.communities.push_back(community_from(c));
  } catch (const json::exception& e) {
    throw ScenarioError(json_path.string() + ": " + e.what());
  }
  return s;
}

std::uint64_t scenario_hash(const Scenario& s) {
  const std::string text = canonical_json(s).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string scenario_hash_hex(const Scenario& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, scenario_hash(s));
  return buf;
}

}  // namespace v2x
