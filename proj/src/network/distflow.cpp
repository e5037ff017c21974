#include "v2x/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace v2x {
namespace {

struct BranchCoeffs {
  double r = 0.0;  // p.u. voltage per kW
  double x = 0.0;  // p.u. voltage per kVAr
};

std::vector<BranchCoeffs> drop_coeffs(const GridModel& g) {
  const double scale = 1.0 / (g.base_impedance() * g.base_kw() * g.slack_voltage);
  std::vector<BranchCoeffs> out;
  for (const Branch& b : g.branches) out.push_back({b.r_ohm * scale, b.x_ohm * scale});
  return out;
}

double q_load(const GridModel& g, int node) {
  return node < static_cast<int>(g.q_load_kvar.size()) ? g.q_load_kvar[node] : 0.0;
}

}  // namespace

FeederTopology FeederTopology::build(const GridModel& g) {
  if (g.node_count < 1) throw NetworkError("feeder has no nodes");
  FeederTopology t;
  t.parent.assign(g.node_count, -1);
  t.branch_into.assign(g.node_count, -1);
  t.children.assign(g.node_count, {});
  for (int b = 0; b < static_cast<int>(g.branches.size()); ++b) {
    const Branch& br = g.branches[b];
    if (br.from < 0 || br.from >= g.node_count || br.to < 1 || br.to >= g.node_count)
      throw NetworkError("branch " + std::to_string(b) + " references a node outside the feeder");
    if (t.branch_into[br.to] != -1) throw NetworkError("node " + std::to_string(br.to) + " has two feeding branches");
    t.branch_into[br.to] = b;
    t.parent[br.to] = br.from;
    t.children[br.from].push_back(br.to);
  }
  for (int k = 1; k < g.node_count; ++k)
    if (t.branch_into[k] == -1) throw NetworkError("node " + std::to_string(k) + " has no branch data");
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int k = queue.front();
    queue.pop_front();
    t.order.push_back(k);
    for (int c : t.children[k]) queue.push_back(c);
  }
  if (static_cast<int>(t.order.size()) != g.node_count) throw NetworkError("feeder is not connected to the slack node");
  return t;
}

DistFlowBlock build_distflow_block(QpBuilder& builder, const GridModel& grid,
                                   const std::vector<std::vector<LinearExpr>>& injection, int first_slot,
                                   int last_slot) {
  if (last_slot < first_slot) throw NetworkError("empty window");
  const FeederTopology topo = FeederTopology::build(grid);
  const int slots = last_slot - first_slot + 1;
  const int nb = static_cast<int>(grid.branches.size());
  if (!injection.empty() && static_cast<int>(injection.size()) != grid.node_count)
    throw NetworkError("injection table must have one row per node");

  const auto coeffs = drop_coeffs(grid);
  DistFlowBlock blk;
  blk.first_slot = first_slot;
  blk.slots = slots;
  blk.active_flow.assign(nb, std::vector<int>(slots, -1));
  blk.reactive_flow.assign(nb, std::vector<int>(slots, -1));
  blk.voltage.assign(grid.node_count, std::vector<int>(slots, -1));

  for (int k = 0; k < slots; ++k) {
    const std::string sfx = "@" + std::to_string(first_slot + k);
    for (int b = 0; b < nb; ++b) {
      blk.active_flow[b][k] =
          builder.add_var(grid.p_flow_min, grid.p_flow_max, "p_line" + std::to_string(b) + sfx);
      blk.reactive_flow[b][k] =
          builder.add_var(grid.q_flow_min, grid.q_flow_max, "q_line" + std::to_string(b) + sfx);
    }
    for (int n = 1; n < grid.node_count; ++n) {
      const double lo = n < static_cast<int>(grid.v_min.size()) ? grid.v_min[n] : -kInf;
      const double hi = n < static_cast<int>(grid.v_max.size()) ? grid.v_max[n] : kInf;
      blk.voltage[n][k] = builder.add_var(lo, hi, "v" + std::to_string(n) + sfx);
    }
    for (int n = 1; n < grid.node_count; ++n) {
      const int b = topo.branch_into[n];
      LinearExpr pe{{blk.active_flow[b][k], 1.0}};
      LinearExpr qe{{blk.reactive_flow[b][k], 1.0}};
      for (int c : topo.children[n]) {
        pe.push_back({blk.active_flow[topo.branch_into[c]][k], -1.0});
        qe.push_back({blk.reactive_flow[topo.branch_into[c]][k], -1.0});
      }
      if (!injection.empty() && k < static_cast<int>(injection[n].size()))
        for (const Term& t : injection[n][k]) pe.push_back(t);
      builder.add_eq(pe, 0.0);
      builder.add_eq(qe, q_load(grid, n));

      LinearExpr ve{{blk.voltage[n][k], 1.0}, {blk.active_flow[b][k], coeffs[b].r}, {blk.reactive_flow[b][k], coeffs[b].x}};
      double rhs = 0.0;
      if (topo.parent[n] == 0) rhs = grid.slack_voltage;
      else ve.push_back({blk.voltage[topo.parent[n]][k], -1.0});
      builder.add_eq(ve, rhs);
    }
  }
  return blk;
}

FlowState DistFlowBlock::extract(const GridModel& grid, const Eigen::VectorXd& x) const {
  FlowState s;
  const auto pick = [&](const std::vector<std::vector<int>>& vars) {
    std::vector<std::vector<double>> out(vars.size(), std::vector<double>(slots, 0.0));
    for (std::size_t i = 0; i < vars.size(); ++i)
      for (int k = 0; k < slots; ++k) out[i][k] = vars[i][k] >= 0 ? x[vars[i][k]] : grid.slack_voltage;
    return out;
  };
  s.active_flow = pick(active_flow);
  s.reactive_flow = pick(reactive_flow);
  s.voltage = pick(voltage);
  return s;
}

FlowState propagate_flows(const GridModel& grid, const std::vector<std::vector<double>>& injection) {
  const FeederTopology topo = FeederTopology::build(grid);
  if (static_cast<int>(injection.size()) != grid.node_count)
    throw NetworkError("injection table must have one row per node");
  const int slots = static_cast<int>(injection.front().size());
  for (const auto& row : injection)
    if (static_cast<int>(row.size()) != slots) throw NetworkError("injection rows differ in length");
  const int nb = static_cast<int>(grid.branches.size());
  const auto coeffs = drop_coeffs(grid);
  FlowState s;
  s.active_flow.assign(nb, std::vector<double>(slots, 0.0));
  s.reactive_flow.assign(nb, std::vector<double>(slots, 0.0));
  s.voltage.assign(grid.node_count, std::vector<double>(slots, grid.slack_voltage));
  for (int k = 0; k < slots; ++k) {
    for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
      const int n = *it;
      if (n == 0) continue;
      double p = -injection[n][k], q = q_load(grid, n);
      for (int c : topo.children[n]) {
        p += s.active_flow[topo.branch_into[c]][k];
        q += s.reactive_flow[topo.branch_into[c]][k];
      }
      s.active_flow[topo.branch_into[n]][k] = p;
      s.reactive_flow[topo.branch_into[n]][k] = q;
    }
    for (int n : topo.order) {
      if (n == 0) continue;
      const int b = topo.branch_into[n];
      s.voltage[n][k] = s.voltage[topo.parent[n]][k] - coeffs[b].r * s.active_flow[b][k] -
                        coeffs[b].x * s.reactive_flow[b][k];
    }
  }
  return s;
}

std::vector<NetworkViolation> check_solution(const GridModel& grid, const FlowState& state,
                                             const std::vector<std::vector<double>>& injection, double tol) {
  const FeederTopology topo = FeederTopology::build(grid);
  const int nb = static_cast<int>(grid.branches.size());
  const int slots = state.slots();
  auto shaped = [&](const std::vector<std::vector<double>>& m, int rows) {
    if (static_cast<int>(m.size()) != rows) return false;
    return std::all_of(m.begin(), m.end(), [&](const auto& r) { return static_cast<int>(r.size()) == slots; });
  };
  if (!shaped(state.active_flow, nb) || !shaped(state.reactive_flow, nb) || !shaped(state.voltage, grid.node_count) ||
      !shaped(injection, grid.node_count))
    throw NetworkError("flow state and injections have inconsistent shapes");

  const auto coeffs = drop_coeffs(grid);
  std::vector<NetworkViolation> out;
  auto report = [&](const char* kind, int index, int slot, double magnitude) {
    if (!(std::abs(magnitude) <= tol)) out.push_back({kind, index, slot, magnitude});
  };
  auto excess = [](double v, double lo, double hi) { return v > hi ? v - hi : (v < lo ? v - lo : 0.0); };
  for (int k = 0; k < slots; ++k) {
    report("voltage_drop", 0, k, state.voltage[0][k] - grid.slack_voltage);
    for (int n = 1; n < grid.node_count; ++n) {
      const int b = topo.branch_into[n];
      double p = state.active_flow[b][k] + injection[n][k];
      double q = state.reactive_flow[b][k] - q_load(grid, n);
      for (int c : topo.children[n]) {
        p -= state.active_flow[topo.branch_into[c]][k];
        q -= state.reactive_flow[topo.branch_into[c]][k];
      }
      report("active_balance", b, k, p);
      report("reactive_balance", b, k, q);
      const double drop = state.voltage[n][k] - state.voltage[topo.parent[n]][k] +
                          coeffs[b].r * state.active_flow[b][k] + coeffs[b].x * state.reactive_flow[b][k];
      report("voltage_drop", n, k, drop);
      const double lo = n < static_cast<int>(grid.v_min.size()) ? grid.v_min[n] : -kInf;
      const double hi = n < static_cast<int>(grid.v_max.size()) ? grid.v_max[n] : kInf;
      report("voltage_bound", n, k, excess(state.voltage[n][k], lo, hi));
    }
    for (int b = 0; b < nb; ++b) {
      report("active_flow", b, k, excess(state.active_flow[b][k], grid.p_flow_min, grid.p_flow_max));
      report("reactive_flow", b, k, excess(state.reactive_flow[b][k], grid.q_flow_min, grid.q_flow_max));
    }
  }
  return out;
}

}  // namespace v2x
