#pragma once

#include "v2x/qp_builder.hpp"
#include "v2x/scenario.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

class NetworkError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parent/child structure of a radial feeder rooted at node 0.
struct FeederTopology {
  std::vector<int> parent;         // -1 for the slack node
  std::vector<int> branch_into;    // branch index feeding each node, -1 for the slack
  std::vector<std::vector<int>> children;
  std::vector<int> order;          // slack first, every parent before its children

  static FeederTopology build(const GridModel& grid);
};

// Flows are indexed by branch, voltages by node; the inner index is the slot
// offset inside the window.
struct FlowState {
  std::vector<std::vector<double>> active_flow;    // kW, from -> to
  std::vector<std::vector<double>> reactive_flow;  // kVAr
  std::vector<std::vector<double>> voltage;        // p.u.

  int slots() const { return voltage.empty() ? 0 : static_cast<int>(voltage.front().size()); }
};

// Variable indices of one DistFlow block; voltage[0] is -1 (the slack
// voltage is a constant).
struct DistFlowBlock {
  int first_slot = 1;
  int slots = 0;
  std::vector<std::vector<int>> active_flow;
  std::vector<std::vector<int>> reactive_flow;
  std::vector<std::vector<int>> voltage;

  FlowState extract(const GridModel& grid, const Eigen::VectorXd& x) const;
};

// injection[node][k] is the active export of `node` (kW) in slot
// first_slot + k; an empty expression means zero. For a node k fed by
// branch b from its parent:
//   p_b = sum of child flows - export_k
//   q_b = sum of child flows + Q_load_k
//   v_k = v_parent - (R_b p_b + X_b q_b) / V0
// with R, X, p, q converted to per unit.
DistFlowBlock build_distflow_block(QpBuilder& builder, const GridModel& grid,
                                   const std::vector<std::vector<LinearExpr>>& injection, int first_slot,
                                   int last_slot);

// The flow state implied by numeric injections ([node][slot]).
FlowState propagate_flows(const GridModel& grid, const std::vector<std::vector<double>>& injection);

struct NetworkViolation {
  std::string kind;  // active_balance, reactive_balance, voltage_drop, active_flow, reactive_flow, voltage_bound
  int index = 0;     // branch for flow rows, node for voltage rows
  int slot = 0;      // offset inside the state
  double magnitude = 0.0;
};

std::vector<NetworkViolation> check_solution(const GridModel& grid, const FlowState& state,
                                             const std::vector<std::vector<double>>& injection,
                                             double tol = 1e-6);

}  // namespace v2x
