#pragma once

#include "v2x/qp.hpp"
#include "v2x/qp_builder.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <optional>
#include <vector>

namespace v2x {

class MiqpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BinaryInfo {
  int var = -1;
  std::string name;
  int community = -1;
  int ev = -1;
  int slot = -1;
  // Rounding guide for the primal heuristic: the binary is set to 1 when
  // the expression is positive at the relaxation point. Empty means round
  // the relaxation value itself.
  LinearExpr hint;
};

struct MixedIntegerQP {
  QuadraticProgram qp;
  std::vector<BinaryInfo> binaries;

  int num_binaries() const { return static_cast<int>(binaries.size()); }
  void validate() const;
};

enum class MiqpStatus { optimal, infeasible, gap_limit, node_limit };

std::string to_string(MiqpStatus s);

enum class BranchRule { most_fractional, first_fractional };

struct NodeRecord {
  long id = 0;
  long parent = -1;
  int depth = 0;
  double bound = kInf;
  // Objective of the integral point found at this node, if any.
  double integral_objective = kInf;
};

struct MiqpSolution {
  Eigen::VectorXd x;
  double objective = kInf;
  MiqpStatus status = MiqpStatus::infeasible;
  long nodes = 0;
  double gap = kInf;
  double best_bound = -kInf;
  long qp_iterations = 0;
  int presolve_fixed = 0;
  std::vector<NodeRecord> trace;
};

struct MiqpSettings {
  double gap = 1e-4;
  long node_limit = 50000;
  double integrality_tol = 1e-5;
  BranchRule rule = BranchRule::most_fractional;
  bool presolve = true;
  bool heuristic = true;
  bool record_trace = false;
  // Optional CSV of (node,depth,bound,incumbent,gap).
  std::ostream* search_log = nullptr;
  QpSettings qp;
  // When set, the incumbent is re-solved with its binaries fixed under
  // these (typically tighter) settings.
  std::optional<QpSettings> final_qp;
  // Optional starting assignment, one entry per binary (NaN leaves the
  // binary to hint rounding), tried as an incumbent at the root.
  std::vector<double> start;
  // When set, each node is first solved under these looser settings and
  // pruned if that objective clears the incumbent by screen_margin
  // (relative); otherwise it is re-solved under qp.
  std::optional<QpSettings> screen_qp;
  double screen_margin = 1e-3;
};

struct BnbNode {
  long id = 0;
  long parent = -1;
  int depth = 0;
  double bound = -kInf;
  // Per binary: -1 free, otherwise the fixed value.
  std::vector<std::int8_t> fixed;
};

// Index into the binary list chosen by `rule`, or -1 if every value is
// within `tol` of an integer.
int select_branch_binary(const std::vector<double>& values, BranchRule rule, double tol);

// Children fixing the selected binary to 0 and 1 (in that order).
std::pair<BnbNode, BnbNode> branch(const BnbNode& node, const std::vector<double>& values, BranchRule rule,
                                   double tol = 1e-5);

struct PresolveResult {
  MixedIntegerQP problem;
  int fixed_binaries = 0;
  int tightened_coefficients = 0;
  bool infeasible = false;
};

// Activity-based bound propagation on the binaries and Big-M coefficient
// tightening on one-sided rows. The result has the same variables.
PresolveResult presolve(const MixedIntegerQP& m, double tol = 1e-9);

MiqpSolution solve_miqp(const MixedIntegerQP& m, const MiqpSettings& settings = {});

// Solves one QP per binary assignment. Throws MiqpError above 20 binaries.
MiqpSolution enumerate_oracle(const MixedIntegerQP& m, const QpSettings& settings = {});

}  // namespace v2x
