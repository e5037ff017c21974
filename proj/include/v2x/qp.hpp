#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class QpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Convex QP in canonical form
//
//   minimize   0.5 x'Px + q'x + offset
//   subject to A_eq x = b_eq
//              ineq_lower <= A_ineq x <= ineq_upper
//              x_lower <= x <= x_upper
//
// P holds the full symmetric matrix (both triangles).
struct QuadraticProgram {
  SpMat P;
  Eigen::VectorXd q;
  double offset = 0.0;
  SpMat A_eq;
  Eigen::VectorXd b_eq;
  SpMat A_ineq;
  Eigen::VectorXd ineq_lower;
  Eigen::VectorXd ineq_upper;
  Eigen::VectorXd x_lower;
  Eigen::VectorXd x_upper;
  std::vector<std::string> names;

  int num_vars() const { return static_cast<int>(q.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }
  int num_ineq() const { return static_cast<int>(ineq_lower.size()); }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(P * x) + q.dot(x) + offset;
  }

  // Throws QpError on inconsistent shapes, asymmetric P or negative diagonal.
  void validate() const;
};

enum class QpStatus { optimal, infeasible, unbounded, max_iterations };

std::string to_string(QpStatus s);

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
};

// Multipliers follow P x + q = A_eq' nu + A_ineq' lambda + mu: a constraint
// pushing the solution up (active lower bound) has a nonnegative multiplier,
// an active upper bound a nonpositive one.
struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd dual_eq;
  Eigen::VectorXd dual_ineq;
  Eigen::VectorXd dual_box;
  double objective = kInf;
  QpStatus status = QpStatus::max_iterations;
  int iterations = 0;
  bool polished = false;
  KktResiduals residuals;
  std::string diagnostic;
};

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_prim_inf = 1e-6;
  double eps_dual_inf = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iters = 15;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 50;
  int check_interval = 5;
  bool polish = true;
  int polish_refine_iters = 8;
  // Each retry continues ADMM with tolerances divided by 10 before polishing
  // again.
  int polish_retries = 3;
  // Acceptance threshold on the scaled KKT residuals of a result.
  double kkt_tol = 1e-6;
};

struct WarmStart {
  Eigen::VectorXd x;
  // Multipliers in QpSolution convention, stacked [eq; ineq; box].
  Eigen::VectorXd y;
};

// Scaled infinity-norm residuals: each is divided by max(1, magnitude of the
// terms it balances).
KktResiduals kkt_residuals(const QuadraticProgram& qp, const QpSolution& sol);

// Reusable solver for one constraint structure. Box bounds and constraint
// bounds may change between solves (branch-and-bound fixes binaries this
// way) while the factorization pattern is kept.
class QpSolver {
 public:
  explicit QpSolver(const QuadraticProgram& qp, QpSettings settings = {});
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;

  void set_box_bounds(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);
  const Eigen::VectorXd& box_lower() const;
  const Eigen::VectorXd& box_upper() const;

  QpSolution solve(const WarmStart* warm = nullptr);

  const QuadraticProgram& problem() const;
  const QpSettings& settings() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings = {},
                    const WarmStart* warm = nullptr);

// Plain-text dump: header line "qp <n> <m_eq> <m_ineq> <nnzP> <nnzAeq>
// <nnzAineq>", then sections "P", "q", "offset", "Aeq", "beq", "Aineq",
// "ineq_lower", "ineq_upper", "x_lower", "x_upper", "names". Matrix sections
// list "row col value" triplets, vector sections one value per line, "inf"
// and "-inf" for unbounded entries.
void write_qp_text(std::ostream& os, const QuadraticProgram& qp);
QuadraticProgram read_qp_text(std::istream& is);

}  // namespace v2x
