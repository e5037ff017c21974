#include "v2x/qp.hpp"

#include <algorithm>
#include <cmath>

namespace v2x {
namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

struct RowBlock {
  const Eigen::VectorXd& activity;
  const Eigen::VectorXd& lower;
  const Eigen::VectorXd& upper;
  const Eigen::VectorXd& mult;
};

}  // namespace

KktResiduals kkt_residuals(const QuadraticProgram& qp, const QpSolution& sol) {
  const int n = qp.num_vars();
  if (sol.x.size() != n || sol.dual_eq.size() != qp.num_eq() || sol.dual_ineq.size() != qp.num_ineq() ||
      sol.dual_box.size() != n)
    throw QpError("kkt_residuals: solution dimensions do not match the problem");

  const Eigen::VectorXd& x = sol.x;
  Eigen::VectorXd aeq = qp.A_eq * x;
  Eigen::VectorXd ain = qp.A_ineq * x;

  double prim = inf_norm(aeq - qp.b_eq);
  double prim_scale = std::max({1.0, inf_norm(aeq), inf_norm(qp.b_eq), inf_norm(ain), inf_norm(x)});

  const RowBlock blocks[] = {{ain, qp.ineq_lower, qp.ineq_upper, sol.dual_ineq},
                             {x, qp.x_lower, qp.x_upper, sol.dual_box}};
  double sign_violation = 0.0;
  double comp = 0.0;
  for (const RowBlock& b : blocks) {
    for (int i = 0; i < b.activity.size(); ++i) {
      const double a = b.activity[i];
      prim = std::max({prim, b.lower[i] - a, a - b.upper[i]});
      const double lam = b.mult[i];
      if (lam > 0) {
        if (!std::isfinite(b.lower[i])) sign_violation = std::max(sign_violation, lam);
        else comp = std::max(comp, lam * std::abs(a - b.lower[i]));
      } else if (lam < 0) {
        if (!std::isfinite(b.upper[i])) sign_violation = std::max(sign_violation, -lam);
        else comp = std::max(comp, -lam * std::abs(b.upper[i] - a));
      }
    }
  }

  Eigen::VectorXd px = qp.P * x;
  Eigen::VectorXd aty = qp.A_eq.transpose() * sol.dual_eq + qp.A_ineq.transpose() * sol.dual_ineq + sol.dual_box;
  double dual = inf_norm(px + qp.q - aty);
  double dual_scale = std::max({1.0, inf_norm(px), inf_norm(qp.q), inf_norm(aty)});

  double lam_scale = std::max({1.0, inf_norm(sol.dual_ineq), inf_norm(sol.dual_box)});

  KktResiduals r;
  r.primal = std::max(prim, 0.0) / prim_scale;
  r.dual = std::max(dual / dual_scale, sign_violation / lam_scale);
  r.complementarity = comp / lam_scale;
  return r;
}

}  // namespace v2x
