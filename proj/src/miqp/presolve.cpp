#include "v2x/miqp.hpp"

#include <algorithm>
#include <cmath>

namespace v2x {
namespace {

using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

struct Activity {
  double min = 0.0, max = 0.0;
  int min_inf = 0, max_inf = 0;
};

struct RowSet {
  RowMat A;
  Eigen::VectorXd lo, hi;
};

double contrib_min(double a, double lo, double hi) { return a > 0 ? a * lo : a * hi; }
double contrib_max(double a, double lo, double hi) { return a > 0 ? a * hi : a * lo; }

Activity activity(const RowMat& A, int r, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Activity act;
  for (RowMat::InnerIterator it(A, r); it; ++it) {
    const double cmin = contrib_min(it.value(), lo[it.col()], hi[it.col()]);
    const double cmax = contrib_max(it.value(), lo[it.col()], hi[it.col()]);
    if (std::isfinite(cmin)) act.min += cmin;
    else ++act.min_inf;
    if (std::isfinite(cmax)) act.max += cmax;
    else ++act.max_inf;
  }
  return act;
}

// Minimum/maximum of the row without variable j; infinite when any other
// term is unbounded.
double rest_min(const Activity& act, double a, double lo, double hi) {
  const double c = contrib_min(a, lo, hi);
  if (!std::isfinite(c)) return act.min_inf == 1 ? act.min : -kInf;
  return act.min_inf == 0 ? act.min - c : -kInf;
}

double rest_max(const Activity& act, double a, double lo, double hi) {
  const double c = contrib_max(a, lo, hi);
  if (!std::isfinite(c)) return act.max_inf == 1 ? act.max : kInf;
  return act.max_inf == 0 ? act.max - c : kInf;
}

SpMat to_col(const RowMat& a) {
  SpMat m = a;
  m.prune(0.0);
  m.makeCompressed();
  return m;
}

}  // namespace

PresolveResult presolve(const MixedIntegerQP& m, double tol) {
  PresolveResult res;
  res.problem = m;
  QuadraticProgram& qp = res.problem.qp;
  const int n = qp.num_vars();
  std::vector<char> is_bin(n, 0);
  for (const BinaryInfo& b : m.binaries) is_bin[b.var] = 1;
  Eigen::VectorXd& lo = qp.x_lower;
  Eigen::VectorXd& hi = qp.x_upper;

  RowSet eq{RowMat(qp.A_eq), qp.b_eq, qp.b_eq};
  RowSet in{RowMat(qp.A_ineq), qp.ineq_lower, qp.ineq_upper};
  const double fix_margin = 1e-7;

  for (int pass = 0; pass < 20; ++pass) {
    bool changed = false;
    for (RowSet* rs : {&eq, &in}) {
      for (int r = 0; r < rs->A.rows(); ++r) {
        const double L = rs->lo[r], U = rs->hi[r];
        Activity act = activity(rs->A, r, lo, hi);
        const double scale = 1.0 + std::max(std::abs(act.min), std::abs(act.max));
        if ((act.min_inf == 0 && act.min > U + tol * scale) || (act.max_inf == 0 && act.max < L - tol * scale)) {
          res.infeasible = true;
          return res;
        }
        for (RowMat::InnerIterator it(rs->A, r); it; ++it) {
          const int j = it.col();
          if (!is_bin[j] || lo[j] == hi[j]) continue;
          const double a = it.value();
          double imp_lo = -kInf, imp_hi = kInf;
          if (std::isfinite(U)) {
            const double rmin = rest_min(act, a, lo[j], hi[j]);
            if (std::isfinite(rmin)) {
              const double v = (U - rmin) / a;
              if (a > 0) imp_hi = std::min(imp_hi, v);
              else imp_lo = std::max(imp_lo, v);
            }
          }
          if (std::isfinite(L)) {
            const double rmax = rest_max(act, a, lo[j], hi[j]);
            if (std::isfinite(rmax)) {
              const double v = (L - rmax) / a;
              if (a > 0) imp_lo = std::max(imp_lo, v);
              else imp_hi = std::min(imp_hi, v);
            }
          }
          const double margin = fix_margin * (1.0 + scale / std::abs(a));
          if (imp_hi < 1.0 - margin) {
            if (lo[j] > 0.5) {
              res.infeasible = true;
              return res;
            }
            hi[j] = 0.0;
          } else if (imp_lo > margin) {
            if (hi[j] < 0.5) {
              res.infeasible = true;
              return res;
            }
            lo[j] = 1.0;
          } else {
            continue;
          }
          ++res.fixed_binaries;
          changed = true;
          act = activity(rs->A, r, lo, hi);
        }
      }
    }

    // Big-M coefficient tightening on one-sided inequality rows.
    for (int r = 0; r < in.A.rows(); ++r) {
      const bool upper_only = !std::isfinite(in.lo[r]) && std::isfinite(in.hi[r]);
      const bool lower_only = std::isfinite(in.lo[r]) && !std::isfinite(in.hi[r]);
      if (!upper_only && !lower_only) continue;
      for (RowMat::InnerIterator it(in.A, r); it; ++it) {
        const int j = it.col();
        if (!is_bin[j] || lo[j] == hi[j]) continue;
        Activity act = activity(in.A, r, lo, hi);
        double a = it.value();
        // Work on the "<= U" form.
        const double sign = upper_only ? 1.0 : -1.0;
        double U = sign * (upper_only ? in.hi[r] : in.lo[r]);
        a *= sign;
        const double rmax = upper_only ? rest_max(act, it.value(), lo[j], hi[j])
                                       : -rest_min(act, it.value(), lo[j], hi[j]);
        if (!std::isfinite(rmax)) continue;
        const double thresh = 1e-9 * (1.0 + std::abs(a) + std::abs(U));
        double na = a, nU = U;
        if (a < 0) {
          // y = 1 relaxes the row: rest <= U - a.
          if (rmax < U - a - thresh) na = std::min(0.0, U - rmax);
        } else if (a > 0) {
          // y = 0 relaxes the row: rest <= U.
          if (rmax < U - thresh && U - a < rmax) {
            na = a - (U - rmax);
            nU = rmax;
          }
        }
        if (na == a && nU == U) continue;
        it.valueRef() = sign * na;
        if (upper_only) in.hi[r] = sign * nU;
        else in.lo[r] = sign * nU;
        ++res.tightened_coefficients;
        changed = true;
      }
    }
    if (!changed) break;
  }
  qp.A_ineq = to_col(in.A);
  qp.ineq_lower = in.lo;
  qp.ineq_upper = in.hi;
  res.problem.qp.validate();
  return res;
}

}  // namespace v2x
