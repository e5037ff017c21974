// Operator-splitting QP solver: ADMM on the splitting Ax = z, z in [l, u],
// with Ruiz equilibration, adaptive penalty, infeasibility certificates and
// an active-set polishing step that recovers high-accuracy solutions.

#include "v2x/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace v2x {
namespace {

constexpr double kInfThreshold = 1e19;
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqFactor = 1e3;
constexpr double kPolishDelta = 1e-7;

using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool is_finite_bound(double b) { return std::abs(b) < kInfThreshold; }

VectorXd col_inf_norms(const SpMat& M) {
  VectorXd out = VectorXd::Zero(M.cols());
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it) out[j] = std::max(out[j], std::abs(it.value()));
  return out;
}

VectorXd row_inf_norms(const SpMat& M) {
  VectorXd out = VectorXd::Zero(M.rows());
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
  return out;
}

double limit_scaling(double v) {
  if (v < kMinScaling) return 1.0;
  return std::min(v, kMaxScaling);
}

}  // namespace

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::unbounded: return "unbounded";
    case QpStatus::max_iterations: return "max-iterations";
  }
  return "unknown";
}

void QuadraticProgram::validate() const {
  const int n = num_vars();
  auto fail = [](const std::string& what) { throw QpError("QuadraticProgram: " + what); };
  if (P.rows() != n || P.cols() != n) fail("P must be n x n");
  if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) fail("A_eq/b_eq shape mismatch");
  if (A_ineq.cols() != n || A_ineq.rows() != ineq_lower.size() || ineq_upper.size() != ineq_lower.size())
    fail("A_ineq/bounds shape mismatch");
  if (x_lower.size() != n || x_upper.size() != n) fail("box bounds shape mismatch");
  if (!names.empty() && static_cast<int>(names.size()) != n) fail("names size mismatch");
  SpMat asym = SpMat(P.transpose()) - P;
  for (int j = 0; j < asym.outerSize(); ++j)
    for (SpMat::InnerIterator it(asym, j); it; ++it)
      if (std::abs(it.value()) > 1e-9 * (1.0 + std::abs(P.coeff(it.row(), it.col()))))
        fail("P is not symmetric");
  for (int i = 0; i < n; ++i)
    if (P.coeff(i, i) < 0.0) fail("P has a negative diagonal entry (not PSD) at " + std::to_string(i));
  for (int i = 0; i < n; ++i)
    if (x_lower[i] > x_upper[i]) fail("box lower > upper at variable " + std::to_string(i));
  for (int i = 0; i < num_ineq(); ++i)
    if (ineq_lower[i] > ineq_upper[i]) fail("inequality lower > upper at row " + std::to_string(i));
}

struct QpSolver::Impl {
  QuadraticProgram qp;
  QpSettings st;
  int n = 0, m = 0, m_eq = 0, m_in = 0;
  std::vector<int> box_vars;
  std::vector<int> box_row;  // per variable, -1 when no box row

  // Stacked unscaled data.
  SpMat A;
  VectorXd l, u;

  // Scaling.
  VectorXd D, E, Dinv, Einv;
  double c = 1.0, cinv = 1.0;

  // Scaled data.
  SpMat Ps, As, AsT;
  VectorXd qs, ls, us;

  VectorXd rho, rho_inv;
  SpMat K;
  std::vector<int> k_rho_pos;  // value index of each constraint diagonal in K
  Ldlt ldlt;
  bool factor_ok = false;

  // ADMM iterates (scaled).
  VectorXd x, z, y;

  void build(const QuadraticProgram& in, const QpSettings& s) {
    qp = in;
    st = s;
    qp.validate();
    n = qp.num_vars();
    m_eq = qp.num_eq();
    m_in = qp.num_ineq();
    box_row.assign(n, -1);
    for (int j = 0; j < n; ++j)
      if (is_finite_bound(qp.x_lower[j]) || is_finite_bound(qp.x_upper[j])) {
        box_row[j] = static_cast<int>(box_vars.size());
        box_vars.push_back(j);
      }
    m = m_eq + m_in + static_cast<int>(box_vars.size());

    std::vector<Triplet> trip;
    trip.reserve(qp.A_eq.nonZeros() + qp.A_ineq.nonZeros() + box_vars.size());
    for (int j = 0; j < qp.A_eq.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.A_eq, j); it; ++it) trip.emplace_back(it.row(), j, it.value());
    for (int j = 0; j < qp.A_ineq.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.A_ineq, j); it; ++it) trip.emplace_back(m_eq + it.row(), j, it.value());
    for (std::size_t k = 0; k < box_vars.size(); ++k)
      trip.emplace_back(m_eq + m_in + static_cast<int>(k), box_vars[k], 1.0);
    A.resize(m, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();

    l.resize(m);
    u.resize(m);
    l.head(m_eq) = qp.b_eq;
    u.head(m_eq) = qp.b_eq;
    l.segment(m_eq, m_in) = qp.ineq_lower;
    u.segment(m_eq, m_in) = qp.ineq_upper;
    for (std::size_t k = 0; k < box_vars.size(); ++k) {
      l[m_eq + m_in + k] = qp.x_lower[box_vars[k]];
      u[m_eq + m_in + k] = qp.x_upper[box_vars[k]];
    }
    for (int i = 0; i < m; ++i) {
      if (!is_finite_bound(l[i])) l[i] = -kInf;
      if (!is_finite_bound(u[i])) u[i] = kInf;
    }

    equilibrate();
    scale_bounds();
    init_rho();
    build_kkt();
    ldlt.analyzePattern(K);
    factorize();
    x = VectorXd::Zero(n);
    z = VectorXd::Zero(m);
    y = VectorXd::Zero(m);
  }

  void equilibrate() {
    SpMat Pw = qp.P;
    SpMat Aw = A;
    VectorXd qw = qp.q;
    D = VectorXd::Ones(n);
    E = VectorXd::Ones(m);
    c = 1.0;
    for (int it = 0; it < st.scaling_iters; ++it) {
      VectorXd dcol = col_inf_norms(Pw).cwiseMax(col_inf_norms(Aw));
      VectorXd erow = row_inf_norms(Aw);
      VectorXd dd(n), ee(m);
      for (int j = 0; j < n; ++j) dd[j] = 1.0 / std::sqrt(limit_scaling(dcol[j]));
      for (int i = 0; i < m; ++i) ee[i] = 1.0 / std::sqrt(limit_scaling(erow[i]));
      Pw = dd.asDiagonal() * Pw * dd.asDiagonal();
      Aw = ee.asDiagonal() * Aw * dd.asDiagonal();
      qw = dd.cwiseProduct(qw);
      D = D.cwiseProduct(dd);
      E = E.cwiseProduct(ee);
      VectorXd pn = col_inf_norms(Pw);
      double cost_norm = std::max(n > 0 ? pn.mean() : 0.0, inf_norm(qw));
      double gamma = 1.0 / limit_scaling(cost_norm);
      Pw *= gamma;
      qw *= gamma;
      c *= gamma;
    }
    Ps = Pw;
    As = Aw;
    As.makeCompressed();
    AsT = As.transpose();
    qs = qw;
    Dinv = D.cwiseInverse();
    Einv = E.cwiseInverse();
    cinv = 1.0 / c;
  }

  void scale_bounds() {
    ls.resize(m);
    us.resize(m);
    for (int i = 0; i < m; ++i) {
      ls[i] = std::isfinite(l[i]) ? E[i] * l[i] : -kInf;
      us[i] = std::isfinite(u[i]) ? E[i] * u[i] : kInf;
    }
  }

  double row_rho(int i, double base) const {
    if (!std::isfinite(l[i]) && !std::isfinite(u[i])) return kRhoMin;
    if (u[i] - l[i] < 1e-12 * (1.0 + std::abs(l[i]))) return std::min(kRhoEqFactor * base, kRhoMax);
    return base;
  }

  double base_rho = 0.1;

  void init_rho() {
    base_rho = std::clamp(st.rho, kRhoMin, kRhoMax);
    rho.resize(m);
    for (int i = 0; i < m; ++i) rho[i] = row_rho(i, base_rho);
    rho_inv = rho.cwiseInverse();
  }

  void build_kkt() {
    std::vector<Triplet> trip;
    trip.reserve(Ps.nonZeros() + As.nonZeros() + n + m);
    for (int j = 0; j < Ps.outerSize(); ++j)
      for (SpMat::InnerIterator it(Ps, j); it; ++it)
        if (it.row() > j) trip.emplace_back(it.row(), j, it.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, Ps.coeff(j, j) + st.sigma);
    for (int j = 0; j < As.outerSize(); ++j)
      for (SpMat::InnerIterator it(As, j); it; ++it) trip.emplace_back(n + it.row(), j, it.value());
    for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -rho_inv[i]);
    K.resize(n + m, n + m);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    k_rho_pos.assign(m, -1);
    for (int i = 0; i < m; ++i) {
      const int col = n + i;
      for (int k = K.outerIndexPtr()[col]; k < K.outerIndexPtr()[col + 1]; ++k)
        if (K.innerIndexPtr()[k] == col) k_rho_pos[i] = k;
    }
  }

  void factorize() {
    for (int i = 0; i < m; ++i) K.valuePtr()[k_rho_pos[i]] = -rho_inv[i];
    ldlt.factorize(K);
    factor_ok = ldlt.info() == Eigen::Success;
  }

  // Recomputes per-row penalties; refactors when any changed.
  void refresh_rho(double new_base) {
    new_base = std::clamp(new_base, kRhoMin, kRhoMax);
    bool changed = false;
    for (int i = 0; i < m; ++i) {
      double r = row_rho(i, new_base);
      if (r != rho[i]) {
        rho[i] = r;
        rho_inv[i] = 1.0 / r;
        changed = true;
      }
    }
    base_rho = new_base;
    if (changed) factorize();
  }

  void set_box(const VectorXd& lo, const VectorXd& hi) {
    if (lo.size() != n || hi.size() != n) throw QpError("set_box_bounds: size mismatch");
    for (int j = 0; j < n; ++j) {
      if (lo[j] > hi[j]) throw QpError("set_box_bounds: lower > upper at variable " + std::to_string(j));
      const bool finite = is_finite_bound(lo[j]) || is_finite_bound(hi[j]);
      if (box_row[j] < 0) {
        if (finite) throw QpError("set_box_bounds: variable " + std::to_string(j) + " had no box row");
        continue;
      }
      const int r = m_eq + m_in + box_row[j];
      l[r] = is_finite_bound(lo[j]) ? lo[j] : -kInf;
      u[r] = is_finite_bound(hi[j]) ? hi[j] : kInf;
    }
    qp.x_lower = lo;
    qp.x_upper = hi;
    scale_bounds();
    refresh_rho(base_rho);
  }

  struct Resid {
    double prim, dual, eps_prim, eps_dual;
    double ax_norm, z_norm, px_norm, aty_norm, q_norm;
  };

  Resid residuals(const VectorXd& xs, const VectorXd& zs, const VectorXd& ys, double eps_abs,
                  double eps_rel) const {
    Resid r{};
    VectorXd ax = As * xs;
    VectorXd px = Ps * xs;
    VectorXd aty = AsT * ys;
    r.prim = inf_norm(Einv.cwiseProduct(ax - zs));
    r.dual = cinv * inf_norm(Dinv.cwiseProduct(px + qs + aty));
    r.ax_norm = inf_norm(Einv.cwiseProduct(ax));
    r.z_norm = inf_norm(Einv.cwiseProduct(zs));
    r.px_norm = cinv * inf_norm(Dinv.cwiseProduct(px));
    r.aty_norm = cinv * inf_norm(Dinv.cwiseProduct(aty));
    r.q_norm = cinv * inf_norm(Dinv.cwiseProduct(qs));
    r.eps_prim = eps_abs + eps_rel * std::max(r.ax_norm, r.z_norm);
    r.eps_dual = eps_abs + eps_rel * std::max({r.px_norm, r.aty_norm, r.q_norm});
    return r;
  }

  bool primal_infeasible(VectorXd dy) const {
    for (int i = 0; i < m; ++i) {
      if (!std::isfinite(us[i])) dy[i] = std::min(dy[i], 0.0);
      if (!std::isfinite(ls[i])) dy[i] = std::max(dy[i], 0.0);
    }
    const double norm_dy = inf_norm(E.cwiseProduct(dy));
    if (norm_dy < 1e-12) return false;
    const double eps = st.eps_prim_inf * norm_dy;
    if (inf_norm(Dinv.cwiseProduct(AsT * dy)) > eps) return false;
    double support = 0.0;
    for (int i = 0; i < m; ++i) {
      if (dy[i] > 0) support += us[i] * dy[i];
      else if (dy[i] < 0) support += ls[i] * dy[i];
    }
    return support < -eps;
  }

  bool dual_infeasible(const VectorXd& dx) const {
    const double norm_dx = inf_norm(D.cwiseProduct(dx));
    if (norm_dx < 1e-12) return false;
    const double eps = st.eps_dual_inf * norm_dx;
    if (qs.dot(dx) > -c * eps) return false;
    if (inf_norm(Dinv.cwiseProduct(Ps * dx)) > c * eps) return false;
    VectorXd adx = Einv.cwiseProduct(As * dx);
    for (int i = 0; i < m; ++i) {
      if (std::isfinite(u[i]) && adx[i] > eps) return false;
      if (std::isfinite(l[i]) && adx[i] < -eps) return false;
    }
    return true;
  }

  // Runs ADMM from the current iterates. Returns the status reached.
  QpStatus admm(int& iter, int max_iter, double eps_abs, double eps_rel, std::string& diag) {
    VectorXd rhs(n + m), sol(n + m), xt(n), zt(m), xnew(n), zhat(m), znew(m), ynew(m);
    for (; iter < max_iter; ++iter) {
      rhs.head(n) = st.sigma * x - qs;
      rhs.tail(m) = z - rho_inv.cwiseProduct(y);
      sol = ldlt.solve(rhs);
      xt = sol.head(n);
      zt = z + rho_inv.cwiseProduct(sol.tail(m) - y);
      xnew = st.alpha * xt + (1.0 - st.alpha) * x;
      zhat = st.alpha * zt + (1.0 - st.alpha) * z;
      znew = (zhat + rho_inv.cwiseProduct(y)).cwiseMax(ls).cwiseMin(us);
      ynew = y + rho.cwiseProduct(zhat - znew);
      VectorXd dx = xnew - x;
      VectorXd dy = ynew - y;
      x.swap(xnew);
      z.swap(znew);
      y.swap(ynew);

      const bool check = (iter + 1) % st.check_interval == 0 || iter + 1 == max_iter;
      if (!check) continue;
      Resid r = residuals(x, z, y, eps_abs, eps_rel);
      if (!std::isfinite(r.prim) || !std::isfinite(r.dual)) {
        diag = "non-finite iterates";
        ++iter;
        return QpStatus::max_iterations;
      }
      if (r.prim <= r.eps_prim && r.dual <= r.eps_dual) {
        ++iter;
        return QpStatus::optimal;
      }
      if (primal_infeasible(dy)) {
        diag = "primal infeasibility certificate from dual iterate differences";
        ++iter;
        return QpStatus::infeasible;
      }
      if (dual_infeasible(dx)) {
        diag = "dual infeasibility certificate from primal iterate differences";
        ++iter;
        return QpStatus::unbounded;
      }
      if (st.adaptive_rho && (iter + 1) % st.adaptive_rho_interval == 0) {
        const double pn = r.prim / std::max({r.ax_norm, r.z_norm, 1e-30});
        const double dn = r.dual / std::max({r.px_norm, r.aty_norm, r.q_norm, 1e-30});
        double ratio = std::sqrt(pn / std::max(dn, 1e-30));
        double cand = std::clamp(base_rho * ratio, kRhoMin, kRhoMax);
        if (cand > 5.0 * base_rho || cand < 0.2 * base_rho) refresh_rho(cand);
        if (!factor_ok) {
          diag = "KKT factorization failed";
          ++iter;
          return QpStatus::max_iterations;
        }
      }
    }
    return QpStatus::max_iterations;
  }

  // Solves the equality-constrained QP on the guessed active set. On success
  // overwrites x, z, y with the polished point.
  bool polish(double eps_abs, double eps_rel) {
    std::vector<int> act;
    std::vector<double> bnd;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (int i = 0; i < m; ++i) {
      const bool eq = std::isfinite(ls[i]) && std::isfinite(us[i]) && us[i] - ls[i] < 1e-12 * (1 + std::abs(ls[i]));
      const bool lo = std::isfinite(ls[i]) && z[i] - ls[i] < -y[i];
      const bool hi = std::isfinite(us[i]) && us[i] - z[i] < y[i];
      if (eq) {
        act.push_back(i);
        bnd.push_back(ls[i]);
        side.push_back(0);
      } else if (lo) {
        act.push_back(i);
        bnd.push_back(ls[i]);
        side.push_back(-1);
      } else if (hi) {
        act.push_back(i);
        bnd.push_back(us[i]);
        side.push_back(1);
      }
    }
    const int k = static_cast<int>(act.size());
    std::vector<int> pos(m, -1);
    for (int r = 0; r < k; ++r) pos[act[r]] = r;

    std::vector<Triplet> t0, treg;
    for (int j = 0; j < Ps.outerSize(); ++j)
      for (SpMat::InnerIterator it(Ps, j); it; ++it)
        if (it.row() >= j) t0.emplace_back(it.row(), j, it.value());
    for (int j = 0; j < As.outerSize(); ++j)
      for (SpMat::InnerIterator it(As, j); it; ++it)
        if (pos[it.row()] >= 0) t0.emplace_back(n + pos[it.row()], j, it.value());
    treg = t0;
    for (int j = 0; j < n; ++j) treg.emplace_back(j, j, kPolishDelta);
    for (int r = 0; r < k; ++r) treg.emplace_back(n + r, n + r, -kPolishDelta);
    SpMat K0(n + k, n + k), Kr(n + k, n + k);
    K0.setFromTriplets(t0.begin(), t0.end());
    Kr.setFromTriplets(treg.begin(), treg.end());
    SpMat K0full = K0.selfadjointView<Eigen::Lower>();
    Ldlt f;
    f.compute(Kr);
    if (f.info() != Eigen::Success) return false;
    VectorXd rhs(n + k);
    rhs.head(n) = -qs;
    for (int r = 0; r < k; ++r) rhs[n + r] = bnd[r];
    VectorXd sol = f.solve(rhs);
    for (int it = 0; it < st.polish_refine_iters; ++it) {
      VectorXd res = rhs - K0full * sol;
      if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += f.solve(res);
    }
    if (!sol.allFinite()) return false;
    VectorXd xp = sol.head(n);
    VectorXd yp = VectorXd::Zero(m);
    for (int r = 0; r < k; ++r) {
      double v = sol[n + r];
      if (side[r] == -1 && v > 0) {
        if (v > 1e-9 * (1.0 + inf_norm(sol.tail(k)))) return false;
        v = 0;
      }
      if (side[r] == 1 && v < 0) {
        if (-v > 1e-9 * (1.0 + inf_norm(sol.tail(k)))) return false;
        v = 0;
      }
      yp[act[r]] = v;
    }
    VectorXd zp = (As * xp).cwiseMax(ls).cwiseMin(us);
    Resid r = residuals(xp, zp, yp, eps_abs, eps_rel);
    Resid r_admm = residuals(x, z, y, eps_abs, eps_rel);
    const bool ok = r.prim <= r.eps_prim && r.dual <= r.eps_dual &&
                    r.prim <= std::max(r_admm.prim, 1e-10) * 10 && r.dual <= std::max(r_admm.dual, 1e-10) * 10;
    if (!ok) return false;
    x = xp;
    z = zp;
    y = yp;
    return true;
  }

  QpSolution solve(const WarmStart* warm) {
    QpSolution out;
    if (!factor_ok) {
      out.status = QpStatus::max_iterations;
      out.diagnostic = "KKT factorization failed";
      out.x = VectorXd::Zero(n);
      out.dual_eq = VectorXd::Zero(m_eq);
      out.dual_ineq = VectorXd::Zero(m_in);
      out.dual_box = VectorXd::Zero(n);
      return out;
    }
    if (warm && warm->x.size() == n) {
      x = Dinv.cwiseProduct(warm->x);
      z = (As * x).cwiseMax(ls).cwiseMin(us);
      if (warm->y.size() == m_eq + m_in + n) {
        for (int i = 0; i < m_eq + m_in; ++i) y[i] = -c * Einv[i] * warm->y[i];
        for (std::size_t kk = 0; kk < box_vars.size(); ++kk) {
          const int i = m_eq + m_in + static_cast<int>(kk);
          y[i] = -c * Einv[i] * warm->y[m_eq + m_in + box_vars[kk]];
        }
      } else {
        y.setZero();
      }
    } else {
      x.setZero();
      z.setZero();
      y.setZero();
    }

    int iter = 0;
    double eps_abs = st.eps_abs, eps_rel = st.eps_rel;
    QpStatus status = admm(iter, st.max_iter, eps_abs, eps_rel, out.diagnostic);
    bool polished = false;
    if (status == QpStatus::optimal && st.polish) {
      for (int attempt = 0; attempt <= st.polish_retries; ++attempt) {
        if (polish(eps_abs, eps_rel)) {
          polished = true;
          break;
        }
        if (attempt == st.polish_retries || iter >= st.max_iter) break;
        eps_abs = std::max(eps_abs * 0.1, 1e-12);
        eps_rel = std::max(eps_rel * 0.1, 1e-12);
        std::string d;
        QpStatus s2 = admm(iter, st.max_iter, eps_abs, eps_rel, d);
        if (s2 == QpStatus::infeasible || s2 == QpStatus::unbounded) break;
      }
    }

    out.iterations = iter;
    out.polished = polished;
    out.status = status;
    out.x = D.cwiseProduct(x);
    VectorXd yu = -cinv * E.cwiseProduct(y);
    out.dual_eq = yu.head(m_eq);
    out.dual_ineq = yu.segment(m_eq, m_in);
    out.dual_box = VectorXd::Zero(n);
    for (std::size_t kk = 0; kk < box_vars.size(); ++kk) out.dual_box[box_vars[kk]] = yu[m_eq + m_in + kk];
    if (status == QpStatus::optimal) {
      out.objective = qp.objective(out.x);
      out.residuals = kkt_residuals(qp, out);
      // Keep tightening until the public residual contract holds.
      int guard = 0;
      while ((out.residuals.primal > st.kkt_tol || out.residuals.dual > st.kkt_tol ||
              out.residuals.complementarity > st.kkt_tol) &&
             iter < st.max_iter && guard++ < 4) {
        eps_abs = std::max(eps_abs * 0.1, 1e-13);
        eps_rel = std::max(eps_rel * 0.1, 1e-13);
        std::string d;
        QpStatus s2 = admm(iter, st.max_iter, eps_abs, eps_rel, d);
        if (s2 != QpStatus::optimal) break;
        if (st.polish && polish(eps_abs, eps_rel)) out.polished = true;
        out.x = D.cwiseProduct(x);
        yu = -cinv * E.cwiseProduct(y);
        out.dual_eq = yu.head(m_eq);
        out.dual_ineq = yu.segment(m_eq, m_in);
        for (std::size_t kk = 0; kk < box_vars.size(); ++kk) out.dual_box[box_vars[kk]] = yu[m_eq + m_in + kk];
        out.objective = qp.objective(out.x);
        out.residuals = kkt_residuals(qp, out);
      }
      out.iterations = iter;
      if (out.residuals.primal > st.kkt_tol || out.residuals.dual > st.kkt_tol ||
          out.residuals.complementarity > st.kkt_tol) {
        out.status = QpStatus::max_iterations;
        std::ostringstream os;
        os << "residuals above tolerance after " << iter << " iterations (primal " << out.residuals.primal
           << ", dual " << out.residuals.dual << ", complementarity " << out.residuals.complementarity << ")";
        out.diagnostic = os.str();
      }
    } else {
      out.objective = status == QpStatus::unbounded ? -kInf : kInf;
      if (status == QpStatus::max_iterations && out.diagnostic.empty())
        out.diagnostic = "iteration cap reached";
    }
    return out;
  }
};

QpSolver::QpSolver(const QuadraticProgram& qp, QpSettings settings) : impl_(std::make_unique<Impl>()) {
  impl_->build(qp, settings);
}
QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;

void QpSolver::set_box_bounds(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  impl_->set_box(lower, upper);
}
const Eigen::VectorXd& QpSolver::box_lower() const { return impl_->qp.x_lower; }
const Eigen::VectorXd& QpSolver::box_upper() const { return impl_->qp.x_upper; }
QpSolution QpSolver::solve(const WarmStart* warm) { return impl_->solve(warm); }
const QuadraticProgram& QpSolver::problem() const { return impl_->qp; }
const QpSettings& QpSolver::settings() const { return impl_->st; }

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings, const WarmStart* warm) {
  QpSolver solver(qp, settings);
  return solver.solve(warm);
}

}  // namespace v2x
