#include "v2x/miqp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <type_traits>

namespace v2x {

std::string to_string(MiqpStatus s) {
  switch (s) {
    case MiqpStatus::optimal: return "optimal";
    case MiqpStatus::infeasible: return "infeasible";
    case MiqpStatus::gap_limit: return "gap-limit";
    case MiqpStatus::node_limit: return "node-limit";
  }
  return "unknown";
}

void MixedIntegerQP::validate() const {
  qp.validate();
  std::set<int> seen;
  for (const BinaryInfo& b : binaries) {
    if (b.var < 0 || b.var >= qp.num_vars())
      throw QpError("binary '" + b.name + "' index " + std::to_string(b.var) + " out of range");
    if (!seen.insert(b.var).second) throw QpError("binary variable " + std::to_string(b.var) + " listed twice");
    if (qp.x_lower[b.var] < 0.0 || qp.x_upper[b.var] > 1.0)
      throw QpError("binary '" + b.name + "' must have bounds inside [0, 1]");
  }
}

int select_branch_binary(const std::vector<double>& values, BranchRule rule, double tol) {
  int best = -1;
  double best_frac = tol;
  for (int k = 0; k < static_cast<int>(values.size()); ++k) {
    const double frac = std::abs(values[k] - std::round(values[k]));
    if (frac <= tol) continue;
    if (rule == BranchRule::first_fractional) return k;
    if (frac > best_frac) {
      best_frac = frac;
      best = k;
    }
  }
  return best;
}

std::pair<BnbNode, BnbNode> branch(const BnbNode& node, const std::vector<double>& values, BranchRule rule,
                                   double tol) {
  const int k = select_branch_binary(values, rule, tol);
  if (k < 0) throw MiqpError("branch: node has no fractional binary");
  if (node.fixed.size() != values.size()) throw MiqpError("branch: node and value sizes differ");
  BnbNode zero = node, one = node;
  zero.parent = one.parent = node.id;
  zero.depth = one.depth = node.depth + 1;
  zero.fixed[k] = 0;
  one.fixed[k] = 1;
  return {zero, one};
}

namespace {

constexpr double kConflictTol = 1e-6;

struct OpenNode {
  BnbNode node;
  std::shared_ptr<const WarmStart> warm;
};

struct OpenOrder {
  bool operator()(const OpenNode& a, const OpenNode& b) const {
    if (a.node.bound != b.node.bound) return a.node.bound > b.node.bound;
    return a.node.id > b.node.id;
  }
};

class Search {
 public:
  Search(const MixedIntegerQP& original, const MixedIntegerQP& work, const MiqpSettings& st)
      : orig_(original), work_(work), st_(st), solver_(work.qp, st.qp) {
    if (st.screen_qp) screen_.emplace(work.qp, *st.screen_qp);
    base_lo_ = work.qp.x_lower;
    base_hi_ = work.qp.x_upper;
    for (const BinaryInfo& b : work.binaries) bin_vars_.push_back(b.var);
    bin_index_.assign(work.qp.num_vars(), -1);
    for (std::size_t k = 0; k < bin_vars_.size(); ++k) bin_index_[bin_vars_[k]] = static_cast<int>(k);
    eq_rows_ = work.qp.A_eq;
    ineq_rows_ = work.qp.A_ineq;
  }

  MiqpSolution run() {
    const int nb = static_cast<int>(bin_vars_.size());
    BnbNode root;
    root.fixed.assign(nb, -1);
    for (int k = 0; k < nb; ++k)
      if (base_lo_[bin_vars_[k]] == base_hi_[bin_vars_[k]]) root.fixed[k] = static_cast<std::int8_t>(base_lo_[bin_vars_[k]]);

    if (st_.search_log) *st_.search_log << "node,depth,bound,incumbent,gap\n";

    std::priority_queue<OpenNode, std::vector<OpenNode>, OpenOrder> open;
    std::optional<OpenNode> dive = OpenNode{root, nullptr};
    long next_id = 1;
    bool stopped_gap = false, stopped_nodes = false;
    pruned_bound_ = kInf;

    while (true) {
      OpenNode cur;
      const bool diving = dive.has_value();
      if (dive) {
        cur = std::move(*dive);
        dive.reset();
      } else {
        if (open.empty()) break;
        cur = open.top();
        open.pop();
      }
      if (cur.node.bound >= prune_level()) {
        pruned_bound_ = std::min(pruned_bound_, cur.node.bound);
        continue;
      }
      if (nodes_ > 0 && std::isfinite(inc_obj_)) {
        const double lb = std::min(cur.node.bound, open.empty() ? kInf : open.top().node.bound);
        if (rel_gap(lb) <= st_.gap) {
          open.push(cur);
          stopped_gap = true;
          break;
        }
      }
      if (nodes_ >= st_.node_limit) {
        open.push(cur);
        stopped_nodes = true;
        break;
      }

      NodeRecord rec{cur.node.id, cur.node.parent, cur.node.depth, kInf, kInf};
      WarmStart screened;
      const WarmStart* node_warm = cur.warm.get();
      if (screen_ && !diving && std::isfinite(inc_obj_)) {
        const double level = prune_level() + st_.screen_margin * std::max(1.0, std::abs(inc_obj_));
        QpSolution c = solve_screen(cur.node.fixed, node_warm);
        if (c.status == QpStatus::optimal && c.objective >= level) {
          ++nodes_;
          rec.bound = c.objective - st_.screen_margin * std::max(1.0, std::abs(inc_obj_));
          pruned_bound_ = std::min(pruned_bound_, rec.bound);
          finish_node(rec);
          continue;
        }
        if (c.status == QpStatus::optimal) {
          screened.x = c.x;
          screened.y.resize(c.dual_eq.size() + c.dual_ineq.size() + c.dual_box.size());
          screened.y << c.dual_eq, c.dual_ineq, c.dual_box;
          node_warm = &screened;
        }
      }
      QpSolution sol = solve_fixed(cur.node.fixed, node_warm);
      ++nodes_;
      if (sol.status == QpStatus::infeasible) {
        finish_node(rec);
        continue;
      }
      const double bound = std::max(sol.objective, cur.node.bound);
      rec.bound = bound;
      if (nodes_ == 1 && st_.heuristic) guided_rounding(sol.x);
      if (nodes_ == 1 && !st_.start.empty()) try_start(sol, cur.node.fixed);

      if (bound >= prune_level()) {
        pruned_bound_ = std::min(pruned_bound_, bound);
        finish_node(rec);
        continue;
      }
      std::vector<double> values(bin_vars_.size());
      for (std::size_t k = 0; k < bin_vars_.size(); ++k) values[k] = sol.x[bin_vars_[k]];
      int k = select_branch_binary(values, st_.rule, st_.integrality_tol);
      if (k < 0) {
        std::vector<std::int8_t> assign(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) assign[i] = values[i] > 0.5 ? 1 : 0;
        rec.integral_objective = try_incumbent(assign, sol, cur.node.fixed);
        finish_node(rec);
        continue;
      }
      // Binaries whose rounding keeps every row satisfied carry no
      // information; branch only on those in rows the rounding breaks.
      const std::vector<std::int8_t> assign = rounded(sol.x, cur.node.fixed);
      const std::vector<char> blamed = conflicts(sol.x, assign);
      bool any = false;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (blamed[i]) any = true;
        else values[i] = assign[i];
      }
      if (!any) {
        rec.integral_objective = try_incumbent(assign, sol, cur.node.fixed);
        if (rec.integral_objective <= bound + st_.gap * std::max(1.0, std::abs(bound))) {
          finish_node(rec);
          continue;
        }
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = sol.x[bin_vars_[i]];
      }
      k = select_branch_binary(values, st_.rule, st_.integrality_tol);
      if (k < 0) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = sol.x[bin_vars_[i]];
        k = select_branch_binary(values, st_.rule, st_.integrality_tol);
      }
      auto [zero, one] = branch(cur.node, values, st_.rule, st_.integrality_tol);
      zero.id = next_id++;
      one.id = next_id++;
      zero.bound = one.bound = bound;
      auto warm = std::make_shared<WarmStart>();
      warm->x = sol.x;
      warm->y.resize(sol.dual_eq.size() + sol.dual_ineq.size() + sol.dual_box.size());
      warm->y << sol.dual_eq, sol.dual_ineq, sol.dual_box;
      const bool up_first = values[k] >= 0.5;
      OpenNode first{up_first ? one : zero, warm};
      OpenNode second{up_first ? zero : one, open.size() < 256 ? warm : nullptr};
      dive = std::move(first);
      open.push(std::move(second));
      finish_node(rec);
    }

    MiqpSolution out;
    out.nodes = nodes_;
    out.qp_iterations = qp_iters_;
    out.trace = std::move(trace_);
    double lb = std::min(pruned_bound_, inc_obj_);
    if (!open.empty()) lb = std::min(lb, open.top().node.bound);
    if (dive) lb = std::min(lb, dive->node.bound);
    out.best_bound = lb;
    if (!std::isfinite(inc_obj_)) {
      out.status = stopped_nodes ? MiqpStatus::node_limit : MiqpStatus::infeasible;
      return out;
    }
    out.x = inc_x_;
    for (int v : bin_vars_) out.x[v] = out.x[v] > 0.5 ? 1.0 : 0.0;
    out.objective = orig_.qp.objective(out.x);
    out.gap = std::max(0.0, rel_gap(lb));
    if (stopped_nodes) out.status = MiqpStatus::node_limit;
    else if (stopped_gap) out.status = MiqpStatus::gap_limit;
    else out.status = MiqpStatus::optimal;
    return out;
  }

 private:
  const MixedIntegerQP& orig_;
  const MixedIntegerQP& work_;
  const MiqpSettings& st_;
  QpSolver solver_;
  std::optional<QpSolver> screen_;
  Eigen::VectorXd base_lo_, base_hi_;
  std::vector<int> bin_vars_;
  std::vector<int> bin_index_;
  Eigen::SparseMatrix<double, Eigen::RowMajor, int> eq_rows_, ineq_rows_;
  double inc_obj_ = kInf;
  Eigen::VectorXd inc_x_;
  double pruned_bound_ = kInf;
  long nodes_ = 0;
  long qp_iters_ = 0;
  std::vector<NodeRecord> trace_;

  double rel_gap(double lb) const { return (inc_obj_ - lb) / std::max(1.0, std::abs(inc_obj_)); }

  double prune_level() const {
    if (!std::isfinite(inc_obj_)) return kInf;
    return inc_obj_ - st_.gap * std::max(1.0, std::abs(inc_obj_));
  }

  void finish_node(const NodeRecord& rec) {
    if (st_.record_trace) trace_.push_back(rec);
    if (st_.search_log) {
      *st_.search_log << rec.id << ',' << rec.depth << ',' << rec.bound << ',' << inc_obj_ << ',';
      if (std::isfinite(inc_obj_) && std::isfinite(rec.bound)) *st_.search_log << rel_gap(rec.bound);
      else *st_.search_log << "inf";
      *st_.search_log << '\n';
    }
  }

  QpSolution solve_fixed(const std::vector<std::int8_t>& fixed, const WarmStart* warm) {
    Eigen::VectorXd lo = base_lo_, hi = base_hi_;
    for (std::size_t k = 0; k < fixed.size(); ++k)
      if (fixed[k] >= 0) lo[bin_vars_[k]] = hi[bin_vars_[k]] = fixed[k];
    solver_.set_box_bounds(lo, hi);
    QpSolution sol = solver_.solve(warm);
    qp_iters_ += sol.iterations;
    if (sol.status == QpStatus::max_iterations) {
      sol = solver_.solve(nullptr);
      qp_iters_ += sol.iterations;
    }
    if (sol.status == QpStatus::max_iterations) {
      QpSettings strict = st_.qp;
      strict.max_iter *= 5;
      QuadraticProgram qp = work_.qp;
      qp.x_lower = lo;
      qp.x_upper = hi;
      sol = solve_qp(qp, strict);
      qp_iters_ += sol.iterations;
    }
    if (sol.status == QpStatus::max_iterations)
      throw MiqpError("relaxation solve failed: " + sol.diagnostic);
    if (sol.status == QpStatus::unbounded) throw MiqpError("relaxation is unbounded");
    return sol;
  }

  QpSolution solve_screen(const std::vector<std::int8_t>& fixed, const WarmStart* warm) {
    Eigen::VectorXd lo = base_lo_, hi = base_hi_;
    for (std::size_t k = 0; k < fixed.size(); ++k)
      if (fixed[k] >= 0) lo[bin_vars_[k]] = hi[bin_vars_[k]] = fixed[k];
    screen_->set_box_bounds(lo, hi);
    QpSolution sol = screen_->solve(warm);
    qp_iters_ += sol.iterations;
    return sol;
  }

  // Solves with every binary fixed; returns the objective (or inf).
  double try_incumbent(const std::vector<std::int8_t>& assign, const QpSolution& relaxed,
                       const std::vector<std::int8_t>& node_fixed) {
    bool all_fixed = true;
    for (std::size_t k = 0; k < assign.size(); ++k)
      if (node_fixed[k] < 0) all_fixed = false;
    QpSolution sol;
    if (all_fixed) {
      sol = relaxed;
    } else {
      WarmStart ws;
      ws.x = relaxed.x;
      sol = solve_fixed(assign, &ws);
      if (sol.status != QpStatus::optimal) return kInf;
    }
    const double obj = sol.objective;
    if (obj < inc_obj_) {
      inc_obj_ = obj;
      inc_x_ = sol.x;
    }
    return obj;
  }

  // Hint rounding of every binary, keeping the node's fixings.
  std::vector<std::int8_t> rounded(const Eigen::VectorXd& x, const std::vector<std::int8_t>& fixed) const {
    std::vector<std::int8_t> assign(bin_vars_.size());
    for (std::size_t k = 0; k < bin_vars_.size(); ++k) {
      const int v = bin_vars_[k];
      if (fixed[k] >= 0) {
        assign[k] = fixed[k];
        continue;
      }
      const LinearExpr& h = work_.binaries[k].hint;
      if (h.empty()) {
        assign[k] = x[v] > 0.5 ? 1 : 0;
      } else {
        double s = 0.0;
        for (const Term& t : h) s += t.coeff * x[t.var];
        assign[k] = s > 0 ? 1 : 0;
      }
    }
    return assign;
  }

  // Marks the binaries appearing in rows that x breaks once the binaries
  // take their rounded values.
  std::vector<char> conflicts(const Eigen::VectorXd& x, const std::vector<std::int8_t>& assign) const {
    Eigen::VectorXd xr = x;
    for (std::size_t k = 0; k < bin_vars_.size(); ++k) xr[bin_vars_[k]] = assign[k];
    std::vector<char> blamed(bin_vars_.size(), 0);
    const auto blame = [&](const auto& rows, int r) {
      for (typename std::decay_t<decltype(rows)>::InnerIterator it(rows, r); it; ++it) {
        const int k = bin_index_[it.col()];
        if (k >= 0 && std::abs(x[it.col()] - assign[k]) > st_.integrality_tol) blamed[k] = 1;
      }
    };
    const Eigen::VectorXd ae = eq_rows_ * xr, ai = ineq_rows_ * xr;
    const QuadraticProgram& qp = work_.qp;
    for (int r = 0; r < qp.num_eq(); ++r)
      if (std::abs(ae[r] - qp.b_eq[r]) > kConflictTol * std::max(1.0, std::abs(qp.b_eq[r]))) blame(eq_rows_, r);
    for (int r = 0; r < qp.num_ineq(); ++r) {
      const double lo = qp.ineq_lower[r], hi = qp.ineq_upper[r];
      if ((std::isfinite(lo) && ai[r] < lo - kConflictTol * std::max(1.0, std::abs(lo))) ||
          (std::isfinite(hi) && ai[r] > hi + kConflictTol * std::max(1.0, std::abs(hi))))
        blame(ineq_rows_, r);
    }
    return blamed;
  }

  void try_start(const QpSolution& relaxed, const std::vector<std::int8_t>& fixed) {
    if (st_.start.size() != bin_vars_.size()) throw MiqpError("start assignment has the wrong length");
    std::vector<std::int8_t> assign = rounded(relaxed.x, fixed);
    for (std::size_t k = 0; k < assign.size(); ++k)
      if (fixed[k] < 0 && !std::isnan(st_.start[k])) assign[k] = st_.start[k] > 0.5 ? 1 : 0;
    std::vector<std::int8_t> none(bin_vars_.size(), -1);
    try_incumbent(assign, relaxed, none);
  }

  void guided_rounding(const Eigen::VectorXd& x) {
    std::vector<std::int8_t> assign(bin_vars_.size());
    for (std::size_t k = 0; k < bin_vars_.size(); ++k) {
      const int v = bin_vars_[k];
      if (base_lo_[v] == base_hi_[v]) {
        assign[k] = static_cast<std::int8_t>(base_lo_[v]);
        continue;
      }
      const LinearExpr& h = work_.binaries[k].hint;
      if (h.empty()) {
        assign[k] = x[v] > 0.5 ? 1 : 0;
      } else {
        double s = 0.0;
        for (const Term& t : h) s += t.coeff * x[t.var];
        assign[k] = s > 0 ? 1 : 0;
      }
    }
    std::vector<std::int8_t> none(bin_vars_.size(), -1);
    QpSolution dummy;
    dummy.x = x;
    try_incumbent(assign, dummy, none);
  }
};

void refine_incumbent(const MixedIntegerQP& m, const MiqpSettings& st, MiqpSolution& out) {
  if (!st.final_qp || !std::isfinite(out.objective)) return;
  QuadraticProgram qp = m.qp;
  for (const BinaryInfo& b : m.binaries) qp.x_lower[b.var] = qp.x_upper[b.var] = out.x[b.var];
  QpSolver solver(qp, *st.final_qp);
  WarmStart ws;
  ws.x = out.x;
  QpSolution s = solver.solve(&ws);
  out.qp_iterations += s.iterations;
  if (s.status != QpStatus::optimal) return;
  out.x = s.x;
  out.objective = s.objective;
}

MiqpSolution continuous_only(const MixedIntegerQP& m, const QpSettings& qs) {
  QpSolution s = solve_qp(m.qp, qs);
  MiqpSolution out;
  out.nodes = 1;
  out.qp_iterations = s.iterations;
  if (s.status == QpStatus::infeasible) return out;
  if (s.status == QpStatus::unbounded) throw MiqpError("relaxation is unbounded");
  if (s.status != QpStatus::optimal) throw MiqpError("relaxation solve failed: " + s.diagnostic);
  out.x = s.x;
  out.objective = s.objective;
  out.status = MiqpStatus::optimal;
  out.gap = 0.0;
  out.best_bound = s.objective;
  return out;
}

}  // namespace

MiqpSolution solve_miqp(const MixedIntegerQP& m, const MiqpSettings& settings) {
  m.validate();
  if (m.binaries.empty()) return continuous_only(m, settings.final_qp ? *settings.final_qp : settings.qp);
  if (!settings.presolve) {
    Search s(m, m, settings);
    MiqpSolution out = s.run();
    refine_incumbent(m, settings, out);
    return out;
  }
  PresolveResult pre = presolve(m);
  if (pre.infeasible) {
    MiqpSolution out;
    out.status = MiqpStatus::infeasible;
    return out;
  }
  Search s(m, pre.problem, settings);
  MiqpSolution out = s.run();
  out.presolve_fixed = pre.fixed_binaries;
  refine_incumbent(m, settings, out);
  return out;
}

MiqpSolution enumerate_oracle(const MixedIntegerQP& m, const QpSettings& settings) {
  m.validate();
  const int nb = m.num_binaries();
  if (nb > 20) throw MiqpError("enumerate_oracle: " + std::to_string(nb) + " binaries exceed the guard of 20");
  if (nb == 0) return continuous_only(m, settings);
  QpSolver solver(m.qp, settings);
  MiqpSolution out;
  Eigen::VectorXd lo = m.qp.x_lower, hi = m.qp.x_upper;
  for (long mask = 0; mask < (1L << nb); ++mask) {
    bool skip = false;
    for (int k = 0; k < nb; ++k) {
      const double v = (mask >> k) & 1;
      const int j = m.binaries[k].var;
      if (v < m.qp.x_lower[j] || v > m.qp.x_upper[j]) skip = true;
      lo[j] = hi[j] = v;
    }
    if (skip) continue;
    solver.set_box_bounds(lo, hi);
    QpSolution s = solver.solve();
    ++out.nodes;
    out.qp_iterations += s.iterations;
    if (s.status == QpStatus::infeasible) continue;
    if (s.status != QpStatus::optimal) {
      s = solve_qp([&] {
        QuadraticProgram q = m.qp;
        q.x_lower = lo;
        q.x_upper = hi;
        return q;
      }(), [&] {
        QpSettings t = settings;
        t.max_iter *= 5;
        return t;
      }());
      if (s.status == QpStatus::infeasible) continue;
      if (s.status != QpStatus::optimal) throw MiqpError("enumerate_oracle: QP failed: " + s.diagnostic);
    }
    if (s.objective < out.objective) {
      out.objective = s.objective;
      out.x = s.x;
    }
  }
  if (std::isfinite(out.objective)) {
    for (const BinaryInfo& b : m.binaries) out.x[b.var] = out.x[b.var] > 0.5 ? 1.0 : 0.0;
    out.objective = m.qp.objective(out.x);
    out.status = MiqpStatus::optimal;
    out.gap = 0.0;
    out.best_bound = out.objective;
  }
  return out;
}

}  // namespace v2x
