#include <doctest.h>

#include <cmath>

#include "v2x/miqp.hpp"

#include <map>
#include <random>
#include <sstream>

using namespace v2x;

namespace {

MixedIntegerQP pick_example() {
  QpBuilder b;
  int p = b.add_var(0.0, 5.0, "p");
  int y = b.add_var(0.0, 1.0, "y");
  b.add_square_deviation_cost(p, 1.0, 1.0);
  b.add_linear_cost(y, 10.0);
  b.add_le({{p, 1.0}, {y, -5.0}}, 0.0);
  return {b.build(), {{y, "y"}}};
}

// Facility-style instance: each binary switches on a capacity, a demand row
// couples them and some pairs are mutually exclusive.
MixedIntegerQP random_instance(std::mt19937_64& rng, int nb) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  QpBuilder b;
  MixedIntegerQP m;
  LinearExpr demand;
  std::vector<int> ys;
  for (int k = 0; k < nb; ++k) {
    const double cap = 1.0 + 4.0 * U(rng);
    int p = b.add_var(0.0, cap, "p" + std::to_string(k));
    int y = b.add_var(0.0, 1.0, "y" + std::to_string(k));
    b.add_square_deviation_cost(p, 0.5 + U(rng), 3.0 * U(rng));
    b.add_linear_cost(y, 2.0 * U(rng));
    b.add_linear_cost(p, U(rng) - 0.5);
    b.add_le({{p, 1.0}, {y, -10.0}}, 0.0);
    demand.push_back({p, 1.0});
    ys.push_back(y);
    m.binaries.push_back({y, "y" + std::to_string(k)});
  }
  for (int k = 0; k + 1 < nb; k += 3) b.add_le({{ys[k], 1.0}, {ys[k + 1], 1.0}}, 1.0);
  b.add_ge(demand, 2.0 + 3.0 * U(rng));
  m.qp = b.build();
  return m;
}

}  // namespace

TEST_CASE("branching rule and ties") {
  BnbNode node;
  node.fixed.assign(5, -1);
  std::vector<double> v{0, 1, 0, 0.5, 1};
  auto [zero, one] = branch(node, v, BranchRule::most_fractional);
  CHECK(zero.fixed[3] == 0);
  CHECK(one.fixed[3] == 1);
  CHECK(zero.depth == 1);
  CHECK(select_branch_binary({0.4, 0.5}, BranchRule::most_fractional, 1e-5) == 1);
  CHECK(select_branch_binary({0.5, 0.5}, BranchRule::most_fractional, 1e-5) == 0);
  CHECK(select_branch_binary({0.0, 0.3, 0.5}, BranchRule::first_fractional, 1e-5) == 1);
  CHECK(select_branch_binary({0.0, 1.0 - 1e-7}, BranchRule::most_fractional, 1e-5) == -1);
  CHECK_THROWS_AS(branch(node, {0, 1, 0, 1, 1}, BranchRule::most_fractional), MiqpError);
}

TEST_CASE("switch cost example") {
  MixedIntegerQP m = pick_example();
  MiqpSolution s = solve_miqp(m);
  REQUIRE(s.status == MiqpStatus::optimal);
  CHECK(s.x[1] == 0.0);
  CHECK(std::abs(s.x[0]) < 1e-6);
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-7));
  MiqpSolution o = enumerate_oracle(m);
  REQUIRE(o.status == MiqpStatus::optimal);
  CHECK(o.x[1] == 0.0);
  CHECK(o.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("no binaries reduces to the QP") {
  QpBuilder b;
  int x = b.add_var(-kInf, kInf, "x");
  int y = b.add_var(0.0, 2.0, "y");
  b.add_square_deviation_cost(x, 1.0, 3.0);
  b.add_square_cost(y, 1.0);
  b.add_le({{x, 1.0}, {y, 1.0}}, 1.0);
  MixedIntegerQP m{b.build(), {}};
  QpSolution q = solve_qp(m.qp);
  MiqpSolution s = solve_miqp(m);
  MiqpSolution o = enumerate_oracle(m);
  REQUIRE(s.status == MiqpStatus::optimal);
  CHECK(s.objective == doctest::Approx(q.objective).epsilon(1e-12));
  CHECK(o.objective == doctest::Approx(q.objective).epsilon(1e-12));
  CHECK((s.x - q.x).norm() < 1e-12);
}

TEST_CASE("all assignments infeasible") {
  QpBuilder b;
  int p = b.add_var(0.0, 5.0, "p");
  int y = b.add_var(0.0, 1.0, "y");
  b.add_square_cost(p, 1.0);
  b.add_ge({{p, 1.0}}, 1.0);
  b.add_le({{p, 1.0}, {y, -0.1}}, 0.0);
  MixedIntegerQP m{b.build(), {{y, "y"}}};
  CHECK(enumerate_oracle(m).status == MiqpStatus::infeasible);
  CHECK(solve_miqp(m).status == MiqpStatus::infeasible);
  MiqpSettings st;
  st.presolve = false;
  CHECK(solve_miqp(m, st).status == MiqpStatus::infeasible);
}

TEST_CASE("oracle guard") {
  std::mt19937_64 rng(1);
  MixedIntegerQP m = random_instance(rng, 21);
  CHECK_THROWS_AS(enumerate_oracle(m), MiqpError);
}

TEST_CASE("random instances match enumeration") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    MixedIntegerQP m = random_instance(rng, 8);
    MiqpSettings st;
    st.gap = 1e-9;
    st.presolve = trial % 2 == 0;
    MiqpSolution s = solve_miqp(m, st);
    MiqpSolution o = enumerate_oracle(m);
    REQUIRE(o.status == MiqpStatus::optimal);
    REQUIRE(s.status == MiqpStatus::optimal);
    CHECK(std::abs(s.objective - o.objective) <= 1e-6 * (1.0 + std::abs(o.objective)));
    for (const BinaryInfo& bi : m.binaries) CHECK((s.x[bi.var] == 0.0 || s.x[bi.var] == 1.0));
  }
}

TEST_CASE("screening and start assignments keep the optimum") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    MixedIntegerQP m = random_instance(rng, 8);
    MiqpSolution o = enumerate_oracle(m);
    REQUIRE(o.status == MiqpStatus::optimal);
    MiqpSettings st;
    st.gap = 1e-9;
    QpSettings coarse;
    coarse.eps_abs = coarse.eps_rel = 1e-4;
    coarse.polish = false;
    st.screen_qp = coarse;
    if (trial % 2 == 0) {
      // A deliberately poor start: every binary at zero, one left open.
      st.start.assign(m.num_binaries(), 0.0);
      st.start[0] = std::nan("");
    }
    MiqpSolution s = solve_miqp(m, st);
    REQUIRE(s.status == MiqpStatus::optimal);
    CHECK(std::abs(s.objective - o.objective) <= 1e-6 * (1.0 + std::abs(o.objective)));
  }
  MixedIntegerQP m = random_instance(rng, 4);
  MiqpSettings st;
  st.start = {1.0};
  CHECK_THROWS_AS(solve_miqp(m, st), MiqpError);
}

TEST_CASE("node bounds never exceed integral points below them") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    MixedIntegerQP m = random_instance(rng, 10);
    MiqpSettings st;
    st.gap = 1e-9;
    st.heuristic = false;
    st.record_trace = true;
    std::ostringstream log;
    st.search_log = &log;
    MiqpSolution s = solve_miqp(m, st);
    REQUIRE(s.status == MiqpStatus::optimal);
    std::map<long, NodeRecord> by_id;
    for (const NodeRecord& r : s.trace) by_id[r.id] = r;
    for (const NodeRecord& r : s.trace) {
      if (!std::isfinite(r.integral_objective)) continue;
      for (long a = r.parent; a >= 0; a = by_id.at(a).parent)
        CHECK(by_id.at(a).bound <= r.integral_objective + 1e-7 * (1.0 + std::abs(r.integral_objective)));
    }
    CHECK(s.best_bound <= s.objective + 1e-9);
    CHECK(log.str().rfind("node,depth,bound,incumbent,gap\n", 0) == 0);
  }
}

TEST_CASE("node limit is a status") {
  std::mt19937_64 rng(4);
  MixedIntegerQP m = random_instance(rng, 12);
  MiqpSettings st;
  st.gap = 0.0;
  st.node_limit = 2;
  st.heuristic = false;
  st.presolve = false;
  MiqpSolution s = solve_miqp(m, st);
  CHECK(s.nodes <= 2);
  CHECK(s.status == MiqpStatus::node_limit);
}

TEST_CASE("presolve tightens big-M rows without changing the optimum") {
  std::mt19937_64 rng(17);
  MixedIntegerQP m = random_instance(rng, 6);
  PresolveResult pre = presolve(m);
  CHECK_FALSE(pre.infeasible);
  CHECK(pre.tightened_coefficients >= 6);
  MiqpSolution a = enumerate_oracle(m);
  MiqpSolution b = enumerate_oracle(pre.problem);
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-7));
}
