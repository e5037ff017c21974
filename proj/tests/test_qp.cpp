#include <doctest.h>

#include "oracles.hpp"
#include "random_qp.hpp"
#include "v2x/qp.hpp"
#include "v2x/qp_builder.hpp"

#include <random>
#include <sstream>

using namespace v2x;
using v2x::testing::to_qp;

TEST_CASE("unconstrained shifted square") {
  QpBuilder b;
  int x = b.add_var(-kInf, kInf, "x");
  b.add_square_deviation_cost(x, 1.0, 2.0);
  QpSolution s = solve_qp(b.build());
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(s.objective) < 1e-9);
}

TEST_CASE("active lower bound has multiplier two") {
  QpBuilder b;
  int x = b.add_var(1.0, kInf, "x");
  b.add_square_cost(x, 1.0);
  QuadraticProgram qp = b.build();
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.dual_box[0] == doctest::Approx(2.0).epsilon(1e-8));

  SUBCASE("exact analytic point has zero residuals") {
    QpSolution exact = s;
    exact.x[0] = 1.0;
    exact.dual_box[0] = 2.0;
    KktResiduals r = kkt_residuals(qp, exact);
    CHECK(r.primal <= 1e-12);
    CHECK(r.dual <= 1e-12);
    CHECK(r.complementarity <= 1e-12);
  }
  SUBCASE("primal perturbation on the active bound") {
    QpSolution p = s;
    p.x[0] = 1.0 - 1e-3;
    p.dual_box[0] = 2.0 * p.x[0];
    KktResiduals r = kkt_residuals(qp, p);
    CHECK(r.primal == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("feasible suboptimal point has dual residual") {
    QpSolution p = s;
    p.x[0] = 1.7;
    p.dual_box[0] = 0.0;
    CHECK(kkt_residuals(qp, p).dual > 0.0);
  }
}

TEST_CASE("equality constrained pair matches projected gradient") {
  QpBuilder b;
  int x = b.add_var(-kInf, kInf, "x");
  int y = b.add_var(-kInf, kInf, "y");
  b.add_square_cost(x, 1.0);
  b.add_square_cost(y, 1.0);
  b.add_eq({{x, 1.0}, {y, 1.0}}, 1.0);
  QpSolution s = solve_qp(b.build());
  REQUIRE(s.status == QpStatus::optimal);

  Eigen::MatrixXd P = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  Eigen::VectorXd rhs(1);
  rhs << 1;
  oracle::Result o = oracle::affine_projected_gradient(P, q, A, rhs, 1e-12);
  CHECK(s.x[0] == doctest::Approx(o.x[0]).epsilon(1e-9));
  CHECK(s.x[1] == doctest::Approx(o.x[1]).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("infeasible and unbounded detection") {
  SUBCASE("contradictory rows") {
    QpBuilder b;
    int x = b.add_var(-kInf, kInf, "x");
    b.add_square_cost(x, 1.0);
    b.add_ge({{x, 1.0}}, 2.0);
    b.add_le({{x, 1.0}}, 1.0);
    QpSolution s = solve_qp(b.build());
    CHECK(s.status == QpStatus::infeasible);
    CHECK_FALSE(s.diagnostic.empty());
  }
  SUBCASE("linear objective without bound") {
    QpBuilder b;
    int x = b.add_var(-kInf, kInf, "x");
    int y = b.add_var(0.0, 1.0, "y");
    b.add_linear_cost(x, 1.0);
    b.add_square_cost(y, 1.0);
    QpSolution s = solve_qp(b.build());
    CHECK(s.status == QpStatus::unbounded);
  }
}

TEST_CASE("validation rejects bad problems") {
  QpBuilder b;
  int x = b.add_var(0.0, 1.0, "x");
  b.add_square_cost(x, 1.0);
  QuadraticProgram qp = b.build();
  QuadraticProgram neg = qp;
  neg.P.coeffRef(0, 0) = -1.0;
  CHECK_THROWS_AS(solve_qp(neg), QpError);
  QuadraticProgram bad = qp;
  bad.q.resize(3);
  CHECK_THROWS_AS(solve_qp(bad), QpError);
}

TEST_CASE("random instances agree with first-order oracles") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const bool box_only = trial % 2 == 0;
    const int n = box_only ? 30 + trial * 5 : 20 + trial;
    const int m = box_only ? 0 : n / 2;
    oracle::RandomQp r = oracle::random_qp(rng, n, m, box_only ? 0.5 : 1.0, true);
    QuadraticProgram qp = to_qp(r);
    QpSolution s = solve_qp(qp);
    REQUIRE(s.status == QpStatus::optimal);
    KktResiduals k = kkt_residuals(qp, s);
    CHECK(k.primal <= 1e-6);
    CHECK(k.dual <= 1e-6);
    CHECK(k.complementarity <= 1e-6);
    double ref;
    if (box_only) {
      ref = oracle::box_projected_gradient(r.P, r.q, r.xlo, r.xhi).objective;
    } else {
      Eigen::MatrixXd A(r.A.rows() + n, n);
      A << r.A, Eigen::MatrixXd::Identity(n, n);
      Eigen::VectorXd lo(A.rows()), hi(A.rows());
      lo << r.lo, r.xlo;
      hi << r.hi, r.xhi;
      ref = oracle::dual_projected_gradient(r.P, r.q, A, lo, hi).objective;
    }
    CHECK(std::abs(s.objective - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("adding a constraint never lowers the optimum") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    oracle::RandomQp r = oracle::random_qp(rng, 25, 8, 1.0, true);
    QuadraticProgram base = to_qp(r);
    QpSolution s0 = solve_qp(base);
    REQUIRE(s0.status == QpStatus::optimal);
    // Cut through the current optimum along a random direction.
    Eigen::VectorXd dir = Eigen::VectorXd::Random(25);
    const double cut = dir.dot(s0.x) - 0.05;
    QuadraticProgram tighter = base;
    const int rows = tighter.num_ineq();
    SpMat A(rows + 1, 25);
    std::vector<Triplet> t;
    for (int j = 0; j < base.A_ineq.outerSize(); ++j)
      for (SpMat::InnerIterator it(base.A_ineq, j); it; ++it) t.emplace_back(it.row(), j, it.value());
    for (int j = 0; j < 25; ++j) t.emplace_back(rows, j, dir[j]);
    A.setFromTriplets(t.begin(), t.end());
    tighter.A_ineq = A;
    tighter.ineq_lower.conservativeResize(rows + 1);
    tighter.ineq_upper.conservativeResize(rows + 1);
    tighter.ineq_lower[rows] = -kInf;
    tighter.ineq_upper[rows] = cut;
    QpSolution s1 = solve_qp(tighter);
    if (s1.status != QpStatus::optimal) continue;
    CHECK(s1.objective >= s0.objective - 1e-7 * (1.0 + std::abs(s0.objective)));
  }
}

TEST_CASE("warm start reaches the same optimum") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    oracle::RandomQp r = oracle::random_qp(rng, 40, 15, 1.0, true);
    QuadraticProgram qp = to_qp(r);
    QpSolution cold = solve_qp(qp);
    REQUIRE(cold.status == QpStatus::optimal);
    WarmStart ws;
    ws.x = cold.x + 0.01 * Eigen::VectorXd::Ones(cold.x.size());
    ws.y.resize(qp.num_eq() + qp.num_ineq() + qp.num_vars());
    ws.y << cold.dual_eq, cold.dual_ineq, cold.dual_box;
    QpSolution warm = solve_qp(qp, {}, &ws);
    REQUIRE(warm.status == QpStatus::optimal);
    CHECK(std::abs(warm.objective - cold.objective) <= 1e-8 * (1.0 + std::abs(cold.objective)));
  }
}

TEST_CASE("box updates on a reused solver") {
  QpBuilder b;
  int x = b.add_var(0.0, 5.0, "x");
  int y = b.add_var(0.0, 1.0, "y");
  b.add_square_deviation_cost(x, 1.0, 3.0);
  b.add_square_cost(y, 1.0);
  b.add_le({{x, 1.0}, {y, -5.0}}, 0.0);
  QpSolver solver(b.build());
  Eigen::VectorXd lo(2), hi(2);
  lo << 0, 1;
  hi << 5, 1;
  solver.set_box_bounds(lo, hi);
  QpSolution a = solver.solve();
  REQUIRE(a.status == QpStatus::optimal);
  CHECK(a.x[0] == doctest::Approx(3.0).epsilon(1e-8));
  lo << 0, 0;
  hi << 5, 0;
  solver.set_box_bounds(lo, hi);
  QpSolution c = solver.solve();
  REQUIRE(c.status == QpStatus::optimal);
  CHECK(std::abs(c.x[0]) < 1e-8);
  CHECK(c.objective == doctest::Approx(9.0).epsilon(1e-8));
}

TEST_CASE("text dump round trip") {
  std::mt19937_64 rng(3);
  oracle::RandomQp r = oracle::random_qp(rng, 6, 3, 1.0, true);
  QuadraticProgram qp = to_qp(r);
  qp.offset = 1.25;
  std::stringstream ss;
  write_qp_text(ss, qp);
  QuadraticProgram back = read_qp_text(ss);
  CHECK(back.num_vars() == qp.num_vars());
  CHECK((SpMat(back.P - qp.P)).norm() == 0.0);
  CHECK((SpMat(back.A_ineq - qp.A_ineq)).norm() == 0.0);
  CHECK(back.offset == 1.25);
  CHECK(back.x_upper == qp.x_upper);
}
