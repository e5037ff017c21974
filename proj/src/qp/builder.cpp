#include "v2x/qp_builder.hpp"

namespace v2x {

int QpBuilder::add_var(double lower, double upper, std::string name) {
  if (lower > upper) throw QpError("QpBuilder: lower > upper for " + name);
  x_lower_.push_back(lower);
  x_upper_.push_back(upper);
  names_.push_back(std::move(name));
  q_.push_back(0.0);
  return static_cast<int>(x_lower_.size()) - 1;
}

void QpBuilder::set_bounds(int var, double lower, double upper) {
  if (lower > upper) throw QpError("QpBuilder: lower > upper for " + names_.at(var));
  x_lower_.at(var) = lower;
  x_upper_.at(var) = upper;
}

int QpBuilder::add_eq(const LinearExpr& expr, double rhs) {
  const int row = num_eq();
  for (const Term& t : expr)
    if (t.coeff != 0.0) a_eq_.emplace_back(row, t.var, t.coeff);
  b_eq_.push_back(rhs);
  return row;
}

int QpBuilder::add_range(const LinearExpr& expr, double lower, double upper) {
  const int row = num_ineq();
  for (const Term& t : expr)
    if (t.coeff != 0.0) a_in_.emplace_back(row, t.var, t.coeff);
  in_lower_.push_back(lower);
  in_upper_.push_back(upper);
  return row;
}

void QpBuilder::add_linear_cost(int var, double coeff) { q_.at(var) += coeff; }

void QpBuilder::add_square_cost(int var, double coeff) {
  if (coeff != 0.0) p_.emplace_back(var, var, 2.0 * coeff);
}

void QpBuilder::add_square_deviation_cost(int var, double coeff, double target) {
  add_square_cost(var, coeff);
  add_linear_cost(var, -2.0 * coeff * target);
  offset_ += coeff * target * target;
}

QuadraticProgram QpBuilder::build() const {
  const int n = num_vars();
  QuadraticProgram qp;
  qp.P.resize(n, n);
  qp.P.setFromTriplets(p_.begin(), p_.end());
  qp.P.makeCompressed();
  qp.q = Eigen::Map<const Eigen::VectorXd>(q_.data(), n);
  qp.offset = offset_;
  qp.A_eq.resize(num_eq(), n);
  qp.A_eq.setFromTriplets(a_eq_.begin(), a_eq_.end());
  qp.A_eq.makeCompressed();
  qp.b_eq = Eigen::Map<const Eigen::VectorXd>(b_eq_.data(), num_eq());
  qp.A_ineq.resize(num_ineq(), n);
  qp.A_ineq.setFromTriplets(a_in_.begin(), a_in_.end());
  qp.A_ineq.makeCompressed();
  qp.ineq_lower = Eigen::Map<const Eigen::VectorXd>(in_lower_.data(), num_ineq());
  qp.ineq_upper = Eigen::Map<const Eigen::VectorXd>(in_upper_.data(), num_ineq());
  qp.x_lower = Eigen::Map<const Eigen::VectorXd>(x_lower_.data(), n);
  qp.x_upper = Eigen::Map<const Eigen::VectorXd>(x_upper_.data(), n);
  qp.names = names_;
  return qp;
}

}  // namespace v2x
