#pragma once

#include "v2x/qp.hpp"

#include <string>
#include <utility>
#include <vector>

namespace v2x {

struct Term {
  int var;
  double coeff;
};

using LinearExpr = std::vector<Term>;

// Incremental assembly of a QuadraticProgram from named variables and rows.
class QpBuilder {
 public:
  int add_var(double lower, double upper, std::string name);

  void set_bounds(int var, double lower, double upper);
  double lower(int var) const { return x_lower_[var]; }
  double upper(int var) const { return x_upper_[var]; }

  // Returns the row index within its class.
  int add_eq(const LinearExpr& expr, double rhs);
  int add_range(const LinearExpr& expr, double lower, double upper);
  int add_le(const LinearExpr& expr, double upper) { return add_range(expr, -kInf, upper); }
  int add_ge(const LinearExpr& expr, double lower) { return add_range(expr, lower, kInf); }

  void add_linear_cost(int var, double coeff);
  // Adds coeff * x_var^2.
  void add_square_cost(int var, double coeff);
  // Adds coeff * (x_var - target)^2 including the constant.
  void add_square_deviation_cost(int var, double coeff, double target);
  void add_constant_cost(double c) { offset_ += c; }

  int num_vars() const { return static_cast<int>(x_lower_.size()); }
  int num_eq() const { return static_cast<int>(b_eq_.size()); }
  int num_ineq() const { return static_cast<int>(in_lower_.size()); }

  QuadraticProgram build() const;

 private:
  std::vector<double> x_lower_, x_upper_;
  std::vector<std::string> names_;
  std::vector<Triplet> p_, a_eq_, a_in_;
  std::vector<double> b_eq_, in_lower_, in_upper_;
  std::vector<double> q_;
  double offset_ = 0.0;
};

}  // namespace v2x
