#include "v2x/qp.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace v2x {
namespace {

void write_value(std::ostream& os, double v) {
  if (std::isinf(v)) os << (v > 0 ? "inf" : "-inf");
  else os << std::setprecision(17) << v;
}

double read_value(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw QpError("read_qp_text: unexpected end of input");
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  try {
    return std::stod(tok);
  } catch (const std::exception&) {
    throw QpError("read_qp_text: bad number '" + tok + "'");
  }
}

void write_matrix(std::ostream& os, const char* tag, const SpMat& m) {
  os << tag << '\n';
  for (int j = 0; j < m.outerSize(); ++j)
    for (SpMat::InnerIterator it(m, j); it; ++it) {
      os << it.row() << ' ' << j << ' ';
      write_value(os, it.value());
      os << '\n';
    }
}

void write_vector(std::ostream& os, const char* tag, const Eigen::VectorXd& v) {
  os << tag << '\n';
  for (int i = 0; i < v.size(); ++i) {
    write_value(os, v[i]);
    os << '\n';
  }
}

void expect(std::istream& is, const char* tag) {
  std::string tok;
  if (!(is >> tok) || tok != tag) throw QpError(std::string("read_qp_text: expected section ") + tag);
}

SpMat read_matrix(std::istream& is, const char* tag, int rows, int cols, long nnz) {
  expect(is, tag);
  std::vector<Triplet> t;
  t.reserve(nnz);
  for (long k = 0; k < nnz; ++k) {
    int r = 0, c = 0;
    if (!(is >> r >> c)) throw QpError("read_qp_text: bad triplet");
    t.emplace_back(r, c, read_value(is));
  }
  SpMat m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

Eigen::VectorXd read_vector(std::istream& is, const char* tag, int size) {
  expect(is, tag);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = read_value(is);
  return v;
}

}  // namespace

void write_qp_text(std::ostream& os, const QuadraticProgram& qp) {
  os << "qp " << qp.num_vars() << ' ' << qp.num_eq() << ' ' << qp.num_ineq() << ' ' << qp.P.nonZeros() << ' '
     << qp.A_eq.nonZeros() << ' ' << qp.A_ineq.nonZeros() << '\n';
  write_matrix(os, "P", qp.P);
  write_vector(os, "q", qp.q);
  os << "offset\n";
  write_value(os, qp.offset);
  os << '\n';
  write_matrix(os, "Aeq", qp.A_eq);
  write_vector(os, "beq", qp.b_eq);
  write_matrix(os, "Aineq", qp.A_ineq);
  write_vector(os, "ineq_lower", qp.ineq_lower);
  write_vector(os, "ineq_upper", qp.ineq_upper);
  write_vector(os, "x_lower", qp.x_lower);
  write_vector(os, "x_upper", qp.x_upper);
  os << "names\n";
  for (int i = 0; i < qp.num_vars(); ++i)
    os << (static_cast<int>(qp.names.size()) > i && !qp.names[i].empty() ? qp.names[i] : "x" + std::to_string(i))
       << '\n';
}

QuadraticProgram read_qp_text(std::istream& is) {
  std::string tag;
  int n = 0, meq = 0, min = 0;
  long nnzp = 0, nnzeq = 0, nnzin = 0;
  if (!(is >> tag) || tag != "qp" || !(is >> n >> meq >> min >> nnzp >> nnzeq >> nnzin))
    throw QpError("read_qp_text: bad header");
  QuadraticProgram qp;
  qp.P = read_matrix(is, "P", n, n, nnzp);
  qp.q = read_vector(is, "q", n);
  expect(is, "offset");
  qp.offset = read_value(is);
  qp.A_eq = read_matrix(is, "Aeq", meq, n, nnzeq);
  qp.b_eq = read_vector(is, "beq", meq);
  qp.A_ineq = read_matrix(is, "Aineq", min, n, nnzin);
  qp.ineq_lower = read_vector(is, "ineq_lower", min);
  qp.ineq_upper = read_vector(is, "ineq_upper", min);
  qp.x_lower = read_vector(is, "x_lower", n);
  qp.x_upper = read_vector(is, "x_upper", n);
  expect(is, "names");
  qp.names.resize(n);
  for (int i = 0; i < n; ++i)
    if (!(is >> qp.names[i])) throw QpError("read_qp_text: missing names");
  qp.validate();
  return qp;
}

}  // namespace v2x
