#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace loadshift {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// min 0.5 x'Hx + c'x + constant  s.t.  A_in x <= b_in,  A_eq x = b_eq,  lower <= x <= upper.
/// Bounds may be infinite; variables with lower == upper are eliminated.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  double constant = 0.0;
  SparseRows A_in;
  Eigen::VectorXd b_in;
  SparseRows A_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower, upper;

  Eigen::Index size() const { return c.size(); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) + c.dot(x) + constant; }
  void validate() const;
};

struct QpOptions {
  int max_iter = 100;
  double tol = 1e-9;
  bool detect_infeasibility = true;
};

enum class QpStatus { optimal, infeasible, unbounded, max_iter };
const char* to_string(QpStatus status);

struct QpResult {
  QpStatus status = QpStatus::max_iter;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;  // max of dual, primal and complementarity residuals
};

/// Dense Mehrotra predictor-corrector interior-point method.
QpResult solve_qp(const QpProblem& qp, const QpOptions& options = {});

/// Same problem with replacement bounds (branch-and-bound nodes).
QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const QpOptions& options = {});

}  // namespace loadshift
