#pragma once

#include <Eigen/Dense>

namespace riot {

struct NnlsResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  double gradient_max = 0.0;  // max of A^T(b - Ax) over the zero set at exit
  int iterations = 0;
};

/// Lawson-Hanson active-set solver for min ||Ax - b|| subject to x >= 0.
/// `tol` bounds the normal-equations residual used as the optimality test.
NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol = 1e-9);

}  // namespace riot
