#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace riot::ml {

/// Fully connected ReLU network with a linear scalar output. Parameters are
/// one flat vector: per layer, the (out x in) weight matrix column-major,
/// then the bias vector.
struct MlpShape {
  std::vector<int> sizes;  // input, hidden..., output (= 1)
  std::size_t parameter_count() const;
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
Eigen::VectorXd mlp_init(const MlpShape& s, std::uint64_t seed);

/// Rows of X are samples. Loss is half the mean squared error.
double mlp_loss_grad(const MlpShape& s, const Eigen::VectorXd& w, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     Eigen::VectorXd* grad);

Eigen::VectorXd mlp_forward(const MlpShape& s, const Eigen::VectorXd& w, const Eigen::MatrixXd& x);

struct LbfgsOptions {
  int max_iter = 2000;
  int memory = 10;
  double grad_tol = 1e-6;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

/// Two-loop-recursion L-BFGS with backtracking Armijo line search.
LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt);

}  // namespace riot::ml
