#include "riot/nnls.hpp"

#include <limits>
#include <vector>

namespace riot {
namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::vector<bool>& passive) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (passive[j]) cols.push_back(j);
  }
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
  const Eigen::VectorXd zs = sub.colPivHouseholderQr().solve(b);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(a.cols());
  for (std::size_t k = 0; k < cols.size(); ++k) z(cols[k]) = zs(static_cast<Eigen::Index>(k));
  return z;
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol) {
  const Eigen::Index n = a.cols();
  NnlsResult r;
  r.x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double scale = std::max(1.0, (a.transpose() * b).cwiseAbs().maxCoeff());
  const int max_outer = 3 * static_cast<int>(n) + 10;

  Eigen::VectorXd w = a.transpose() * (b - a * r.x);
  for (; r.iterations < max_outer; ++r.iterations) {
    Eigen::Index best = -1;
    double best_w = tol * scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[best] = true;

    while (true) {
      Eigen::VectorXd z = solve_passive(a, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z(j) <= 0.0) feasible = false;
      }
      if (feasible) {
        r.x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z(j) <= 0.0) alpha = std::min(alpha, r.x(j) / (r.x(j) - z(j)));
      }
      r.x += alpha * (z - r.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && r.x(j) <= tol) {
          passive[j] = false;
          r.x(j) = 0.0;
        }
      }
    }
    w = a.transpose() * (b - a * r.x);
  }
  r.gradient_max = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!passive[j]) r.gradient_max = std::max(r.gradient_max, w(j));
  }
  r.residual_norm = (a * r.x - b).norm();
  return r;
}

}  // namespace riot
