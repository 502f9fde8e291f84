#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "riot/ml/data.hpp"

namespace riot::ml {

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict(const Features& z) const;
  int depth() const;
};

struct TreeParams {
  int max_depth = 5;
  std::size_t min_samples_split = 2;
  bool random_thresholds = false;  // extra-trees: threshold ~ U[min, max] per feature
};

/// Variance-reduction regression tree over rows `idx` (duplicates allowed, as
/// from a bootstrap draw) of the standardized design `z`.
RegressionTree build_tree(const std::vector<Features>& z, const std::vector<double>& y,
                          const std::vector<std::size_t>& idx, const TreeParams& p, std::mt19937_64& rng);

}  // namespace riot::ml
