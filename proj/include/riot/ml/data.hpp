#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "riot/dataset.hpp"

namespace riot::ml {

inline constexpr std::size_t kFeatures = 3;

using Features = std::array<double, kFeatures>;
using trace::DatasetRow;

Features features_of(const DatasetRow& r);

/// Throws ValidationError naming the first row with a NaN/inf value.
void check_finite(const std::vector<DatasetRow>& rows);

/// Rows sorted by (features, target): the order every trainer works in.
std::vector<DatasetRow> canonical_order(std::vector<DatasetRow> rows);

struct Standardizer {
  Features mean{};
  Features stddev{1.0, 1.0, 1.0};
  std::array<bool, kFeatures> constant{};  // stddev forced to 1

  Features apply(const Features& x) const;
  bool any_constant() const;
};

/// Population mean/stddev per feature; needs at least 2 rows.
Standardizer fit_standardizer(const std::vector<DatasetRow>& rows);

struct Split {
  std::vector<DatasetRow> train;
  std::vector<DatasetRow> test;
};

/// Seeded, disjoint, independent of the input row order.
Split train_test_split(const std::vector<DatasetRow>& rows, double test_fraction, std::uint64_t seed);

struct Metrics {
  std::optional<double> r2;  // absent when targets have zero variance
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  /// Throws DomainError when R² is undefined.
  double r2_value() const;
};

Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat);

}  // namespace riot::ml
