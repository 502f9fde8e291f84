#include "riot/ml/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "riot/error.hpp"

namespace riot::ml {

Features features_of(const DatasetRow& r) { return {r.state_duration_s, r.vlc_payload_bytes, r.ble_payload_bytes}; }

void check_finite(const std::vector<DatasetRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    for (double v : {r.state_duration_s, r.vlc_payload_bytes, r.ble_payload_bytes, r.current_ua}) {
      if (!std::isfinite(v)) throw ValidationError("row " + std::to_string(i) + " contains a NaN or infinite value");
    }
  }
}

std::vector<DatasetRow> canonical_order(std::vector<DatasetRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const DatasetRow& a, const DatasetRow& b) {
    return std::tie(a.state_duration_s, a.vlc_payload_bytes, a.ble_payload_bytes, a.current_ua) <
           std::tie(b.state_duration_s, b.vlc_payload_bytes, b.ble_payload_bytes, b.current_ua);
  });
  return rows;
}

Features Standardizer::apply(const Features& x) const {
  Features z;
  for (std::size_t j = 0; j < kFeatures; ++j) z[j] = (x[j] - mean[j]) / stddev[j];
  return z;
}

bool Standardizer::any_constant() const { return std::any_of(constant.begin(), constant.end(), [](bool c) { return c; }); }

Standardizer fit_standardizer(const std::vector<DatasetRow>& rows) {
  if (rows.size() < 2) throw ValidationError("insufficient data: at least 2 rows are required");
  Standardizer s;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < kFeatures; ++j) {
    double sum = 0.0;
    for (const auto& r : rows) sum += features_of(r)[j];
    const double m = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) {
      const double d = features_of(r)[j] - m;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    s.mean[j] = m;
    s.constant[j] = !(sd > 0.0);
    s.stddev[j] = s.constant[j] ? 1.0 : sd;
  }
  return s;
}

Split train_test_split(const std::vector<DatasetRow>& rows, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0, 1)");
  auto sorted = canonical_order(rows);
  std::vector<std::size_t> idx(sorted.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(sorted.size())));
  Split s;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? s.test : s.train).push_back(sorted[idx[k]]);
  return s;
}

double Metrics::r2_value() const {
  if (!r2) throw DomainError("R² is undefined: evaluation targets have zero variance");
  return *r2;
}

Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.empty()) throw ValidationError("at least one evaluation row is required");
  if (y.size() != y_hat.size()) throw ValidationError("prediction count does not match target count");
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0, sae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    sse += e * e;
    sae += std::abs(e);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  Metrics m;
  m.n = y.size();
  m.mae = sae / n;
  m.rmse = std::sqrt(sse / n);
  if (sst > 0.0) m.r2 = 1.0 - sse / sst;
  return m;
}

}  // namespace riot::ml
