#pragma once

#include <map>
#include <string>
#include <vector>

#include "riot/node.hpp"
#include "riot/scenario.hpp"

// Fits per-state node powers to published 24 h scenario energy totals.
namespace riot::calibration {

struct EnergyTotal {
  int scenario = 0;
  double period_s = 0.0;
  double energy_j = 0.0;
};

/// The ten 24 h totals (scenarios 1-5 at 1 min and 1 h periods).
std::vector<EnergyTotal> reference_totals();

std::vector<EnergyTotal> read_totals_csv(const std::string& path);
std::string totals_csv(const std::vector<EnergyTotal>& totals);

/// Scenario definitions keyed by (scenario number, period); expanding one
/// yields the seconds spent in each state.
class StateDurationCatalog {
 public:
  void add(int scenario, double period_s, scenario::Scenario s);
  const scenario::Scenario& at(int scenario, double period_s) const;
  std::map<node::NodeState, double> state_seconds(int scenario, double period_s) const;

  /// Copy with every duration, period and horizon multiplied by k.
  StateDurationCatalog scaled(double k) const;

 private:
  std::map<std::pair<int, double>, scenario::Scenario> scenarios_;
};

StateDurationCatalog builtin_catalog();

std::map<node::NodeState, double> state_seconds(const scenario::Scenario& s);

struct FitOptions {
  /// States held at a fixed power (mW) instead of being fitted.
  std::map<node::NodeState, double> pinned_mw;
  /// Max relative residual accepted before the fit is declared infeasible.
  double feasibility_tolerance = 0.05;
  double nnls_tolerance = 1e-9;
};

/// Priors pinning the states the reference totals cannot separate.
std::map<node::NodeState, double> default_priors();
FitOptions default_fit_options();

struct ResidualRow {
  EnergyTotal total;
  double predicted_j = 0.0;
  double relative_residual = 0.0;
};

struct FitReport {
  std::vector<ResidualRow> rows;
  double max_relative_residual = 0.0;
  double nnls_gradient_max = 0.0;
  int nnls_iterations = 0;
  std::vector<node::NodeState> fitted_states;
  std::vector<node::NodeState> pinned_states;

  std::string render() const;
};

struct FitResult {
  node::NodePowerCalibration calibration;
  FitReport report;
};

/// Weighted NNLS on A·p = e with rows scaled by 1/e. Throws CalibrationError
/// when the free states are not separable (naming them) or the best
/// nonnegative fit misses a total by more than the feasibility tolerance.
FitResult fit_calibration(const std::vector<EnergyTotal>& totals, const StateDurationCatalog& catalog,
                          const FitOptions& options = default_fit_options());

/// Calibration fitted from the reference totals, computed once.
const node::NodePowerCalibration& shipped_calibration();
const FitReport& shipped_fit_report();

}  // namespace riot::calibration
