#include "riot/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

#include "riot/error.hpp"
#include "riot/nnls.hpp"

namespace riot::calibration {

using node::NodeState;

std::vector<EnergyTotal> reference_totals() {
  return {
      {1, 60.0, 1611.0}, {1, 3600.0, 1585.0}, {2, 60.0, 500.0}, {2, 3600.0, 467.0}, {3, 60.0, 486.0},
      {3, 3600.0, 467.0}, {4, 60.0, 158.0},   {4, 3600.0, 59.0}, {5, 60.0, 78.0},   {5, 3600.0, 3.0},
  };
}

std::vector<EnergyTotal> read_totals_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open totals file " + path);
  std::vector<EnergyTotal> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.starts_with("scenario")) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    EnergyTotal t;
    if (!(is >> t.scenario >> t.period_s >> t.energy_j)) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected scenario_id,period_s,energy_j");
    }
    out.push_back(t);
  }
  return out;
}

std::string totals_csv(const std::vector<EnergyTotal>& totals) {
  std::ostringstream os;
  os << "scenario_id,period_s,energy_j\n";
  for (const auto& t : totals) os << t.scenario << ',' << t.period_s << ',' << t.energy_j << '\n';
  return os.str();
}

void StateDurationCatalog::add(int scenario, double period_s, scenario::Scenario s) {
  scenarios_[{scenario, period_s}] = std::move(s);
}

const scenario::Scenario& StateDurationCatalog::at(int scenario, double period_s) const {
  auto it = scenarios_.find({scenario, period_s});
  if (it == scenarios_.end()) {
    std::ostringstream os;
    os << "catalog has no scenario " << scenario << " with period " << period_s << " s";
    throw NotFoundError(os.str());
  }
  return it->second;
}

std::map<NodeState, double> state_seconds(const scenario::Scenario& s) {
  std::map<NodeState, double> out;
  for (const auto& seg : scenario::expand_schedule(s)) {
    const auto* n = std::get_if<NodeState>(&seg.state);
    if (n == nullptr) throw ValidationError("calibration catalog scenario " + s.name + " contains AP states");
    out[*n] += seg.duration_s;
  }
  return out;
}

std::map<NodeState, double> StateDurationCatalog::state_seconds(int scenario, double period_s) const {
  return calibration::state_seconds(at(scenario, period_s));
}

StateDurationCatalog StateDurationCatalog::scaled(double k) const {
  StateDurationCatalog out;
  for (auto [key, s] : scenarios_) {
    for (auto& seg : s.preamble) seg.duration_s *= k;
    for (auto& seg : s.cycle) seg.duration_s *= k;
    s.horizon_s *= k;
    if (auto* p = std::get_if<scenario::Periodic>(&s.repetition)) p->value_s *= k;
    if (auto* p = std::get_if<scenario::RandomPoisson>(&s.repetition)) p->mean_rate_per_s /= k;
    out.scenarios_[{key.first, key.second * k}] = std::move(s);
  }
  return out;
}

StateDurationCatalog builtin_catalog() {
  StateDurationCatalog c;
  for (int n = 1; n <= 5; ++n) {
    for (double p : {60.0, 3600.0}) c.add(n, p, scenario::builtin_scenario(n, p));
  }
  return c;
}

std::map<NodeState, double> default_priors() {
  return {
      {NodeState::kBleAdvertisingFast, 15.0}, {NodeState::kBmeInit, 10.0}, {NodeState::kBleTx, 20.0},
      {NodeState::kIdle, 1.5},                {NodeState::kEinkUpdate, 30.0}, {NodeState::kBleRx, 20.0},
      {NodeState::kWakeUp, 5.0},
  };
}

FitOptions default_fit_options() {
  FitOptions o;
  o.pinned_mw = default_priors();
  return o;
}

std::string FitReport::render() const {
  std::ostringstream os;
  os << "# node calibration fit residuals (24 h totals)\n";
  os << "scenario,period_s,target_j,predicted_j,relative_residual\n";
  os << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.total.scenario << ',' << r.total.period_s << ',' << r.total.energy_j << ',' << r.predicted_j << ','
       << r.relative_residual << '\n';
  }
  os << "# max_relative_residual " << max_relative_residual << '\n';
  os << "# nnls_iterations " << nnls_iterations << " gradient_max " << nnls_gradient_max << '\n';
  os << "# fitted:";
  for (auto s : fitted_states) os << ' ' << node::to_string(s);
  os << "\n# pinned:";
  for (auto s : pinned_states) os << ' ' << node::to_string(s);
  os << '\n';
  return os.str();
}

FitResult fit_calibration(const std::vector<EnergyTotal>& totals, const StateDurationCatalog& catalog,
                          const FitOptions& options) {
  if (totals.empty()) throw ValidationError("no scenario totals to fit");
  std::vector<std::map<NodeState, double>> seconds;
  for (const auto& t : totals) {
    if (!(t.energy_j > 0.0)) throw ValidationError("scenario totals must be positive energies");
    seconds.push_back(catalog.state_seconds(t.scenario, t.period_s));
  }
  for (const auto& [s, p] : options.pinned_mw) {
    if (!(p >= 0.0)) throw ValidationError("pinned power for " + std::string(node::to_string(s)) + " is negative");
  }

  std::vector<NodeState> free_states;
  for (NodeState s : node::kAllNodeStates) {
    if (options.pinned_mw.contains(s)) continue;
    const bool used = std::any_of(seconds.begin(), seconds.end(), [&](const auto& row) {
      auto it = row.find(s);
      return it != row.end() && it->second > 0.0;
    });
    if (used) free_states.push_back(s);
  }

  const auto m = static_cast<Eigen::Index>(totals.size());
  const auto n = static_cast<Eigen::Index>(free_states.size());
  Eigen::MatrixXd a(m, n);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& row = seconds[static_cast<std::size_t>(i)];
    const double e = totals[static_cast<std::size_t>(i)].energy_j;
    double pinned_j = 0.0;
    for (const auto& [s, t] : row) {
      if (auto it = options.pinned_mw.find(s); it != options.pinned_mw.end()) pinned_j += t * it->second / 1000.0;
    }
    const double w = 1.0 / e;
    for (Eigen::Index j = 0; j < n; ++j) {
      auto it = row.find(free_states[static_cast<std::size_t>(j)]);
      a(i, j) = w * (it == row.end() ? 0.0 : it->second);
    }
    b(i) = w * (e - pinned_j);
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  NnlsResult sol;
  if (n > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < n) {
      // Columns past the rank are combinations of the pivot columns.
      const auto perm = qr.colsPermutation().indices();
      std::ostringstream os;
      os << "calibration is rank-deficient (" << qr.rank() << " of " << n
         << " states identifiable); pin a prior for one of:";
      for (Eigen::Index k = qr.rank(); k < n; ++k) os << ' ' << node::to_string(free_states[perm(k)]);
      os << " (indistinguishable from the remaining free states)";
      throw CalibrationError(os.str());
    }
    sol = nnls(a, b, options.nnls_tolerance);
    x = sol.x;
  }

  FitResult out;
  for (Eigen::Index j = 0; j < n; ++j) {
    out.calibration.set(free_states[static_cast<std::size_t>(j)], x(j) * 1000.0, std::string(node::kProvenanceFitted));
  }
  for (const auto& [s, p] : options.pinned_mw) out.calibration.set(s, p, std::string(node::kProvenancePrior));

  FitReport& rep = out.report;
  rep.fitted_states = free_states;
  for (const auto& [s, p] : options.pinned_mw) rep.pinned_states.push_back(s);
  rep.nnls_iterations = sol.iterations;
  rep.nnls_gradient_max = sol.gradient_max;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    double pred = 0.0;
    for (const auto& [s, t] : seconds[i]) pred += t * out.calibration.power_mw(s) / 1000.0;
    const double rel = (pred - totals[i].energy_j) / totals[i].energy_j;
    rep.rows.push_back({totals[i], pred, rel});
    rep.max_relative_residual = std::max(rep.max_relative_residual, std::abs(rel));
  }

  if (rep.max_relative_residual > options.feasibility_tolerance) {
    std::ostringstream os;
    os << "no nonnegative calibration reproduces the totals (max relative residual " << rep.max_relative_residual
       << ");";
    for (const auto& r : rep.rows) {
      if (std::abs(r.relative_residual) > options.feasibility_tolerance) {
        os << " scenario " << r.total.scenario << "@" << r.total.period_s << "s target " << r.total.energy_j
           << " J fit " << r.predicted_j << " J;";
      }
    }
    os << " states clamped at zero:";
    for (Eigen::Index j = 0; j < n; ++j) {
      if (x(j) == 0.0) os << ' ' << node::to_string(free_states[static_cast<std::size_t>(j)]);
    }
    throw CalibrationError(os.str(), rep.render());
  }
  return out;
}

namespace {

const FitResult& shipped_fit() {
  static const FitResult fit = fit_calibration(reference_totals(), builtin_catalog());
  return fit;
}

}  // namespace

const node::NodePowerCalibration& shipped_calibration() { return shipped_fit().calibration; }
const FitReport& shipped_fit_report() { return shipped_fit().report; }

}  // namespace riot::calibration
