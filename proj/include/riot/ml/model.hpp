#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "riot/ml/data.hpp"
#include "riot/ml/mlp.hpp"
#include "riot/ml/tree.hpp"

namespace riot::ml {

struct Linear {};
struct Ridge {
  double alpha = 1.0;
};
struct RandomForest {
  int n_trees = 100;
  int max_depth = 5;
  bool bootstrap = true;
};
struct ExtraTrees {
  int n_trees = 100;
  int max_depth = 5;
  bool bootstrap = true;
  bool random_thresholds = true;  // false reduces it to RandomForest
};
struct GradientBoosting {
  int n_stages = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
};
struct Mlp {
  std::vector<int> hidden = {50, 25};
  int max_iter = 2000;
  int memory = 10;
  double grad_tol = 1e-6;
};

using ModelKind = std::variant<Linear, Ridge, RandomForest, ExtraTrees, GradientBoosting, Mlp>;

std::string kind_name(const ModelKind& k);
/// "linear", "ridge", "random_forest", "extra_trees", "gradient_boosting", "mlp".
ModelKind parse_kind(const std::string& name);
std::vector<std::string> kind_names();
/// Kind with hyperparameters overridden from `hyper`; unknown keys are rejected.
ModelKind make_kind(const std::string& name, const nlohmann::json& hyper);
nlohmann::json hyperparameters(const ModelKind& k);

struct LinearParams {
  double intercept = 0.0;
  Features weights{};
};
struct ForestParams {
  std::vector<RegressionTree> trees;
};
struct BoostingParams {
  double init = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
};
struct MlpParams {
  MlpShape shape;
  Eigen::VectorXd weights;
  double y_mean = 0.0;
  double y_std = 1.0;
  int iterations = 0;
  double grad_norm = 0.0;
};

struct TrainedModel {
  ModelKind kind;
  Standardizer standardizer;
  std::uint64_t seed = 0;
  std::variant<LinearParams, ForestParams, BoostingParams, MlpParams> params;
  std::vector<std::string> warnings;
};

TrainedModel fit(const ModelKind& kind, const std::vector<DatasetRow>& rows, std::uint64_t seed = 0);

double predict(const TrainedModel& m, const Features& x);
/// Dimension-checked entry for untyped callers.
double predict(const TrainedModel& m, const std::vector<double>& x);
std::vector<double> predict(const TrainedModel& m, const std::vector<DatasetRow>& rows);

struct Evaluation {
  Metrics metrics;
  std::optional<double> r2_standardized_target;
};

Evaluation evaluate(const TrainedModel& m, const std::vector<DatasetRow>& rows);

nlohmann::json to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);
void save_model(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace riot::ml
