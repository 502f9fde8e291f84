#include "riot/ml/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "riot/error.hpp"

namespace riot::ml {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr const char* kFormat = "riot-energy-lab model";
constexpr int kFormatVersion = 1;

struct Design {
  std::vector<Features> z;
  std::vector<double> y;
};

Design design(const Standardizer& s, const std::vector<DatasetRow>& rows) {
  Design d;
  d.z.reserve(rows.size());
  for (const auto& r : rows) {
    d.z.push_back(s.apply(features_of(r)));
    d.y.push_back(r.current_ua);
  }
  return d;
}

LinearParams fit_linear(const Design& d, double alpha) {
  const auto n = static_cast<Eigen::Index>(d.y.size());
  Eigen::MatrixXd x(n, kFeatures);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kFeatures; ++j) x(i, j) = d.z[i][j];
    y[i] = d.y[i];
  }
  // Centre so the intercept stays out of the penalty.
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - ym;
  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += alpha;
  const Eigen::VectorXd w = a.completeOrthogonalDecomposition().solve(xc.transpose() * yc);
  LinearParams p;
  for (std::size_t j = 0; j < kFeatures; ++j) p.weights[j] = w[j];
  p.intercept = ym - xm.dot(w);
  return p;
}

std::vector<std::size_t> bootstrap_sample(std::size_t n, bool bootstrap, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  if (!bootstrap) {
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  std::uniform_int_distribution<std::size_t> u(0, n - 1);
  for (auto& i : idx) i = u(rng);
  return idx;
}

ForestParams fit_forest(const Design& d, int n_trees, int max_depth, bool bootstrap, bool random_thresholds,
                        std::uint64_t seed) {
  if (n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (max_depth < 0) throw ValidationError("max_depth must be >= 0");
  ForestParams f;
  for (int t = 0; t < n_trees; ++t) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(t)};
    std::mt19937_64 boot_rng(seq);
    std::mt19937_64 split_rng(boot_rng());
    const auto idx = bootstrap_sample(d.y.size(), bootstrap, boot_rng);
    f.trees.push_back(build_tree(d.z, d.y, idx, TreeParams{max_depth, 2, random_thresholds}, split_rng));
  }
  return f;
}

BoostingParams fit_boosting(const Design& d, const GradientBoosting& g, std::uint64_t seed) {
  if (g.n_stages < 0) throw ValidationError("n_stages must be >= 0");
  if (!(g.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  BoostingParams b;
  b.learning_rate = g.learning_rate;
  b.init = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(d.y.size());
  std::vector<double> pred(d.y.size(), b.init), resid(d.y.size());
  std::vector<std::size_t> idx(d.y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int s = 0; s < g.n_stages; ++s) {
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = d.y[i] - pred[i];
    auto tree = build_tree(d.z, resid, idx, TreeParams{g.max_depth, 2, false}, rng);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += g.learning_rate * tree.predict(d.z[i]);
    b.trees.push_back(std::move(tree));
  }
  return b;
}

MlpParams fit_mlp(const Design& d, const Mlp& m, std::uint64_t seed) {
  for (int h : m.hidden)
    if (h < 1) throw ValidationError("hidden layer sizes must be >= 1");
  MlpParams p;
  p.shape.sizes.push_back(static_cast<int>(kFeatures));
  for (int h : m.hidden) p.shape.sizes.push_back(h);
  p.shape.sizes.push_back(1);
  const auto n = static_cast<Eigen::Index>(d.y.size());
  Eigen::MatrixXd x(n, kFeatures);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kFeatures; ++j) x(i, j) = d.z[i][j];
    y[i] = d.y[i];
  }
  p.y_mean = y.mean();
  const double sd = std::sqrt((y.array() - p.y_mean).square().mean());
  p.y_std = sd > 0.0 ? sd : 1.0;
  const Eigen::VectorXd ys = (y.array() - p.y_mean) / p.y_std;
  auto obj = [&](const Eigen::VectorXd& w, Eigen::VectorXd* g) { return mlp_loss_grad(p.shape, w, x, ys, g); };
  auto r = lbfgs_minimize(obj, mlp_init(p.shape, seed), {m.max_iter, m.memory, m.grad_tol});
  p.weights = std::move(r.x);
  p.iterations = r.iterations;
  p.grad_norm = r.grad_norm;
  return p;
}

nlohmann::json tree_json(const RegressionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  return nodes;
}

RegressionTree tree_from(const nlohmann::json& j) {
  RegressionTree t;
  for (const auto& n : j) {
    t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                       n.at(4).get<double>()});
  }
  const int size = static_cast<int>(t.nodes.size());
  if (size == 0) throw ValidationError("model file: empty tree");
  for (const auto& n : t.nodes) {
    if (n.feature >= static_cast<int>(kFeatures) || (n.feature >= 0 && (n.left <= 0 || n.left >= size ||
                                                                         n.right <= 0 || n.right >= size)))
      throw ValidationError("model file: malformed tree node");
  }
  return t;
}

nlohmann::json hyper_json(const ModelKind& k) {
  return std::visit(
      Overloaded{[](const Linear&) { return nlohmann::json::object(); },
                 [](const Ridge& r) { return nlohmann::json{{"alpha", r.alpha}}; },
                 [](const RandomForest& r) {
                   return nlohmann::json{{"n_trees", r.n_trees}, {"max_depth", r.max_depth}, {"bootstrap", r.bootstrap}};
                 },
                 [](const ExtraTrees& r) {
                   return nlohmann::json{{"n_trees", r.n_trees},
                                         {"max_depth", r.max_depth},
                                         {"bootstrap", r.bootstrap},
                                         {"random_thresholds", r.random_thresholds}};
                 },
                 [](const GradientBoosting& g) {
                   return nlohmann::json{
                       {"n_stages", g.n_stages}, {"learning_rate", g.learning_rate}, {"max_depth", g.max_depth}};
                 },
                 [](const Mlp& m) {
                   return nlohmann::json{{"hidden", m.hidden},
                                         {"activation", "relu"},
                                         {"optimizer", "lbfgs"},
                                         {"max_iter", m.max_iter},
                                         {"memory", m.memory},
                                         {"grad_tol", m.grad_tol}};
                 }},
      k);
}

ModelKind kind_from(const std::string& name, const nlohmann::json& h) {
  ModelKind k = parse_kind(name);
  std::visit(Overloaded{[](Linear&) {},
                        [&](Ridge& r) { r.alpha = h.value("alpha", r.alpha); },
                        [&](RandomForest& r) {
                          r.n_trees = h.value("n_trees", r.n_trees);
                          r.max_depth = h.value("max_depth", r.max_depth);
                          r.bootstrap = h.value("bootstrap", r.bootstrap);
                        },
                        [&](ExtraTrees& r) {
                          r.n_trees = h.value("n_trees", r.n_trees);
                          r.max_depth = h.value("max_depth", r.max_depth);
                          r.bootstrap = h.value("bootstrap", r.bootstrap);
                          r.random_thresholds = h.value("random_thresholds", r.random_thresholds);
                        },
                        [&](GradientBoosting& g) {
                          g.n_stages = h.value("n_stages", g.n_stages);
                          g.learning_rate = h.value("learning_rate", g.learning_rate);
                          g.max_depth = h.value("max_depth", g.max_depth);
                        },
                        [&](Mlp& m) {
                          m.hidden = h.value("hidden", m.hidden);
                          m.max_iter = h.value("max_iter", m.max_iter);
                          m.memory = h.value("memory", m.memory);
                          m.grad_tol = h.value("grad_tol", m.grad_tol);
                        }},
             k);
  return k;
}

}  // namespace

std::string kind_name(const ModelKind& k) {
  static const char* kNames[] = {"linear", "ridge", "random_forest", "extra_trees", "gradient_boosting", "mlp"};
  return kNames[k.index()];
}

std::vector<std::string> kind_names() {
  return {"linear", "ridge", "random_forest", "extra_trees", "gradient_boosting", "mlp"};
}

ModelKind make_kind(const std::string& name, const nlohmann::json& hyper) {
  if (hyper.is_null()) return parse_kind(name);
  if (!hyper.is_object()) throw ValidationError("hyperparameters must be an object");
  const auto known = hyper_json(parse_kind(name));
  for (const auto& [k, v] : hyper.items()) {
    if (!known.contains(k)) throw ValidationError("unknown hyperparameter '" + k + "' for " + kind_name(parse_kind(name)));
    if (k == "activation" && v != "relu") throw ValidationError("only relu activation is supported");
    if (k == "optimizer" && v != "lbfgs") throw ValidationError("only the lbfgs optimizer is supported");
  }
  try {
    return kind_from(name, hyper);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad hyperparameter value: ") + e.what());
  }
}

nlohmann::json hyperparameters(const ModelKind& k) { return hyper_json(k); }

ModelKind parse_kind(const std::string& name) {
  if (name == "linear" || name == "ols") return Linear{};
  if (name == "ridge") return Ridge{};
  if (name == "random_forest" || name == "rf") return RandomForest{};
  if (name == "extra_trees" || name == "et") return ExtraTrees{};
  if (name == "gradient_boosting" || name == "gb") return GradientBoosting{};
  if (name == "mlp") return Mlp{};
  throw ValidationError("unknown model kind '" + name +
                        "' (linear, ridge, random_forest, extra_trees, gradient_boosting, mlp)");
}

TrainedModel fit(const ModelKind& kind, const std::vector<DatasetRow>& input, std::uint64_t seed) {
  if (input.size() < 2) throw ValidationError("insufficient data: at least 2 rows are required");
  check_finite(input);
  const auto rows = canonical_order(input);
  TrainedModel m;
  m.kind = kind;
  m.seed = seed;
  m.standardizer = fit_standardizer(rows);
  for (std::size_t j = 0; j < kFeatures; ++j)
    if (m.standardizer.constant[j])
      m.warnings.push_back("feature " + std::to_string(j) + " is constant; its stddev is set to 1");
  const auto d = design(m.standardizer, rows);
  m.params = std::visit(
      Overloaded{
          [&](const Linear&) -> decltype(m.params) { return fit_linear(d, 0.0); },
          [&](const Ridge& r) -> decltype(m.params) {
            if (!(r.alpha >= 0.0)) throw ValidationError("ridge alpha must be >= 0");
            return fit_linear(d, r.alpha);
          },
          [&](const RandomForest& r) -> decltype(m.params) {
            return fit_forest(d, r.n_trees, r.max_depth, r.bootstrap, false, seed);
          },
          [&](const ExtraTrees& e) -> decltype(m.params) {
            return fit_forest(d, e.n_trees, e.max_depth, e.bootstrap, e.random_thresholds, seed);
          },
          [&](const GradientBoosting& g) -> decltype(m.params) { return fit_boosting(d, g, seed); },
          [&](const Mlp& p) -> decltype(m.params) { return fit_mlp(d, p, seed); },
      },
      kind);
  return m;
}

double predict(const TrainedModel& m, const Features& x) {
  const Features z = m.standardizer.apply(x);
  return std::visit(Overloaded{[&](const LinearParams& p) {
                                 double v = p.intercept;
                                 for (std::size_t j = 0; j < kFeatures; ++j) v += p.weights[j] * z[j];
                                 return v;
                               },
                               [&](const ForestParams& f) {
                                 double s = 0.0;
                                 for (const auto& t : f.trees) s += t.predict(z);
                                 return s / static_cast<double>(f.trees.size());
                               },
                               [&](const BoostingParams& b) {
                                 double s = b.init;
                                 for (const auto& t : b.trees) s += b.learning_rate * t.predict(z);
                                 return s;
                               },
                               [&](const MlpParams& p) {
                                 Eigen::MatrixXd x1(1, kFeatures);
                                 for (std::size_t j = 0; j < kFeatures; ++j) x1(0, j) = z[j];
                                 return mlp_forward(p.shape, p.weights, x1)[0] * p.y_std + p.y_mean;
                               }},
                    m.params);
}

double predict(const TrainedModel& m, const std::vector<double>& x) {
  if (x.size() != kFeatures)
    throw ValidationError("expected " + std::to_string(kFeatures) + " features, got " + std::to_string(x.size()));
  return predict(m, Features{x[0], x[1], x[2]});
}

std::vector<double> predict(const TrainedModel& m, const std::vector<DatasetRow>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  if (const auto* p = std::get_if<MlpParams>(&m.params)) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), kFeatures);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto z = m.standardizer.apply(features_of(rows[i]));
      for (std::size_t j = 0; j < kFeatures; ++j) x(i, j) = z[j];
    }
    const Eigen::VectorXd y = mlp_forward(p->shape, p->weights, x);
    for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(y[i] * p->y_std + p->y_mean);
    return out;
  }
  for (const auto& r : rows) out.push_back(predict(m, features_of(r)));
  return out;
}

Evaluation evaluate(const TrainedModel& m, const std::vector<DatasetRow>& rows) {
  check_finite(rows);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r.current_ua);
  const auto yhat = predict(m, rows);
  Evaluation e;
  e.metrics = compute_metrics(y, yhat);
  // Same residuals in standardized-target units.
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(y.size()));
  if (sd > 0.0) {
    std::vector<double> ys, hs;
    for (std::size_t i = 0; i < y.size(); ++i) {
      ys.push_back((y[i] - mean) / sd);
      hs.push_back((yhat[i] - mean) / sd);
    }
    e.r2_standardized_target = compute_metrics(ys, hs).r2;
  }
  return e;
}

nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kFormatVersion;
  j["kind"] = kind_name(m.kind);
  j["hyperparameters"] = hyper_json(m.kind);
  j["seed"] = m.seed;
  j["standardization"] = {{"mean", m.standardizer.mean},
                          {"stddev", m.standardizer.stddev},
                          {"constant", m.standardizer.constant}};
  j["params"] = std::visit(
      Overloaded{[](const LinearParams& p) { return nlohmann::json{{"intercept", p.intercept}, {"weights", p.weights}}; },
                 [](const ForestParams& f) {
                   nlohmann::json t = nlohmann::json::array();
                   for (const auto& tr : f.trees) t.push_back(tree_json(tr));
                   return nlohmann::json{{"trees", t}};
                 },
                 [](const BoostingParams& b) {
                   nlohmann::json t = nlohmann::json::array();
                   for (const auto& tr : b.trees) t.push_back(tree_json(tr));
                   return nlohmann::json{{"init", b.init}, {"learning_rate", b.learning_rate}, {"trees", t}};
                 },
                 [](const MlpParams& p) {
                   return nlohmann::json{{"sizes", p.shape.sizes},
                                         {"weights", std::vector<double>(p.weights.data(), p.weights.data() + p.weights.size())},
                                         {"y_mean", p.y_mean},
                                         {"y_std", p.y_std},
                                         {"iterations", p.iterations},
                                         {"grad_norm", p.grad_norm}};
                 }},
      m.params);
  return j;
}

TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kFormat) throw ValidationError("not a model file");
    if (j.at("version").get<int>() != kFormatVersion)
      throw ValidationError("unsupported model file version " + j.at("version").dump());
    TrainedModel m;
    const auto name = j.at("kind").get<std::string>();
    m.kind = kind_from(name, j.at("hyperparameters"));
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("standardization");
    m.standardizer.mean = s.at("mean").get<Features>();
    m.standardizer.stddev = s.at("stddev").get<Features>();
    m.standardizer.constant = s.at("constant").get<std::array<bool, kFeatures>>();
    const auto& p = j.at("params");
    switch (m.kind.index()) {
      case 0:
      case 1:
        m.params = LinearParams{p.at("intercept").get<double>(), p.at("weights").get<Features>()};
        break;
      case 2:
      case 3: {
        ForestParams f;
        for (const auto& t : p.at("trees")) f.trees.push_back(tree_from(t));
        if (f.trees.empty()) throw ValidationError("model file: forest without trees");
        m.params = std::move(f);
        break;
      }
      case 4: {
        BoostingParams b;
        b.init = p.at("init").get<double>();
        b.learning_rate = p.at("learning_rate").get<double>();
        for (const auto& t : p.at("trees")) b.trees.push_back(tree_from(t));
        m.params = std::move(b);
        break;
      }
      default: {
        MlpParams mp;
        mp.shape.sizes = p.at("sizes").get<std::vector<int>>();
        const auto w = p.at("weights").get<std::vector<double>>();
        if (w.size() != mp.shape.parameter_count()) throw ValidationError("model file: MLP weight count mismatch");
        mp.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        mp.y_mean = p.at("y_mean").get<double>();
        mp.y_std = p.at("y_std").get<double>();
        mp.iterations = p.value("iterations", 0);
        mp.grad_norm = p.value("grad_norm", 0.0);
        m.params = std::move(mp);
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model " + path.string());
  out << to_json(m).dump() << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace riot::ml
