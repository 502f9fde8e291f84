#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "riot/error.hpp"
#include "riot/ml/model.hpp"

using namespace riot;
using namespace riot::ml;

namespace {

std::vector<DatasetRow> line(std::vector<double> x, std::vector<double> y) {
  std::vector<DatasetRow> rows;
  for (std::size_t i = 0; i < x.size(); ++i) rows.push_back({x[i], 0.0, 0.0, y[i]});
  return rows;
}

std::vector<DatasetRow> random_rows(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<DatasetRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    rows.push_back({a, b, c, 3.0 * a - 2.0 * b + 0.5 * c + std::sin(3 * a) + 0.1 * u(rng)});
  }
  return rows;
}

// Central finite-difference oracle.
Eigen::VectorXd numeric_grad(const MlpShape& s, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& y) {
  Eigen::VectorXd g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(w[i]));
    Eigen::VectorXd wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    g[i] = (mlp_loss_grad(s, wp, x, y, nullptr) - mlp_loss_grad(s, wm, x, y, nullptr)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("standardization") {
  auto s = fit_standardizer(line({-1, 1}, {0, 0}));
  CHECK(s.mean[0] == 0.0);
  CHECK(s.stddev[0] == 1.0);
  CHECK(s.apply({-1, 0, 0})[0] == -1.0);
  CHECK(s.constant[1]);
  CHECK(s.stddev[1] == 1.0);
  CHECK_FALSE(s.constant[0]);
  CHECK_THROWS_AS(fit_standardizer(line({1}, {1})), ValidationError);

  auto rows = random_rows(500, 3);
  auto st = fit_standardizer(rows);
  for (std::size_t j = 0; j < kFeatures; ++j) {
    double sum = 0.0;
    for (const auto& r : rows) sum += st.apply(features_of(r))[j];
    CHECK(std::abs(sum / rows.size()) < 1e-12);
  }
}

TEST_CASE("closed-form linear and ridge") {
  auto rows = line({-1, 1}, {-1, 1});
  auto ridge = fit(Ridge{1.0}, rows);
  const auto& rp = std::get<LinearParams>(ridge.params);
  CHECK(rp.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rp.intercept == doctest::Approx(0.0));
  auto lin = fit(Linear{}, rows);
  const auto& lp = std::get<LinearParams>(lin.params);
  CHECK(lp.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(lp.intercept) < 1e-12);
  CHECK(predict(lin, std::vector<double>{1.0, 0.0, 0.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(predict(lin, std::vector<double>{1.0, 0.0}), ValidationError);
}

TEST_CASE("ridge converges to linear as alpha vanishes") {
  auto rows = random_rows(300, 5);
  auto a = std::get<LinearParams>(fit(Linear{}, rows).params);
  auto b = std::get<LinearParams>(fit(Ridge{1e-10}, rows).params);
  for (std::size_t j = 0; j < kFeatures; ++j) CHECK(std::abs(a.weights[j] - b.weights[j]) < 1e-6);
  CHECK(std::abs(a.intercept - b.intercept) < 1e-6);
}

TEST_CASE("gradient boosting on constant targets") {
  auto rows = random_rows(50, 1);
  for (auto& r : rows) r.current_ua = 42.5;
  auto m = fit(GradientBoosting{}, rows);
  for (const auto& r : rows) CHECK(predict(m, features_of(r)) == 42.5);
  CHECK(std::get<BoostingParams>(m.params).init == 42.5);
}

TEST_CASE("depth-0 forest predicts the training mean") {
  auto rows = random_rows(64, 2);
  double mean = 0.0;
  for (const auto& r : rows) mean += r.current_ua / rows.size();
  auto m = fit(RandomForest{10, 0, false}, rows);
  CHECK(predict(m, Features{0.3, 0.1, -0.2}) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("trees respect max depth") {
  auto rows = random_rows(400, 8);
  auto m = fit(RandomForest{5, 3, true}, rows, 1);
  for (const auto& t : std::get<ForestParams>(m.params).trees) CHECK(t.depth() <= 3);
}

TEST_CASE("metrics") {
  auto perfect = compute_metrics({1, 2, 3}, {1, 2, 3});
  CHECK(*perfect.r2 == 1.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);
  auto flat = compute_metrics({1, 2, 3}, {2, 2, 2});
  CHECK(*flat.r2 == doctest::Approx(0.0));
  CHECK(flat.mae == doctest::Approx(2.0 / 3.0));
  CHECK(flat.rmse == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(flat.rmse == doctest::Approx(0.8165).epsilon(1e-4));
  auto degenerate = compute_metrics({5, 5}, {4, 6});
  CHECK_FALSE(degenerate.r2.has_value());
  CHECK(degenerate.mae == 1.0);
  CHECK_THROWS_AS(degenerate.r2_value(), DomainError);
  std::mt19937_64 rng(0);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> y(20), h(20);
    for (int i = 0; i < 20; ++i) {
      y[i] = g(rng);
      h[i] = g(rng);
    }
    auto m = compute_metrics(y, h);
    CHECK(m.rmse >= m.mae);
    CHECK(*m.r2 <= 1.0);
  }
}

TEST_CASE("train/test split") {
  auto rows = random_rows(101, 4);
  auto s = train_test_split(rows, 0.2, 7);
  CHECK(s.test.size() == 20);
  CHECK(s.train.size() == 81);
  auto all = canonical_order(s.train);
  for (const auto& r : s.test) CHECK(std::find(all.begin(), all.end(), r) == all.end());
  auto rev = rows;
  std::reverse(rev.begin(), rev.end());
  auto s2 = train_test_split(rev, 0.2, 7);
  CHECK(s2.test == s.test);
  CHECK_THROWS_AS(train_test_split(rows, 1.0, 1), ValidationError);
}

TEST_CASE("non-finite rows are rejected with their index") {
  auto rows = random_rows(10, 1);
  rows[6].ble_payload_bytes = NAN;
  try {
    fit(Linear{}, rows);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("row 6") != std::string::npos);
  }
}

TEST_CASE("mlp gradient matches finite differences") {
  MlpShape shape{{3, 50, 25, 1}};
  auto rows = random_rows(40, 9);
  Eigen::MatrixXd x(40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = rows[i].state_duration_s;
    x(i, 1) = rows[i].vlc_payload_bytes;
    x(i, 2) = rows[i].ble_payload_bytes;
    y[i] = rows[i].current_ua;
  }
  for (std::uint64_t p = 0; p < 10; ++p) {
    auto w = mlp_init(shape, 100 + p);
    std::mt19937_64 rng(p);
    std::normal_distribution<double> g(0.0, 0.1);
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] += g(rng);  // nonzero biases too
    Eigen::VectorXd ga;
    mlp_loss_grad(shape, w, x, y, &ga);
    const auto gn = numeric_grad(shape, w, x, y);
    CHECK((ga - gn).norm() / std::max(ga.norm(), gn.norm()) < 1e-4);
  }
}

TEST_CASE("mlp learns a parabola") {
  std::vector<DatasetRow> train, test;
  for (int i = 0; i <= 80; ++i) {
    const double x = -2.0 + 4.0 * i / 80.0;
    train.push_back({x, 0, 0, x * x});
  }
  for (int i = 0; i < 40; ++i) {
    const double x = -1.95 + 3.9 * i / 39.0;
    test.push_back({x, 0, 0, x * x});
  }
  auto m = fit(Mlp{}, train, 3);
  CHECK(evaluate(m, test).metrics.r2_value() >= 0.99);
}

TEST_CASE("lbfgs minimizes a quadratic") {
  Eigen::VectorXd c(4);
  c << 1, -2, 3, 0.5;
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    Eigen::VectorXd d = x - c;
    Eigen::VectorXd scale(4);
    scale << 1, 10, 100, 1000;
    if (g) *g = scale.cwiseProduct(d);
    return 0.5 * d.dot(scale.cwiseProduct(d));
  };
  auto r = lbfgs_minimize(f, Eigen::VectorXd::Zero(4), {});
  CHECK(r.converged);
  CHECK((r.x - c).norm() < 1e-6);
}

TEST_CASE("ensembles are deterministic and row-order invariant") {
  auto rows = random_rows(300, 6);
  auto rev = rows;
  std::reverse(rev.begin(), rev.end());
  for (const ModelKind& k : std::vector<ModelKind>{Linear{}, Ridge{}, RandomForest{20}, ExtraTrees{20},
                                                   GradientBoosting{30}}) {
    CAPTURE(kind_name(k));
    auto a = fit(k, rows, 5);
    auto b = fit(k, rows, 5);
    auto c = fit(k, rev, 5);
    CHECK(to_json(a) == to_json(b));
    CHECK(to_json(a) == to_json(c));
  }
}

TEST_CASE("extra trees without threshold randomization equal random forest") {
  auto rows = random_rows(200, 12);
  ExtraTrees et{15, 5, true, false};
  auto a = fit(et, rows, 9);
  auto b = fit(RandomForest{15, 5, true}, rows, 9);
  CHECK(to_json(a)["params"] == to_json(b)["params"]);
  auto c = fit(ExtraTrees{15, 5, true, true}, rows, 9);
  CHECK(to_json(c)["params"] != to_json(b)["params"]);
}

TEST_CASE("model save/load round trip is exact") {
  auto rows = random_rows(120, 13);
  const auto dir = std::filesystem::temp_directory_path();
  for (const ModelKind& k : std::vector<ModelKind>{Linear{}, Ridge{0.5}, RandomForest{5}, ExtraTrees{5},
                                                   GradientBoosting{10}, Mlp{{8, 4}, 50}}) {
    CAPTURE(kind_name(k));
    auto m = fit(k, rows, 2);
    const auto path = dir / ("riot_model_" + kind_name(k) + ".json");
    save_model(m, path);
    auto back = load_model(path);
    CHECK(to_json(back) == to_json(m));
    CHECK(predict(back, rows) == predict(m, rows));
    std::filesystem::remove(path);
  }
  CHECK(parse_kind("gb").index() == 4);
  CHECK_THROWS_AS(parse_kind("svm"), ValidationError);
  CHECK_THROWS_AS(model_from_json(nlohmann::json{{"format", "x"}}), ValidationError);
}

TEST_CASE("hyperparameter defaults") {
  CHECK(Ridge{}.alpha == 1.0);
  CHECK(RandomForest{}.n_trees == 100);
  CHECK(RandomForest{}.max_depth == 5);
  CHECK(RandomForest{}.bootstrap);
  CHECK(ExtraTrees{}.n_trees == 100);
  CHECK(ExtraTrees{}.max_depth == 5);
  CHECK(GradientBoosting{}.n_stages == 100);
  CHECK(GradientBoosting{}.learning_rate == 0.1);
  CHECK(GradientBoosting{}.max_depth == 3);
  CHECK(Mlp{}.hidden == std::vector<int>{50, 25});
  CHECK(Mlp{}.max_iter == 2000);
  CHECK(Mlp{}.memory == 10);
}
