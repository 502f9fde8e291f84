#include "riot/ml/mlp.hpp"

#include <cmath>
#include <deque>
#include <random>

#include "riot/error.hpp"

namespace riot::ml {

std::size_t MlpShape::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) n += static_cast<std::size_t>(sizes[l]) * (sizes[l - 1] + 1);
  return n;
}

Eigen::VectorXd mlp_init(const MlpShape& s, std::uint64_t seed) {
  if (s.sizes.size() < 2 || s.sizes.back() != 1) throw ValidationError("MLP needs an input layer and a scalar output");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.parameter_count()));
  std::mt19937_64 rng(seed);
  Eigen::Index off = 0;
  for (std::size_t l = 1; l < s.sizes.size(); ++l) {
    const int in = s.sizes[l - 1], out = s.sizes[l];
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / in), std::sqrt(6.0 / in));
    for (int k = 0; k < in * out; ++k) w[off + k] = u(rng);
    off += static_cast<Eigen::Index>(in) * out + out;
  }
  return w;
}

namespace {

struct Layer {
  Eigen::Map<const Eigen::MatrixXd> w;
  Eigen::Map<const Eigen::VectorXd> b;
};

std::vector<Layer> layers_of(const MlpShape& s, const Eigen::VectorXd& w) {
  if (static_cast<std::size_t>(w.size()) != s.parameter_count()) throw ValidationError("MLP parameter size mismatch");
  std::vector<Layer> out;
  Eigen::Index off = 0;
  for (std::size_t l = 1; l < s.sizes.size(); ++l) {
    const int in = s.sizes[l - 1], o = s.sizes[l];
    out.push_back({Eigen::Map<const Eigen::MatrixXd>(w.data() + off, o, in),
                   Eigen::Map<const Eigen::VectorXd>(w.data() + off + static_cast<Eigen::Index>(o) * in, o)});
    off += static_cast<Eigen::Index>(o) * in + o;
  }
  return out;
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpShape& s, const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
  const auto layers = layers_of(s, w);
  Eigen::MatrixXd a = x.transpose();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].w * a;
    z.colwise() += layers[l].b;
    a = l + 1 < layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a.row(0).transpose();
}

double mlp_loss_grad(const MlpShape& s, const Eigen::VectorXd& w, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     Eigen::VectorXd* grad) {
  const auto layers = layers_of(s, w);
  const double n = static_cast<double>(x.rows());
  std::vector<Eigen::MatrixXd> acts{x.transpose()};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].w * acts.back();
    z.colwise() += layers[l].b;
    acts.push_back(l + 1 < layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }
  const Eigen::RowVectorXd err = acts.back().row(0) - y.transpose();
  const double loss = 0.5 * err.squaredNorm() / n;
  if (grad == nullptr) return loss;

  grad->resize(w.size());
  Eigen::MatrixXd delta = err / n;
  Eigen::Index end = w.size();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& a_prev = acts[l];
    const Eigen::Index o = layers[l].w.rows(), in = layers[l].w.cols();
    const Eigen::Index off = end - (o * in + o);
    Eigen::Map<Eigen::MatrixXd>(grad->data() + off, o, in) = delta * a_prev.transpose();
    grad->segment(off + o * in, o) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers[l].w.transpose() * delta;
      delta = back.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
    }
    end = off;
  }
  return loss;
}

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x, const LbfgsOptions& opt) {
  Eigen::VectorXd g;
  double fx = f(x, &g);
  std::deque<Eigen::VectorXd> ss, ys;
  std::deque<double> rhos;
  LbfgsResult r;
  bool just_reset = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (g.norm() < opt.grad_tol) {
      r.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(ss.size());
    for (std::size_t i = ss.size(); i-- > 0;) {
      alpha[i] = rhos[i] * ss[i].dot(q);
      q -= alpha[i] * ys[i];
    }
    const double gamma = ss.empty() ? 1.0 / std::max(1.0, g.norm()) : ss.back().dot(ys.back()) / ys.back().squaredNorm();
    q *= gamma;
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const double beta = rhos[i] * ys[i].dot(q);
      q += (alpha[i] - beta) * ss[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      ss.clear();
      ys.clear();
      rhos.clear();
    }

    double step = 1.0;
    Eigen::VectorXd xn, gn;
    double fn = 0.0;
    bool ok = false;
    for (int k = 0; k < 60; ++k) {
      xn = x + step * dir;
      fn = f(xn, &gn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      if (just_reset || ss.empty()) break;
      ss.clear();
      ys.clear();
      rhos.clear();
      just_reset = true;
      continue;
    }
    just_reset = false;
    Eigen::VectorXd s = xn - x, yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      ss.push_back(std::move(s));
      ys.push_back(std::move(yv));
      rhos.push_back(1.0 / sy);
      if (static_cast<int>(ss.size()) > opt.memory) {
        ss.pop_front();
        ys.pop_front();
        rhos.pop_front();
      }
    }
    x = std::move(xn);
    g = std::move(gn);
    fx = fn;
  }
  r.x = std::move(x);
  r.f = fx;
  r.grad_norm = g.norm();
  r.iterations = it;
  if (g.norm() < opt.grad_tol) r.converged = true;
  return r;
}

}  // namespace riot::ml
