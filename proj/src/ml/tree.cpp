#include "riot/ml/tree.hpp"

#include <algorithm>
#include <functional>

namespace riot::ml {

double RegressionTree::predict(const Features& z) const {
  int i = 0;
  while (nodes[i].feature >= 0) i = z[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

int RegressionTree::depth() const {
  std::function<int(int)> d = [&](int i) -> int {
    if (nodes[i].feature < 0) return 0;
    return 1 + std::max(d(nodes[i].left), d(nodes[i].right));
  };
  return nodes.empty() ? 0 : d(0);
}

namespace {

struct Candidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class Builder {
 public:
  Builder(const std::vector<Features>& z, const std::vector<double>& y, const TreeParams& p, std::mt19937_64& rng)
      : z_(z), y_(y), p_(p), rng_(rng) {}

  int grow(std::vector<std::size_t> idx, int depth) {
    const int me = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    double sum = 0.0, sq = 0.0;
    for (auto i : idx) {
      sum += y_[i];
      sq += y_[i] * y_[i];
    }
    const double n = static_cast<double>(idx.size());
    tree.nodes[me].value = sum / n;
    const double sse = sq - sum * sum / n;
    if (depth >= p_.max_depth || idx.size() < p_.min_samples_split || !(sse > 1e-12 * std::max(1.0, sq))) return me;

    Candidate best;
    for (int f = 0; f < static_cast<int>(kFeatures); ++f) {
      const Candidate c = p_.random_thresholds ? random_split(idx, f, sum, sse) : best_split(idx, f, sum, sse);
      if (c.feature >= 0 && c.gain > best.gain) best = c;
    }
    if (best.feature < 0) return me;

    std::vector<std::size_t> l, r;
    for (auto i : idx) (z_[i][best.feature] <= best.threshold ? l : r).push_back(i);
    if (l.empty() || r.empty()) return me;
    idx.clear();
    idx.shrink_to_fit();
    tree.nodes[me].feature = best.feature;
    tree.nodes[me].threshold = best.threshold;
    const int li = grow(std::move(l), depth + 1);
    const int ri = grow(std::move(r), depth + 1);
    tree.nodes[me].left = li;
    tree.nodes[me].right = ri;
    return me;
  }

  RegressionTree tree;

 private:
  // Exhaustive midpoint thresholds between sorted unique values.
  Candidate best_split(const std::vector<std::size_t>& idx, int f, double total, double sse) const {
    std::vector<std::pair<double, double>> v;
    v.reserve(idx.size());
    for (auto i : idx) v.emplace_back(z_[i][f], y_[i]);
    std::sort(v.begin(), v.end());
    Candidate c;
    const double n = static_cast<double>(v.size());
    double ls = 0.0, lq = 0.0, tq = 0.0;
    for (const auto& [x, t] : v) tq += t * t;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      ls += v[k].second;
      lq += v[k].second * v[k].second;
      if (v[k].first == v[k + 1].first) continue;
      const double nl = static_cast<double>(k + 1), nr = n - nl;
      const double rs = total - ls, rq = tq - lq;
      const double child = (lq - ls * ls / nl) + (rq - rs * rs / nr);
      const double gain = sse - child;
      if (gain > c.gain) {
        c = {f, 0.5 * (v[k].first + v[k + 1].first), gain};
      }
    }
    return c;
  }

  Candidate random_split(const std::vector<std::size_t>& idx, int f, double total, double sse) {
    double lo = z_[idx[0]][f], hi = lo;
    for (auto i : idx) {
      lo = std::min(lo, z_[i][f]);
      hi = std::max(hi, z_[i][f]);
    }
    // Draw even for constant features so the random stream does not depend on the data.
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (!(hi > lo)) return {};
    double thr = lo + u * (hi - lo);
    if (thr >= hi) thr = lo;
    double ls = 0.0, lq = 0.0, tq = 0.0, nl = 0.0;
    for (auto i : idx) {
      tq += y_[i] * y_[i];
      if (z_[i][f] <= thr) {
        ls += y_[i];
        lq += y_[i] * y_[i];
        nl += 1.0;
      }
    }
    const double nr = static_cast<double>(idx.size()) - nl;
    if (nl == 0.0 || nr == 0.0) return {};
    const double rs = total - ls, rq = tq - lq;
    const double gain = sse - ((lq - ls * ls / nl) + (rq - rs * rs / nr));
    return {f, thr, gain};
  }

  const std::vector<Features>& z_;
  const std::vector<double>& y_;
  TreeParams p_;
  std::mt19937_64& rng_;
};

}  // namespace

RegressionTree build_tree(const std::vector<Features>& z, const std::vector<double>& y,
                          const std::vector<std::size_t>& idx, const TreeParams& p, std::mt19937_64& rng) {
  Builder b(z, y, p, rng);
  b.grow(idx, 0);
  return std::move(b.tree);
}

}  // namespace riot::ml
