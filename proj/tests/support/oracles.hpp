#pragma once

// Independent reference implementations and seeded generators used by the
// unit tests and the acceptance binary. Nothing here calls into the library's
// metric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  std::mt19937_64& engine() { return gen_; }

  // Random point on the probability simplex (normalised exponentials).
  std::vector<double> simplex(std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& x : p) {
      x = -std::log(1.0 - uniform());
      sum += x;
    }
    for (auto& x : p) x /= sum;
    return p;
  }

 private:
  std::mt19937_64 gen_;
};

// Every way of writing `total` as an ordered sum of `parts` non-negative ints.
inline std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(parts), 0);
  std::function<void(int, int)> rec = [&](int idx, int left) {
    if (idx == parts - 1) {
      cur[static_cast<std::size_t>(idx)] = left;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      cur[static_cast<std::size_t>(idx)] = v;
      rec(idx + 1, left - v);
    }
  };
  rec(0, total);
  return out;
}

// Minimum of sum |i - j| * T[i][j] over every non-negative integer transport
// plan T with row sums `a` and column sums `b`, found by exhaustive search.
inline int brute_force_transport(const std::vector<int>& a, const std::vector<int>& b) {
  const int k = static_cast<int>(a.size());
  int best = std::numeric_limits<int>::max();
  std::vector<int> col_left = b;
  std::function<void(int, int, int, int)> rec = [&](int row, int col, int row_left, int cost) {
    if (cost >= best) return;
    if (row == k) {
      best = cost;
      return;
    }
    if (col == k) {
      if (row_left == 0) rec(row + 1, 0, row + 1 < k ? a[static_cast<std::size_t>(row + 1)] : 0, cost);
      return;
    }
    const int cap = std::min(row_left, col_left[static_cast<std::size_t>(col)]);
    for (int t = 0; t <= cap; ++t) {
      col_left[static_cast<std::size_t>(col)] -= t;
      rec(row, col + 1, row_left - t, cost + t * std::abs(row - col));
      col_left[static_cast<std::size_t>(col)] += t;
    }
  };
  rec(0, 0, a.empty() ? 0 : a[0], 0);
  return best;
}

// Closed form for a 2x2 table [[a, b], [c, d]]: |ad - bc| / sqrt of the
// product of the margins (phi coefficient magnitude).
inline double cramers_v_2x2(double a, double b, double c, double d) {
  return std::abs(a * d - b * c) / std::sqrt((a + b) * (c + d) * (a + c) * (b + d));
}

inline Eigen::MatrixXd euclidean_distances(const Eigen::MatrixXd& points) {
  const auto n = points.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (points.row(i) - points.row(j)).norm();
  }
  return d;
}

inline Eigen::MatrixX2d planted_configuration(Rng& rng, Eigen::Index n) {
  Eigen::MatrixX2d x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
  }
  return x;
}

// Random rotation, optionally composed with a reflection.
inline Eigen::Matrix2d random_orthogonal(Rng& rng) {
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  Eigen::Matrix2d r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  if (rng.uniform() < 0.5) r.col(0) = -r.col(0);
  return r;
}

// Median of a list (mean of the middle two for even length).
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct StumpFeature {
  bool ordinal = false;
  std::size_t levels = 0;
  std::vector<std::size_t> codes;
};

// Normalised per-feature importance after a single boosting round of
// one-vs-rest logistic stumps, with every candidate split scored from scratch.
// Ties go to the earliest feature, then the earliest threshold.
inline std::vector<double> first_round_importance(const std::vector<StumpFeature>& features,
                                                  const std::vector<std::string>& labels, double l2) {
  const std::set<std::string> classes(labels.begin(), labels.end());
  const std::size_t n = labels.size();
  std::vector<double> importance(features.size(), 0.0);
  for (const auto& cls : classes) {
    double positives = 0.0;
    for (const auto& l : labels) positives += l == cls;
    const double p = positives / static_cast<double>(n);
    std::vector<double> g(n), h(n, p * (1.0 - p));
    for (std::size_t i = 0; i < n; ++i) g[i] = p - (labels[i] == cls ? 1.0 : 0.0);

    auto score = [&](const std::function<bool(std::size_t)>& goes_left) -> double {
      double gl = 0, hl = 0, gr = 0, hr = 0;
      std::size_t nl = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (goes_left(i)) {
          gl += g[i];
          hl += h[i];
          ++nl;
        } else {
          gr += g[i];
          hr += h[i];
        }
      }
      if (nl == 0 || nl == n) return -1.0;
      const double gt = gl + gr, ht = hl + hr;
      return 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - gt * gt / (ht + l2));
    };

    double best = 1e-15;
    std::size_t best_feature = features.size();
    for (std::size_t f = 0; f < features.size(); ++f) {
      const auto& feat = features[f];
      for (std::size_t t = 0; t < feat.levels; ++t) {
        const double gain = feat.ordinal ? score([&](std::size_t i) { return feat.codes[i] <= t; })
                                         : score([&](std::size_t i) { return feat.codes[i] == t; });
        if (gain > best) {
          best = gain;
          best_feature = f;
        }
      }
    }
    if (best_feature < features.size()) importance[best_feature] += best;
  }
  double total = 0.0;
  for (double v : importance) total += v;
  if (total > 0.0) {
    for (double& v : importance) v /= total;
  }
  return importance;
}

}  // namespace oracle
