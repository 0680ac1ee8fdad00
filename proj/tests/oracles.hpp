#pragma once

// Brute-force reference computations used only by tests. Nothing here calls
// into the library's distance, quantization or ranking code.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    acc += d * d;
  }
  return static_cast<double>(acc);
}

struct TwoMeans {
  double error = std::numeric_limits<double>::infinity();
  std::vector<double> centroid_a;
  std::vector<double> centroid_b;
};

/// Tries every split of the points into two non-empty groups.
inline TwoMeans exhaustive_two_means(const std::vector<std::vector<double>>& pts) {
  const std::size_t n = pts.size();
  const std::size_t d = pts.front().size();
  TwoMeans best;
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<double> ca(d, 0.0), cb(d, 0.0);
    std::size_t na = 0, nb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = (mask >> i) & 1u ? ca : cb;
      ((mask >> i) & 1u ? na : nb)++;
      for (std::size_t k = 0; k < d; ++k) c[k] += pts[i][k];
    }
    for (auto& v : ca) v /= double(na);
    for (auto& v : cb) v /= double(nb);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = (mask >> i) & 1u ? ca : cb;
      for (std::size_t k = 0; k < d; ++k) err += (pts[i][k] - c[k]) * (pts[i][k] - c[k]);
    }
    if (err < best.error) best = {err, ca, cb};
  }
  return best;
}

/// O(N^2) selection sort: repeatedly take the smallest remaining value,
/// lowest index first.
template <typename T>
std::vector<std::uint32_t> selection_order(const std::vector<T>& values) {
  std::vector<bool> used(values.size(), false);
  std::vector<std::uint32_t> order;
  order.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::size_t pick = values.size();
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (used[j]) continue;
      if (pick == values.size() || values[j] < values[pick]) pick = j;
    }
    used[pick] = true;
    order.push_back(static_cast<std::uint32_t>(pick));
  }
  return order;
}

inline std::uint32_t bit_loop_hamming(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::uint32_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1u : 0u;
  return d;
}

/// Central differences of a scalar function of a matrix, entry by entry.
inline Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                          const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd grad(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = probe(i);
    probe(i) = saved + h;
    const double up = f(probe);
    probe(i) = saved - h;
    const double down = f(probe);
    probe(i) = saved;
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max |a - b| / max(|b|, floor), the relative error used by gradient checks.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             double floor = 1e-6) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), floor);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(rng);
  return m;
}

}  // namespace oracle
