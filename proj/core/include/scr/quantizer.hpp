#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scr/feature_store.hpp"

namespace scr {

/// M sub-codebooks of C centroids each, every centroid of length sub_dim.
/// Centroid (m, c) lives at offset ((m * C) + c) * sub_dim.
class Codebook {
 public:
  Codebook(std::size_t num_subspaces, std::size_t num_centroids, std::size_t sub_dim,
           std::vector<float> centroids);

  std::size_t num_subspaces() const noexcept { return m_; }
  std::size_t num_centroids() const noexcept { return c_; }
  std::size_t sub_dim() const noexcept { return sub_dim_; }
  std::size_t dim() const noexcept { return m_ * sub_dim_; }

  std::span<const float> centroid(std::size_t m, std::size_t c) const noexcept {
    return {centroids_.data() + (m * c_ + c) * sub_dim_, sub_dim_};
  }
  std::span<const float> values() const noexcept { return centroids_; }

  /// M * ceil(log2 C): 32 bits for M=4, C=256.
  std::size_t code_bits() const noexcept;

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t m_;
  std::size_t c_;
  std::size_t sub_dim_;
  std::vector<float> centroids_;
};

/// N x M centroid indices, row-major. Every index is < num_centroids.
class CodeMatrix {
 public:
  CodeMatrix(std::size_t rows, std::size_t num_subspaces, std::size_t num_centroids,
             std::vector<std::uint16_t> codes);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t num_subspaces() const noexcept { return m_; }
  std::size_t num_centroids() const noexcept { return c_; }

  std::span<const std::uint16_t> row(std::size_t i) const noexcept {
    return {codes_.data() + i * m_, m_};
  }
  std::uint16_t at(std::size_t i, std::size_t m) const noexcept { return codes_[i * m_ + m]; }
  std::span<const std::uint16_t> values() const noexcept { return codes_; }

  CodeMatrix subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t m_;
  std::size_t c_;
  std::vector<std::uint16_t> codes_;
};

/// Row-major N x cols block of one sub-space.
struct SubMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const noexcept {
    return {values.data() + i * cols, cols};
  }
};

struct KMeansOptions {
  std::size_t num_subspaces = 4;
  std::size_t num_centroids = 256;
  std::size_t max_iters = 25;
  /// Stop once (previous - current) <= tol * previous.
  double tol = 1e-4;
  std::uint64_t rng_seed = 0;
};

struct KMeansReport {
  /// Largest Lloyd iteration count over the sub-spaces.
  std::size_t iterations_run = 0;
  double total_quantization_error = 0.0;
  std::vector<double> per_subspace_error;
  /// Total error of the initial centroids followed by one entry per iteration.
  std::vector<double> error_trace;
  std::size_t num_centroids = 0;
  std::vector<std::string> warnings;
};

/// Sub-matrix m holds columns [m*D/M, (m+1)*D/M). Throws ConfigError when
/// M is zero or does not divide D.
std::vector<SubMatrix> split_subspaces(const FeatureSet& set, std::size_t num_subspaces);

/// Lloyd's algorithm run independently in every sub-space.
///
/// Cold starts use k-means++ seeding; `warm_start` (same M, C, sub_dim)
/// replaces seeding with its centroids. When some sub-space has fewer distinct
/// sub-vectors than C, C is clamped to that count and a warning is recorded.
/// Empty clusters are re-seeded with the point farthest from its centroid.
std::pair<Codebook, KMeansReport> train_codebook(const FeatureSet& set,
                                                 const KMeansOptions& options,
                                                 const Codebook* warm_start = nullptr);

/// Nearest centroid per sub-space (squared Euclidean, lowest index on ties).
CodeMatrix encode(const FeatureSet& set, const Codebook& codebook);

/// Row-major N x D concatenation of the centroids each code selects.
std::vector<float> reconstruct(const CodeMatrix& codes, const Codebook& codebook);

/// Sum over rows and sub-spaces of squared distances to the coded centroids.
double quantization_error(const FeatureSet& set, const CodeMatrix& codes,
                          const Codebook& codebook);

void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

void save_codes(const CodeMatrix& codes, const std::filesystem::path& path);
CodeMatrix load_codes(const std::filesystem::path& path);

namespace detail {
/// Squared Euclidean distance with double accumulation.
inline double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc;
}
}  // namespace detail

}  // namespace scr
