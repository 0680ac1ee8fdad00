#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scr/distance.hpp"
#include "scr/feature_store.hpp"
#include "scr/quantizer.hpp"

namespace scr {

/// Linear embedder standing in for a backbone, plus its classification head.
struct EmbedderParams {
  Eigen::MatrixXd projection;  ///< D_in x D_out
  Eigen::MatrixXd classifier;  ///< Y x D_out
  /// Person id of each classifier row.
  std::vector<std::uint32_t> class_ids;

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(projection.rows()); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(projection.cols()); }
};

/// Projects every row through `params.projection`; labels are carried over.
FeatureSet embed(const FeatureSet& set, const EmbedderParams& params);

void save_params(const EmbedderParams& params, const std::filesystem::path& path);
EmbedderParams load_params(const std::filesystem::path& path);

/// Piecewise learning rate: linear warm-up from base/10 to base over the first
/// `warmup_epochs`, then x0.1 after `first_decay` and x0.01 after `second_decay`.
struct LrSchedule {
  double base = 3.5e-4;
  std::size_t warmup_epochs = 10;
  std::size_t first_decay = 40;
  std::size_t second_decay = 70;

  /// `epoch` is 1-based.
  double at(std::size_t epoch) const noexcept;
};

struct TrainConfig {
  std::size_t epochs = 120;
  std::size_t batch_size = 64;
  /// K in the P x K identity-balanced batches.
  std::size_t instances_per_identity = 4;
  LrSchedule lr;
  double margin = 0.3;
  double alpha = 0.01;
  /// Codebook refresh period T, in epochs.
  std::size_t refresh_period = 10;
  std::size_t num_subspaces = 4;
  std::size_t num_centroids = 256;
  /// Regularize against the 8-bit table instead of the real one.
  bool int_mode = false;
  /// 0 keeps the input dimension.
  std::size_t embedding_dim = 0;
  std::size_t kmeans_iters = 25;
  double kmeans_tol = 1e-4;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double triplet = 0.0;
  double consistency = 0.0;
  double total = 0.0;
};

struct CrossEntropyResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_embeddings;
  Eigen::MatrixXd grad_classifier;
};

/// Mean softmax negative log-likelihood of `labels` (classifier row indices)
/// under logits embeddings * classifier^T.
CrossEntropyResult cross_entropy_loss(const Eigen::MatrixXd& embeddings,
                                      std::span<const std::size_t> labels,
                                      const Eigen::MatrixXd& classifier);

struct TripletResult {
  double loss = 0.0;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_positive;
  Eigen::VectorXd grad_negative;
};

/// max(0, margin + |a - p| - |a - n|) with unsquared Euclidean norms.
/// The subgradient is zero on the inactive side of the hinge and at the corner.
TripletResult triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                           const Eigen::VectorXd& negative, double margin);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct BatchLossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_embeddings;
};

/// Mean triplet loss over the listed batch rows.
BatchLossResult batch_triplet_loss(const Eigen::MatrixXd& embeddings,
                                   std::span<const Triplet> triplets, double margin);

/// (1/n^2) sum_{i,j} sum_m (lut[m][c_i^m][c_j^m] - |e_i^m - e_j^m|^2)^2.
///
/// Table entries are constants, so the gradient flows only through the
/// pairwise embedding distances. Pass `IntLUT::descaled()` for the integer mode.
BatchLossResult consistency_loss(const Eigen::MatrixXd& embeddings, const CodeMatrix& codes,
                                 const DistanceLUT& lut);

/// The quantization side of training: codebook plus its real and 8-bit tables.
struct QuantizerState {
  Codebook codebook;
  DistanceLUT lut;
  IntLUT int_lut;

  static QuantizerState from_codebook(Codebook codebook);
};

struct Batch {
  Eigen::MatrixXd features;  ///< n x D_in
  std::vector<std::size_t> labels;
  std::vector<Triplet> triplets;
};

struct TotalLossResult {
  LossBreakdown breakdown;
  Eigen::MatrixXd grad_embeddings;
  Eigen::MatrixXd grad_projection;
  Eigen::MatrixXd grad_classifier;
};

/// ce + triplet + alpha * consistency, with the batch codes taken from the
/// current codebook and the table chosen by `config.int_mode`.
TotalLossResult total_loss(const Batch& batch, const EmbedderParams& params,
                           const QuantizerState& quantizer, const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
  double quant_error = 0.0;
};

struct RefreshLog {
  std::size_t epoch = 0;
  double error_before = 0.0;
  double error_after = 0.0;
  std::size_t iterations = 0;
};

struct TrainingLog {
  double initial_quant_error = 0.0;
  std::vector<EpochLog> epochs;
  std::vector<RefreshLog> refreshes;
  std::vector<std::string> warnings;

  /// Header `epoch,lr,ce,triplet,consistency,total,quant_error` + one row per epoch.
  void write_csv(std::ostream& out) const;
};

struct TrainingResult {
  EmbedderParams params;
  Codebook codebook;
  TrainingLog log;
};

/// Builds the codebook on the initial embeddings, then runs `epochs` epochs of
/// SGD on identity-balanced batches, re-clustering (warm-started) after every
/// epoch divisible by the refresh period.
TrainingResult run_training(const FeatureSet& features, const TrainConfig& config);

}  // namespace scr
