#include "scr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "scr/binary_io.hpp"
#include "scr/error.hpp"

namespace scr {
namespace {

constexpr std::string_view kParamsMagic = "SCRE";
constexpr std::uint32_t kVersion = 1;

Eigen::MatrixXd to_matrix(const FeatureSet& set) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = set.row(i);
    for (std::size_t j = 0; j < set.dim(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
  }
  return out;
}

FeatureSet to_features(const Eigen::MatrixXd& m, const FeatureSet& labels_from) {
  std::vector<float> values(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) values[k++] = static_cast<float>(m(i, j));
  }
  return FeatureSet(static_cast<std::size_t>(m.cols()), std::move(values),
                    {labels_from.person_ids().begin(), labels_from.person_ids().end()},
                    {labels_from.camera_ids().begin(), labels_from.camera_ids().end()});
}

FeatureSet batch_features(const Eigen::MatrixXd& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  std::vector<float> values(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) values[k++] = static_cast<float>(m(i, j));
  }
  return FeatureSet(static_cast<std::size_t>(m.cols()), std::move(values),
                    std::vector<std::uint32_t>(n, 0), std::vector<std::uint16_t>(n, 0));
}

/// Samples P identities x K instances and one random positive and negative
/// per anchor.
class BatchSampler {
 public:
  BatchSampler(const FeatureSet& features, std::span<const std::size_t> labels,
               std::size_t num_classes, const TrainConfig& config, std::mt19937_64& rng)
      : features_(to_matrix(features)), labels_(labels.begin(), labels.end()), rng_(rng) {
    rows_by_class_.resize(num_classes);
    for (std::size_t i = 0; i < labels_.size(); ++i) rows_by_class_[labels_[i]].push_back(i);
    k_ = config.instances_per_identity;
    p_ = std::min(config.batch_size / k_, num_classes);
    classes_.resize(num_classes);
    std::iota(classes_.begin(), classes_.end(), std::size_t{0});
  }

  std::size_t batch_rows() const noexcept { return p_ * k_; }

  Batch next() {
    std::vector<std::size_t> rows;
    rows.reserve(p_ * k_);
    Batch batch;
    // Partial Fisher-Yates: the first P entries become the chosen classes.
    for (std::size_t i = 0; i < p_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, classes_.size() - 1);
      std::swap(classes_[i], classes_[pick(rng_)]);
      auto pool = rows_by_class_[classes_[i]];
      std::shuffle(pool.begin(), pool.end(), rng_);
      std::uniform_int_distribution<std::size_t> any(0, pool.size() - 1);
      for (std::size_t k = 0; k < k_; ++k) {
        rows.push_back(k < pool.size() ? pool[k] : pool[any(rng_)]);
        batch.labels.push_back(classes_[i]);
      }
    }
    batch.features.resize(static_cast<Eigen::Index>(rows.size()), features_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      batch.features.row(static_cast<Eigen::Index>(r)) =
          features_.row(static_cast<Eigen::Index>(rows[r]));
    }

    const std::size_t n = rows.size();
    std::vector<std::size_t> same, other;
    for (std::size_t a = 0; a < n; ++a) {
      same.clear();
      other.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == a) continue;
        (batch.labels[j] == batch.labels[a] ? same : other).push_back(j);
      }
      std::uniform_int_distribution<std::size_t> ps(0, same.size() - 1);
      std::uniform_int_distribution<std::size_t> ns(0, other.size() - 1);
      batch.triplets.push_back({a, same[ps(rng_)], other[ns(rng_)]});
    }
    return batch;
  }

 private:
  Eigen::MatrixXd features_;
  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> rows_by_class_;
  std::vector<std::size_t> classes_;
  std::size_t p_ = 0;
  std::size_t k_ = 0;
  std::mt19937_64& rng_;
};

}  // namespace

FeatureSet embed(const FeatureSet& set, const EmbedderParams& params) {
  if (set.dim() != params.input_dim()) {
    throw ConfigError("feature dimension " + std::to_string(set.dim()) +
                      " != embedder input dimension " + std::to_string(params.input_dim()));
  }
  return to_features(to_matrix(set) * params.projection, set);
}

void save_params(const EmbedderParams& params, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kParamsMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.projection.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.projection.cols()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.classifier.rows()));
  w.put_all(std::span<const std::uint32_t>(params.class_ids));
  for (Eigen::Index i = 0; i < params.projection.rows(); ++i)
    for (Eigen::Index j = 0; j < params.projection.cols(); ++j) w.put<double>(params.projection(i, j));
  for (Eigen::Index i = 0; i < params.classifier.rows(); ++i)
    for (Eigen::Index j = 0; j < params.classifier.cols(); ++j) w.put<double>(params.classifier(i, j));
  w.save(path);
}

EmbedderParams load_params(const std::filesystem::path& path) {
  auto r = io::ByteReader::open(path);
  r.expect_magic(kParamsMagic);
  r.expect_version(kVersion);
  const auto shape_at = r.offset();
  const std::uint64_t din = r.get<std::uint32_t>();
  const std::uint64_t dout = r.get<std::uint32_t>();
  const std::uint64_t classes = r.get<std::uint32_t>();
  if (din == 0 || dout == 0) throw FormatError(shape_at, "embedder dimensions must be positive");
  EmbedderParams p;
  p.class_ids = r.get_all<std::uint32_t>(classes);
  const auto payload_at = r.offset();
  auto proj = r.get_all<double>(din * dout);
  auto cls = r.get_all<double>(classes * dout);
  r.expect_end();
  p.projection.resize(static_cast<Eigen::Index>(din), static_cast<Eigen::Index>(dout));
  p.classifier.resize(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dout));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < p.projection.rows(); ++i)
    for (Eigen::Index j = 0; j < p.projection.cols(); ++j) p.projection(i, j) = proj[k++];
  k = 0;
  for (Eigen::Index i = 0; i < p.classifier.rows(); ++i)
    for (Eigen::Index j = 0; j < p.classifier.cols(); ++j) p.classifier(i, j) = cls[k++];
  if (!p.projection.allFinite() || !p.classifier.allFinite()) {
    throw FormatError(payload_at, "non-finite embedder parameter");
  }
  return p;
}

double LrSchedule::at(std::size_t epoch) const noexcept {
  double lr = base;
  if (warmup_epochs > 1 && epoch <= warmup_epochs) {
    const double t = double(epoch == 0 ? 0 : epoch - 1) / double(warmup_epochs - 1);
    lr = base * (0.1 + 0.9 * t);
  }
  if (epoch > second_decay) return lr * 0.01;
  if (epoch > first_decay) return lr * 0.1;
  return lr;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs", "must be at least 1");
  if (instances_per_identity < 2) {
    throw ValidationError("instances_per_identity", "must be at least 2 for triplet sampling");
  }
  if (batch_size < 2 * instances_per_identity) {
    throw ValidationError("batch_size", "must hold at least two identities of K instances");
  }
  if (!(lr.base > 0.0) || !std::isfinite(lr.base)) {
    throw ValidationError("lr", "must be a positive finite number");
  }
  if (!(margin > 0.0)) throw ValidationError("margin", "must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha", "must be >= 0");
  if (refresh_period == 0) throw ValidationError("refresh_period", "T must be at least 1");
  if (num_subspaces == 0) throw ValidationError("num_subspaces", "must be positive");
  if (num_centroids == 0 || num_centroids > 65536) {
    throw ValidationError("num_centroids", "must lie in [1, 65536]");
  }
  if (kmeans_iters == 0) throw ValidationError("kmeans_iters", "must be at least 1");
}

CrossEntropyResult cross_entropy_loss(const Eigen::MatrixXd& embeddings,
                                      std::span<const std::size_t> labels,
                                      const Eigen::MatrixXd& classifier) {
  const auto n = embeddings.rows();
  if (n == 0) throw ArgumentError("cross-entropy needs a non-empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ArgumentError("batch has " + std::to_string(n) + " rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (embeddings.cols() != classifier.cols()) {
    throw ConfigError("embedding and classifier widths differ");
  }
  for (auto y : labels) {
    if (y >= static_cast<std::size_t>(classifier.rows())) {
      throw ArgumentError("label " + std::to_string(y) + " >= number of classes " +
                          std::to_string(classifier.rows()));
    }
  }

  const Eigen::MatrixXd logits = embeddings * classifier.transpose();
  Eigen::MatrixXd dlogits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    loss += std::log(z) - (logits(i, y) - top);
    dlogits.row(i) = e / z;
    dlogits(i, y) -= 1.0;
  }
  dlogits /= double(n);

  CrossEntropyResult out;
  out.loss = loss / double(n);
  out.grad_embeddings = dlogits * classifier;
  out.grad_classifier = dlogits.transpose() * embeddings;
  return out;
}

TripletResult triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                           const Eigen::VectorXd& negative, double margin) {
  if (anchor.size() == 0) throw ArgumentError("triplet vectors must be non-empty");
  if (positive.size() != anchor.size() || negative.size() != anchor.size()) {
    throw ArgumentError("triplet vectors differ in dimension");
  }
  if (!(margin > 0.0)) throw ArgumentError("margin must be positive");

  const Eigen::VectorXd to_pos = anchor - positive;
  const Eigen::VectorXd to_neg = anchor - negative;
  const double d_pos = to_pos.norm();
  const double d_neg = to_neg.norm();
  const double hinge = margin + d_pos - d_neg;

  TripletResult out;
  out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
  out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
  out.grad_negative = Eigen::VectorXd::Zero(anchor.size());
  if (hinge <= 0.0) return out;

  out.loss = hinge;
  if (d_pos > 0.0) {
    out.grad_anchor += to_pos / d_pos;
    out.grad_positive -= to_pos / d_pos;
  }
  if (d_neg > 0.0) {
    out.grad_anchor -= to_neg / d_neg;
    out.grad_negative += to_neg / d_neg;
  }
  return out;
}

BatchLossResult batch_triplet_loss(const Eigen::MatrixXd& embeddings,
                                   std::span<const Triplet> triplets, double margin) {
  BatchLossResult out;
  out.grad_embeddings = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  if (triplets.empty()) return out;
  const auto n = static_cast<std::size_t>(embeddings.rows());
  const double w = 1.0 / double(triplets.size());
  for (const auto& t : triplets) {
    if (t.anchor >= n || t.positive >= n || t.negative >= n) {
      throw ArgumentError("triplet refers to a row outside the batch");
    }
    const auto a = static_cast<Eigen::Index>(t.anchor);
    const auto p = static_cast<Eigen::Index>(t.positive);
    const auto g = static_cast<Eigen::Index>(t.negative);
    const auto r = triplet_loss(embeddings.row(a).transpose(), embeddings.row(p).transpose(),
                                embeddings.row(g).transpose(), margin);
    out.loss += w * r.loss;
    out.grad_embeddings.row(a) += w * r.grad_anchor.transpose();
    out.grad_embeddings.row(p) += w * r.grad_positive.transpose();
    out.grad_embeddings.row(g) += w * r.grad_negative.transpose();
  }
  return out;
}

BatchLossResult consistency_loss(const Eigen::MatrixXd& embeddings, const CodeMatrix& codes,
                                 const DistanceLUT& lut) {
  const auto n = embeddings.rows();
  if (n < 2) throw ArgumentError("consistency loss needs a batch of at least 2 rows");
  if (codes.rows() != static_cast<std::size_t>(n)) {
    throw ContractError("codes have " + std::to_string(codes.rows()) + " rows, batch has " +
                        std::to_string(n));
  }
  if (codes.num_subspaces() != lut.num_subspaces() ||
      codes.num_centroids() != lut.num_centroids()) {
    throw ContractError("codes and look-up table disagree on M or C");
  }
  const auto m_count = static_cast<Eigen::Index>(lut.num_subspaces());
  if (embeddings.cols() % m_count != 0) {
    throw ContractError("embedding width is not divisible by M");
  }
  const Eigen::Index sub = embeddings.cols() / m_count;

  BatchLossResult out;
  out.grad_embeddings = Eigen::MatrixXd::Zero(n, embeddings.cols());
  const double norm = 1.0 / double(n * n);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const auto block = embeddings.middleCols(m * sub, sub);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::RowVectorXd diff = block.row(i) - block.row(j);
        const double actual = diff.squaredNorm();
        const double table = lut.at(static_cast<std::size_t>(m), codes.at(std::size_t(i), std::size_t(m)),
                                    codes.at(std::size_t(j), std::size_t(m)));
        const double residual = table - actual;
        out.loss += norm * residual * residual;
        // d/d e_i of (table - |e_i - e_j|^2)^2; the (j, i) term adds the mirror.
        const Eigen::RowVectorXd g = (-4.0 * norm * residual) * diff;
        out.grad_embeddings.block(i, m * sub, 1, sub) += g;
        out.grad_embeddings.block(j, m * sub, 1, sub) -= g;
      }
    }
  }
  return out;
}

QuantizerState QuantizerState::from_codebook(Codebook codebook) {
  auto lut = build_lut(codebook);
  auto int_lut = quantize_lut(lut);
  return {std::move(codebook), std::move(lut), std::move(int_lut)};
}

TotalLossResult total_loss(const Batch& batch, const EmbedderParams& params,
                           const QuantizerState& quantizer, const TrainConfig& config) {
  if (batch.features.cols() != params.projection.rows()) {
    throw ConfigError("batch width does not match the embedder input dimension");
  }
  const Eigen::MatrixXd emb = batch.features * params.projection;

  const auto ce = cross_entropy_loss(emb, batch.labels, params.classifier);
  const auto tri = batch_triplet_loss(emb, batch.triplets, config.margin);

  TotalLossResult out;
  out.breakdown.ce = ce.loss;
  out.breakdown.triplet = tri.loss;
  out.grad_embeddings = ce.grad_embeddings + tri.grad_embeddings;

  if (config.alpha > 0.0) {
    const auto codes = encode(batch_features(emb), quantizer.codebook);
    const auto cr = config.int_mode
                        ? consistency_loss(emb, codes, quantizer.int_lut.descaled())
                        : consistency_loss(emb, codes, quantizer.lut);
    out.breakdown.consistency = cr.loss;
    out.grad_embeddings += config.alpha * cr.grad_embeddings;
  }
  out.breakdown.total = out.breakdown.ce + out.breakdown.triplet +
                        config.alpha * out.breakdown.consistency;
  out.grad_projection = batch.features.transpose() * out.grad_embeddings;
  out.grad_classifier = ce.grad_classifier;
  return out;
}

void TrainingLog::write_csv(std::ostream& out) const {
  out << "epoch,lr,ce,triplet,consistency,total,quant_error\n";
  const auto old_precision = out.precision(17);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.lr << ',' << e.loss.ce << ',' << e.loss.triplet << ','
        << e.loss.consistency << ',' << e.loss.total << ',' << e.quant_error << '\n';
  }
  out.precision(old_precision);
}

TrainingResult run_training(const FeatureSet& features, const TrainConfig& config) {
  config.validate();

  std::map<std::uint32_t, std::size_t> class_of;
  for (auto id : features.person_ids()) class_of.emplace(id, 0);
  std::vector<std::uint32_t> class_ids;
  for (auto& [id, idx] : class_of) {
    idx = class_ids.size();
    class_ids.push_back(id);
  }
  if (class_ids.size() < 2) throw ProtocolError("training needs at least two identities");
  std::vector<std::size_t> counts(class_ids.size(), 0);
  std::vector<std::size_t> labels(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    labels[i] = class_of[features.person_ids()[i]];
    ++counts[labels[i]];
  }
  std::string singles;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) singles += (singles.empty() ? "" : ", ") + std::to_string(class_ids[c]);
  }
  if (!singles.empty()) {
    throw ProtocolError("identities with a single instance cannot form triplets: " + singles);
  }

  const std::size_t din = features.dim();
  const std::size_t dout = config.embedding_dim == 0 ? din : config.embedding_dim;
  if (dout % config.num_subspaces != 0) {
    throw ConfigError("embedding dimension " + std::to_string(dout) +
                      " is not divisible by M = " + std::to_string(config.num_subspaces));
  }

  std::mt19937_64 rng(config.rng_seed);
  EmbedderParams params;
  params.class_ids = class_ids;
  if (dout == din) {
    params.projection = Eigen::MatrixXd::Identity(Eigen::Index(din), Eigen::Index(dout));
  } else {
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(double(din)));
    params.projection.resize(Eigen::Index(din), Eigen::Index(dout));
    for (Eigen::Index i = 0; i < params.projection.size(); ++i) params.projection(i) = init(rng);
  }
  {
    std::normal_distribution<double> init(0.0, 0.01);
    params.classifier.resize(Eigen::Index(class_ids.size()), Eigen::Index(dout));
    for (Eigen::Index i = 0; i < params.classifier.size(); ++i) params.classifier(i) = init(rng);
  }

  KMeansOptions km;
  km.num_subspaces = config.num_subspaces;
  km.num_centroids = config.num_centroids;
  km.max_iters = config.kmeans_iters;
  km.tol = config.kmeans_tol;
  km.rng_seed = config.rng_seed;

  TrainingResult result{params, Codebook(1, 1, 1, {0.0f}), {}};
  auto [initial_codebook, initial_report] = train_codebook(embed(features, params), km);
  result.log.warnings = initial_report.warnings;
  result.log.initial_quant_error = initial_report.total_quantization_error;
  km.num_centroids = initial_report.num_centroids;
  auto quantizer = QuantizerState::from_codebook(std::move(initial_codebook));

  BatchSampler sampler(features, labels, class_ids.size(), config, rng);
  const std::size_t steps = std::max<std::size_t>(1, features.size() / sampler.batch_rows());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    LossBreakdown mean;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch = sampler.next();
      const auto step = total_loss(batch, params, quantizer, config);
      mean.ce += step.breakdown.ce;
      mean.triplet += step.breakdown.triplet;
      mean.consistency += step.breakdown.consistency;
      mean.total += step.breakdown.total;
      params.projection -= lr * step.grad_projection;
      params.classifier -= lr * step.grad_classifier;
    }
    if (!params.projection.allFinite() || !params.classifier.allFinite()) {
      throw ContractError("training diverged in epoch " + std::to_string(epoch) +
                          " (non-finite parameters); lower the learning rate or alpha");
    }
    mean.ce /= double(steps);
    mean.triplet /= double(steps);
    mean.consistency /= double(steps);
    mean.total /= double(steps);

    const auto embedded = embed(features, params);
    if (epoch % config.refresh_period == 0) {
      const double before = quantization_error(embedded, encode(embedded, quantizer.codebook),
                                               quantizer.codebook);
      auto [codebook, report] = train_codebook(embedded, km, &quantizer.codebook);
      result.log.refreshes.push_back(
          {epoch, before, report.total_quantization_error, report.iterations_run});
      quantizer = QuantizerState::from_codebook(std::move(codebook));
    }
    const double quant_error =
        quantization_error(embedded, encode(embedded, quantizer.codebook), quantizer.codebook);
    result.log.epochs.push_back({epoch, lr, mean, quant_error});
  }

  result.params = std::move(params);
  result.codebook = std::move(quantizer.codebook);
  return result;
}

}  // namespace scr
