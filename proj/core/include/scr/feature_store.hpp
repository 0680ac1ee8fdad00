#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace scr {

/// N labeled embedding vectors of dimension D, stored row-major as float32.
///
/// Immutable once constructed; the constructor enforces every invariant
/// (N >= 1, D >= 1, label arrays of length N, finite coordinates).
class FeatureSet {
 public:
  FeatureSet(std::size_t dim, std::vector<float> values,
             std::vector<std::uint32_t> person_ids,
             std::vector<std::uint16_t> camera_ids);

  std::size_t size() const noexcept { return person_ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const float> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const std::uint32_t> person_ids() const noexcept {
    return person_ids_;
  }
  std::span<const std::uint16_t> camera_ids() const noexcept {
    return camera_ids_;
  }

  /// Number of distinct person ids (the class count Y).
  std::size_t num_identities() const;

  /// Rows selected by index, in the given order.
  FeatureSet subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

 private:
  std::size_t dim_;
  std::vector<float> values_;
  std::vector<std::uint32_t> person_ids_;
  std::vector<std::uint16_t> camera_ids_;
};

struct SynthSpec {
  std::uint32_t num_identities = 10;
  std::uint32_t instances_per_identity = 4;
  std::uint32_t dim = 32;
  double cluster_stddev = 0.1;
  double identity_separation = 2.0;
  std::uint32_t num_cameras = 2;
  std::uint64_t rng_seed = 0;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
};

/// Identity means are uniform in the origin-centred hypercube of side
/// `identity_separation`; each instance adds isotropic N(0, stddev^2) noise.
/// Rows are grouped by identity; cameras are assigned round-robin over rows.
FeatureSet generate_synthetic(const SynthSpec& spec);

/// Reads a `.fvs` file. Throws FormatError (with byte offset) or IoError.
FeatureSet load_features(const std::filesystem::path& path);

/// Writes a `.fvs` file, replacing any existing file.
void save_features(const FeatureSet& set, const std::filesystem::path& path);

/// Scales every row to unit L2 norm; zero rows are left unchanged.
FeatureSet l2_normalize(const FeatureSet& set);

/// Per identity, ceil(fraction * count) instances (capped at count - 1) go to
/// the query split and the rest to the gallery. Deterministic given the seed.
std::pair<FeatureSet, FeatureSet> split_query_gallery(const FeatureSet& set,
                                                      double query_fraction,
                                                      std::uint64_t rng_seed);

}  // namespace scr
