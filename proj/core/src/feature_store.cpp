#include "scr/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "scr/binary_io.hpp"
#include "scr/error.hpp"

namespace scr {
namespace {

constexpr std::string_view kMagic = "SCRF";
constexpr std::uint32_t kVersion = 1;

}  // namespace

FeatureSet::FeatureSet(std::size_t dim, std::vector<float> values,
                       std::vector<std::uint32_t> person_ids,
                       std::vector<std::uint16_t> camera_ids)
    : dim_(dim),
      values_(std::move(values)),
      person_ids_(std::move(person_ids)),
      camera_ids_(std::move(camera_ids)) {
  if (dim_ == 0) throw ValidationError("dim", "must be at least 1");
  if (person_ids_.empty()) throw ValidationError("person_ids", "N must be at least 1");
  if (camera_ids_.size() != person_ids_.size()) {
    throw ValidationError("camera_ids", "length " + std::to_string(camera_ids_.size()) +
                                            " != N " + std::to_string(person_ids_.size()));
  }
  if (values_.size() != person_ids_.size() * dim_) {
    throw ValidationError("vectors", "expected N*D = " +
                                         std::to_string(person_ids_.size() * dim_) +
                                         " values, got " + std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError("vectors", "non-finite value at row " + std::to_string(i / dim_) +
                                           ", column " + std::to_string(i % dim_));
    }
  }
}

std::size_t FeatureSet::num_identities() const {
  return std::set<std::uint32_t>(person_ids_.begin(), person_ids_.end()).size();
}

FeatureSet FeatureSet::subset(std::span<const std::size_t> rows) const {
  std::vector<float> values;
  values.reserve(rows.size() * dim_);
  std::vector<std::uint32_t> pids;
  std::vector<std::uint16_t> cams;
  for (auto r : rows) {
    if (r >= size()) throw ArgumentError("subset row " + std::to_string(r) + " out of range");
    auto v = row(r);
    values.insert(values.end(), v.begin(), v.end());
    pids.push_back(person_ids_[r]);
    cams.push_back(camera_ids_[r]);
  }
  return FeatureSet(dim_, std::move(values), std::move(pids), std::move(cams));
}

void SynthSpec::validate() const {
  if (num_identities == 0) throw ValidationError("num_identities", "must be positive");
  if (instances_per_identity == 0) {
    throw ValidationError("instances_per_identity", "must be positive");
  }
  if (dim == 0) throw ValidationError("dim", "must be positive");
  if (!(cluster_stddev > 0.0) || !std::isfinite(cluster_stddev)) {
    throw ValidationError("cluster_stddev", "must be a positive finite number");
  }
  if (!(identity_separation > 0.0) || !std::isfinite(identity_separation)) {
    throw ValidationError("identity_separation", "must be a positive finite number");
  }
  if (num_cameras < 2) throw ValidationError("num_cameras", "must be at least 2");
  if (num_cameras > 65536) throw ValidationError("num_cameras", "must fit in 16 bits");
}

FeatureSet generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> centre(-0.5 * spec.identity_separation,
                                                0.5 * spec.identity_separation);
  std::normal_distribution<double> noise(0.0, spec.cluster_stddev);

  const std::size_t n =
      static_cast<std::size_t>(spec.num_identities) * spec.instances_per_identity;
  std::vector<float> values;
  values.reserve(n * spec.dim);
  std::vector<std::uint32_t> pids;
  std::vector<std::uint16_t> cams;
  pids.reserve(n);
  cams.reserve(n);

  std::vector<double> mean(spec.dim);
  for (std::uint32_t id = 0; id < spec.num_identities; ++id) {
    for (auto& m : mean) m = centre(rng);
    for (std::uint32_t k = 0; k < spec.instances_per_identity; ++k) {
      for (auto m : mean) values.push_back(static_cast<float>(m + noise(rng)));
      pids.push_back(id);
      cams.push_back(static_cast<std::uint16_t>(k % spec.num_cameras));
    }
  }
  return FeatureSet(spec.dim, std::move(values), std::move(pids), std::move(cams));
}

void save_features(const FeatureSet& set, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(set.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.put<std::uint32_t>(set.person_ids()[i]);
    w.put<std::uint16_t>(set.camera_ids()[i]);
  }
  w.put_all(set.values());
  w.save(path);
}

FeatureSet load_features(const std::filesystem::path& path) {
  auto r = io::ByteReader::open(path);
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  const auto n_at = r.offset();
  const auto n = r.get<std::uint64_t>();
  const auto d_at = r.offset();
  const auto d = r.get<std::uint32_t>();
  if (n == 0) throw FormatError(n_at, "N must be at least 1");
  if (d == 0) throw FormatError(d_at, "D must be at least 1");
  if (n > r.remaining() / 6) {
    throw FormatError(r.offset(), "truncated label records: N=" + std::to_string(n));
  }
  std::vector<std::uint32_t> pids(n);
  std::vector<std::uint16_t> cams(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    pids[i] = r.get<std::uint32_t>();
    cams[i] = r.get<std::uint16_t>();
  }
  const auto payload_at = r.offset();
  if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
    throw FormatError(n_at, "N*D overflows");
  }
  auto values = r.get_all<float>(n * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw FormatError(payload_at + 4 * i, "non-finite vector value");
    }
  }
  r.expect_end();
  return FeatureSet(d, std::move(values), std::move(pids), std::move(cams));
}

FeatureSet l2_normalize(const FeatureSet& set) {
  std::vector<float> values(set.values().begin(), set.values().end());
  const auto d = set.dim();
  for (std::size_t i = 0; i < set.size(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += double(values[i * d + j]) * values[i * d + j];
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) {
      values[i * d + j] = static_cast<float>(values[i * d + j] * inv);
    }
  }
  return FeatureSet(d, std::move(values),
                    {set.person_ids().begin(), set.person_ids().end()},
                    {set.camera_ids().begin(), set.camera_ids().end()});
}

std::pair<FeatureSet, FeatureSet> split_query_gallery(const FeatureSet& set,
                                                      double query_fraction,
                                                      std::uint64_t rng_seed) {
  if (!(query_fraction > 0.0 && query_fraction < 1.0)) {
    throw ArgumentError("query_fraction must lie in (0, 1)");
  }
  std::map<std::uint32_t, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < set.size(); ++i) by_id[set.person_ids()[i]].push_back(i);

  std::string singletons;
  for (const auto& [id, rows] : by_id) {
    if (rows.size() < 2) singletons += (singletons.empty() ? "" : ", ") + std::to_string(id);
  }
  if (!singletons.empty()) {
    throw ProtocolError("identities with a single instance cannot be split: " + singletons);
  }

  std::mt19937_64 rng(rng_seed);
  std::vector<std::size_t> query_rows;
  std::vector<std::size_t> gallery_rows;
  for (auto& [id, rows] : by_id) {
    const auto count = rows.size();
    auto take = static_cast<std::size_t>(std::ceil(query_fraction * double(count) - 1e-9));
    take = std::clamp<std::size_t>(take, 1, count - 1);
    std::shuffle(rows.begin(), rows.end(), rng);
    query_rows.insert(query_rows.end(), rows.begin(), rows.begin() + take);
    gallery_rows.insert(gallery_rows.end(), rows.begin() + take, rows.end());
  }
  std::sort(query_rows.begin(), query_rows.end());
  std::sort(gallery_rows.begin(), gallery_rows.end());
  return {set.subset(query_rows), set.subset(gallery_rows)};
}

}  // namespace scr
