#include "scr/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "scr/binary_io.hpp"
#include "scr/error.hpp"

namespace scr {
namespace {

constexpr std::string_view kCodebookMagic = "SCRC";
constexpr std::string_view kCodesMagic = "SCRQ";
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kMaxCentroids = 65536;

struct Assignment {
  std::vector<std::uint32_t> labels;
  std::vector<double> distances;
  double error = 0.0;
};

std::uint32_t nearest(std::span<const float> x, std::span<const float> centroids,
                      std::size_t count, std::size_t dim, double* best_out) {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::size_t c = 0; c < count; ++c) {
    const double d = detail::squared_distance(x, centroids.subspan(c * dim, dim));
    if (d < best) {
      best = d;
      arg = static_cast<std::uint32_t>(c);
    }
  }
  if (best_out) *best_out = best;
  return arg;
}

Assignment assign(const SubMatrix& x, std::span<const float> centroids, std::size_t count) {
  Assignment a;
  a.labels.resize(x.rows);
  a.distances.resize(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    a.labels[i] = nearest(x.row(i), centroids, count, x.cols, &a.distances[i]);
    a.error += a.distances[i];
  }
  return a;
}

std::size_t count_distinct_rows(const SubMatrix& x) {
  std::vector<std::size_t> order(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) order[i] = i;
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = x.row(a), rb = x.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = x.rows == 0 ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

std::vector<float> kmeans_plus_plus(const SubMatrix& x, std::size_t count, std::mt19937_64& rng) {
  std::vector<float> centroids;
  centroids.reserve(count * x.cols);
  std::uniform_int_distribution<std::size_t> first(0, x.rows - 1);
  auto pick = x.row(first(rng));
  centroids.insert(centroids.end(), pick.begin(), pick.end());

  std::vector<double> closest(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) closest[i] = detail::squared_distance(x.row(i), pick);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < count; ++c) {
    double total = 0.0;
    for (double d : closest) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      // Rounding may leave the target past the running sum; fall back to the
      // last point that still carries mass.
      for (std::size_t i = x.rows; i-- > 0;) {
        if (closest[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      for (std::size_t i = 0; i < x.rows; ++i) {
        running += closest[i];
        if (running > target && closest[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    auto row = x.row(chosen);
    centroids.insert(centroids.end(), row.begin(), row.end());
    for (std::size_t i = 0; i < x.rows; ++i) {
      closest[i] = std::min(closest[i], detail::squared_distance(x.row(i), row));
    }
  }
  return centroids;
}

std::vector<float> update_centroids(const SubMatrix& x, const Assignment& a, std::size_t count) {
  const std::size_t d = x.cols;
  std::vector<double> sums(count * d, 0.0);
  std::vector<std::size_t> sizes(count, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = a.labels[i];
    ++sizes[c];
    auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += r[j];
  }

  std::vector<float> centroids(count * d);
  std::vector<double> far = a.distances;
  for (std::size_t c = 0; c < count; ++c) {
    if (sizes[c] > 0) {
      for (std::size_t j = 0; j < d; ++j) {
        centroids[c * d + j] = static_cast<float>(sums[c * d + j] / double(sizes[c]));
      }
      continue;
    }
    const auto it = std::max_element(far.begin(), far.end());
    const auto donor = static_cast<std::size_t>(it - far.begin());
    *it = -1.0;
    auto r = x.row(donor);
    std::copy(r.begin(), r.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
  return centroids;
}

struct SubspaceFit {
  std::vector<float> centroids;
  double error = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;
};

SubspaceFit lloyd(const SubMatrix& x, std::vector<float> centroids, std::size_t count,
                  const KMeansOptions& opt) {
  SubspaceFit fit;
  auto current = assign(x, centroids, count);
  fit.trace.push_back(current.error);
  while (fit.iterations < opt.max_iters) {
    auto next_centroids = update_centroids(x, current, count);
    auto next = assign(x, next_centroids, count);
    ++fit.iterations;
    if (next.error > current.error) {
      // float rounding of the means can nudge a converged error upwards
      fit.trace.push_back(current.error);
      break;
    }
    const double improvement = current.error - next.error;
    const double previous = current.error;
    centroids = std::move(next_centroids);
    current = std::move(next);
    fit.trace.push_back(current.error);
    if (improvement <= opt.tol * previous) break;
  }
  fit.centroids = std::move(centroids);
  fit.error = current.error;
  return fit;
}

}  // namespace

Codebook::Codebook(std::size_t num_subspaces, std::size_t num_centroids, std::size_t sub_dim,
                   std::vector<float> centroids)
    : m_(num_subspaces), c_(num_centroids), sub_dim_(sub_dim), centroids_(std::move(centroids)) {
  if (m_ == 0) throw ValidationError("num_subspaces", "must be positive");
  if (c_ == 0 || c_ > kMaxCentroids) {
    throw ValidationError("num_centroids", "must lie in [1, 65536], got " + std::to_string(c_));
  }
  if (sub_dim_ == 0) throw ValidationError("sub_dim", "must be positive");
  if (centroids_.size() != m_ * c_ * sub_dim_) {
    throw ValidationError("centroids", "expected M*C*sub_dim values");
  }
  for (float v : centroids_) {
    if (!std::isfinite(v)) throw ValidationError("centroids", "non-finite centroid value");
  }
}

std::size_t Codebook::code_bits() const noexcept {
  return m_ * static_cast<std::size_t>(std::bit_width(c_ - 1));
}

CodeMatrix::CodeMatrix(std::size_t rows, std::size_t num_subspaces, std::size_t num_centroids,
                       std::vector<std::uint16_t> codes)
    : rows_(rows), m_(num_subspaces), c_(num_centroids), codes_(std::move(codes)) {
  if (m_ == 0) throw ValidationError("num_subspaces", "must be positive");
  if (c_ == 0 || c_ > kMaxCentroids) throw ValidationError("num_centroids", "must lie in [1, 65536]");
  if (codes_.size() != rows_ * m_) throw ValidationError("codes", "expected N*M indices");
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i] >= c_) {
      throw CorruptionError("code (" + std::to_string(i / m_) + ", " + std::to_string(i % m_) +
                            ") = " + std::to_string(codes_[i]) + " is not < C = " +
                            std::to_string(c_));
    }
  }
}

CodeMatrix CodeMatrix::subset(std::span<const std::size_t> rows) const {
  std::vector<std::uint16_t> out;
  out.reserve(rows.size() * m_);
  for (auto r : rows) {
    if (r >= rows_) throw ArgumentError("subset row out of range");
    auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return CodeMatrix(rows.size(), m_, c_, std::move(out));
}

std::vector<SubMatrix> split_subspaces(const FeatureSet& set, std::size_t num_subspaces) {
  if (num_subspaces == 0 || set.dim() % num_subspaces != 0) {
    throw ConfigError("M = " + std::to_string(num_subspaces) + " does not divide D = " +
                      std::to_string(set.dim()));
  }
  const std::size_t sub = set.dim() / num_subspaces;
  std::vector<SubMatrix> parts(num_subspaces);
  for (std::size_t m = 0; m < num_subspaces; ++m) {
    auto& p = parts[m];
    p.rows = set.size();
    p.cols = sub;
    p.values.reserve(set.size() * sub);
    for (std::size_t i = 0; i < set.size(); ++i) {
      auto r = set.row(i).subspan(m * sub, sub);
      p.values.insert(p.values.end(), r.begin(), r.end());
    }
  }
  return parts;
}

std::pair<Codebook, KMeansReport> train_codebook(const FeatureSet& set,
                                                 const KMeansOptions& options,
                                                 const Codebook* warm_start) {
  if (options.num_centroids == 0 || options.num_centroids > kMaxCentroids) {
    throw ConfigError("C must lie in [1, 65536], got " + std::to_string(options.num_centroids));
  }
  if (options.max_iters == 0) throw ConfigError("max_iters must be at least 1");
  if (!(options.tol >= 0.0)) throw ConfigError("tol must be non-negative");
  const auto parts = split_subspaces(set, options.num_subspaces);
  const std::size_t m_count = options.num_subspaces;
  const std::size_t sub_dim = set.dim() / m_count;

  KMeansReport report;
  std::size_t count = options.num_centroids;
  if (warm_start) {
    if (warm_start->num_subspaces() != m_count || warm_start->sub_dim() != sub_dim ||
        warm_start->num_centroids() != count) {
      throw ConfigError("warm-start codebook shape (M=" +
                        std::to_string(warm_start->num_subspaces()) +
                        ", C=" + std::to_string(warm_start->num_centroids()) +
                        ", sub_dim=" + std::to_string(warm_start->sub_dim()) +
                        ") does not match the requested configuration");
    }
  } else {
    std::size_t distinct = count;
    for (const auto& p : parts) distinct = std::min(distinct, count_distinct_rows(p));
    if (distinct < count) {
      report.warnings.push_back("C clamped from " + std::to_string(count) + " to " +
                                std::to_string(distinct) +
                                " (number of distinct sub-vectors)");
      count = distinct;
    }
  }
  report.num_centroids = count;

  std::vector<SubspaceFit> fits(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    std::vector<float> init;
    if (warm_start) {
      const auto first = warm_start->centroid(m, 0);
      init.assign(first.data(), first.data() + count * sub_dim);
    } else {
      std::seed_seq seq{static_cast<std::uint32_t>(options.rng_seed),
                        static_cast<std::uint32_t>(options.rng_seed >> 32),
                        static_cast<std::uint32_t>(m)};
      std::mt19937_64 rng(seq);
      init = kmeans_plus_plus(parts[m], count, rng);
    }
    fits[m] = lloyd(parts[m], std::move(init), count, options);
  }

  std::vector<float> centroids;
  centroids.reserve(m_count * count * sub_dim);
  std::size_t longest = 0;
  for (const auto& f : fits) longest = std::max(longest, f.trace.size());
  report.error_trace.assign(longest, 0.0);
  for (const auto& f : fits) {
    centroids.insert(centroids.end(), f.centroids.begin(), f.centroids.end());
    report.per_subspace_error.push_back(f.error);
    report.total_quantization_error += f.error;
    report.iterations_run = std::max(report.iterations_run, f.iterations);
    for (std::size_t t = 0; t < longest; ++t) {
      report.error_trace[t] += f.trace[std::min(t, f.trace.size() - 1)];
    }
  }
  return {Codebook(m_count, count, sub_dim, std::move(centroids)), std::move(report)};
}

CodeMatrix encode(const FeatureSet& set, const Codebook& codebook) {
  if (set.dim() != codebook.dim()) {
    throw ConfigError("feature dimension " + std::to_string(set.dim()) +
                      " != codebook dimension " + std::to_string(codebook.dim()));
  }
  const auto m_count = codebook.num_subspaces();
  const auto c_count = codebook.num_centroids();
  const auto sub = codebook.sub_dim();
  std::vector<std::uint16_t> codes(set.size() * m_count);
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto r = set.row(i);
    for (std::size_t m = 0; m < m_count; ++m) {
      codes[i * m_count + m] = static_cast<std::uint16_t>(
          nearest(r.subspan(m * sub, sub),
                  std::span<const float>(codebook.centroid(m, 0).data(), c_count * sub),
                  c_count, sub, nullptr));
    }
  }
  return CodeMatrix(set.size(), m_count, c_count, std::move(codes));
}

std::vector<float> reconstruct(const CodeMatrix& codes, const Codebook& codebook) {
  if (codes.num_subspaces() != codebook.num_subspaces() ||
      codes.num_centroids() != codebook.num_centroids()) {
    throw CorruptionError("code matrix (M=" + std::to_string(codes.num_subspaces()) +
                          ", C=" + std::to_string(codes.num_centroids()) +
                          ") does not match codebook (M=" +
                          std::to_string(codebook.num_subspaces()) +
                          ", C=" + std::to_string(codebook.num_centroids()) + ")");
  }
  std::vector<float> out;
  out.reserve(codes.rows() * codebook.dim());
  for (std::size_t i = 0; i < codes.rows(); ++i) {
    for (std::size_t m = 0; m < codes.num_subspaces(); ++m) {
      auto c = codebook.centroid(m, codes.at(i, m));
      out.insert(out.end(), c.begin(), c.end());
    }
  }
  return out;
}

double quantization_error(const FeatureSet& set, const CodeMatrix& codes,
                          const Codebook& codebook) {
  if (set.size() != codes.rows() || set.dim() != codebook.dim()) {
    throw ConfigError("feature set, codes and codebook shapes disagree");
  }
  const auto sub = codebook.sub_dim();
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t m = 0; m < codebook.num_subspaces(); ++m) {
      total += detail::squared_distance(set.row(i).subspan(m * sub, sub),
                                        codebook.centroid(m, codes.at(i, m)));
    }
  }
  return total;
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kCodebookMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codebook.num_subspaces()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codebook.num_centroids()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codebook.sub_dim()));
  w.put_all(codebook.values());
  w.save(path);
}

Codebook load_codebook(const std::filesystem::path& path) {
  auto r = io::ByteReader::open(path);
  r.expect_magic(kCodebookMagic);
  r.expect_version(kVersion);
  const auto header_at = r.offset();
  const std::uint64_t m = r.get<std::uint32_t>();
  const std::uint64_t c = r.get<std::uint32_t>();
  const std::uint64_t sub = r.get<std::uint32_t>();
  if (m == 0 || c == 0 || c > kMaxCentroids || sub == 0) {
    throw FormatError(header_at, "invalid codebook shape M=" + std::to_string(m) +
                                     " C=" + std::to_string(c) + " sub_dim=" + std::to_string(sub));
  }
  const auto payload_at = r.offset();
  auto values = r.get_all<float>(m * c * sub);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw FormatError(payload_at + 4 * i, "non-finite centroid");
  }
  r.expect_end();
  return Codebook(m, c, sub, std::move(values));
}

void save_codes(const CodeMatrix& codes, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kCodesMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(codes.rows());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codes.num_subspaces()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codes.num_centroids()));
  w.put_all(codes.values());
  w.save(path);
}

CodeMatrix load_codes(const std::filesystem::path& path) {
  auto r = io::ByteReader::open(path);
  r.expect_magic(kCodesMagic);
  r.expect_version(kVersion);
  const auto header_at = r.offset();
  const auto n = r.get<std::uint64_t>();
  const std::uint64_t m = r.get<std::uint32_t>();
  const std::uint64_t c = r.get<std::uint32_t>();
  if (m == 0 || c == 0 || c > kMaxCentroids) {
    throw FormatError(header_at, "invalid code shape M=" + std::to_string(m) +
                                     " C=" + std::to_string(c));
  }
  if (n > std::numeric_limits<std::uint64_t>::max() / m) throw FormatError(header_at, "N*M overflows");
  const auto payload_at = r.offset();
  auto values = r.get_all<std::uint16_t>(n * m);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= c) throw FormatError(payload_at + 2 * i, "code index out of range");
  }
  r.expect_end();
  return CodeMatrix(n, m, c, std::move(values));
}

}  // namespace scr
