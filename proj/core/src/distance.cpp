#include "scr/distance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "scr/binary_io.hpp"
#include "scr/error.hpp"

namespace scr {
namespace {

constexpr std::string_view kLutMagic = "SCRL";
constexpr std::uint32_t kVersion = 1;

void check_code(std::span<const std::uint16_t> code, std::size_t m, std::size_t c,
                const char* which) {
  if (code.size() != m) {
    throw ConfigError(std::string(which) + " code has " + std::to_string(code.size()) +
                      " sub-space indices, table has M = " + std::to_string(m));
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (code[k] >= c) {
      throw CorruptionError(std::string(which) + " code index " + std::to_string(code[k]) +
                            " in sub-space " + std::to_string(k) + " is not < C = " +
                            std::to_string(c));
    }
  }
}

void check_gallery(const CodeMatrix& gallery, std::size_t m, std::size_t c) {
  if (gallery.num_subspaces() != m || gallery.num_centroids() != c) {
    throw ConfigError("gallery codes (M=" + std::to_string(gallery.num_subspaces()) +
                      ", C=" + std::to_string(gallery.num_centroids()) +
                      ") do not match the look-up table (M=" + std::to_string(m) +
                      ", C=" + std::to_string(c) + ")");
  }
}

}  // namespace

std::string_view to_string(DistanceKind kind) noexcept {
  switch (kind) {
    case DistanceKind::euclidean: return "exact";
    case DistanceKind::scr: return "scr";
    case DistanceKind::int_scr: return "intscr";
    case DistanceKind::hamming: return "hamming";
  }
  return "unknown";
}

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "exact" || name == "euclidean") return DistanceKind::euclidean;
  if (name == "scr") return DistanceKind::scr;
  if (name == "intscr" || name == "int_scr") return DistanceKind::int_scr;
  if (name == "hamming") return DistanceKind::hamming;
  throw ArgumentError("unknown pipeline '" + std::string(name) +
                      "' (expected exact, scr, intscr or hamming)");
}

SubspaceDistanceMatrix::SubspaceDistanceMatrix(std::size_t num_subspaces, std::size_t rows_a,
                                               std::size_t rows_b, std::vector<double> values)
    : m_(num_subspaces), na_(rows_a), nb_(rows_b), values_(std::move(values)) {
  if (values_.size() != m_ * na_ * nb_) throw ValidationError("values", "expected M*Na*Nb entries");
}

double SubspaceDistanceMatrix::summed(std::size_t i, std::size_t j) const noexcept {
  double acc = 0.0;
  for (std::size_t m = 0; m < m_; ++m) acc += at(m, i, j);
  return acc;
}

DistanceLUT::DistanceLUT(std::size_t num_subspaces, std::size_t num_centroids,
                         std::vector<float> values)
    : m_(num_subspaces), c_(num_centroids), values_(std::move(values)) {
  if (m_ == 0 || c_ == 0) throw ValidationError("lut", "M and C must be positive");
  if (values_.size() != m_ * c_ * c_) throw ValidationError("lut", "expected M*C*C entries");
}

float DistanceLUT::max_entry() const noexcept {
  float best = 0.0f;
  for (float v : values_) best = std::max(best, v);
  return best;
}

IntLUT::IntLUT(std::size_t num_subspaces, std::size_t num_centroids, double scale,
               std::vector<std::uint8_t> values)
    : m_(num_subspaces), c_(num_centroids), scale_(scale), values_(std::move(values)) {
  if (m_ == 0 || c_ == 0) throw ValidationError("int_lut", "M and C must be positive");
  if (values_.size() != m_ * c_ * c_) throw ValidationError("int_lut", "expected M*C*C entries");
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
    throw ValidationError("scale", "must be a positive finite number");
  }
}

DistanceLUT IntLUT::descaled() const {
  std::vector<float> out(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    out[i] = static_cast<float>(double(values_[i]) / scale_);
  }
  return DistanceLUT(m_, c_, std::move(out));
}

BitMatrix::BitMatrix(std::size_t rows, std::size_t bits, std::vector<std::uint64_t> words)
    : rows_(rows), bits_(bits), words_(std::move(words)) {
  if (bits_ == 0) throw ValidationError("bits", "must be positive");
  if (words_.size() != rows_ * words_per_row()) {
    throw ValidationError("words", "expected rows * ceil(bits / 64) words");
  }
}

SubspaceDistanceMatrix euclidean_matrix(const FeatureSet& a, const FeatureSet& b,
                                        std::size_t num_subspaces) {
  if (a.dim() != b.dim()) {
    throw ConfigError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  }
  if (num_subspaces == 0 || a.dim() % num_subspaces != 0) {
    throw ConfigError("M = " + std::to_string(num_subspaces) + " does not divide D = " +
                      std::to_string(a.dim()));
  }
  const std::size_t sub = a.dim() / num_subspaces;
  std::vector<double> values(num_subspaces * a.size() * b.size());
  std::size_t k = 0;
  for (std::size_t m = 0; m < num_subspaces; ++m) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto ra = a.row(i).subspan(m * sub, sub);
      for (std::size_t j = 0; j < b.size(); ++j) {
        values[k++] = detail::squared_distance(ra, b.row(j).subspan(m * sub, sub));
      }
    }
  }
  return SubspaceDistanceMatrix(num_subspaces, a.size(), b.size(), std::move(values));
}

DistanceLUT build_lut(const Codebook& codebook) {
  const auto m_count = codebook.num_subspaces();
  const auto c_count = codebook.num_centroids();
  std::vector<float> values(m_count * c_count * c_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    float* slice = values.data() + m * c_count * c_count;
    for (std::size_t a = 0; a < c_count; ++a) {
      slice[a * c_count + a] = 0.0f;
      for (std::size_t b = a + 1; b < c_count; ++b) {
        const auto d = static_cast<float>(
            detail::squared_distance(codebook.centroid(m, a), codebook.centroid(m, b)));
        slice[a * c_count + b] = d;
        slice[b * c_count + a] = d;
      }
    }
  }
  return DistanceLUT(m_count, c_count, std::move(values));
}

IntLUT quantize_lut(const DistanceLUT& lut) {
  const auto values = lut.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0f) {
      throw CorruptionError("look-up table entry " + std::to_string(i) +
                            " is negative or non-finite");
    }
  }
  const double max_entry = lut.max_entry();
  const double scale = max_entry > 0.0 ? double(IntLUT::kMaxEntry) / max_entry : 1.0;
  std::vector<std::uint8_t> out(values.size(), 0);
  if (max_entry > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      // std::lround rounds halves away from zero.
      const long q = std::lround(scale * double(values[i]));
      out[i] = static_cast<std::uint8_t>(std::clamp<long>(q, 0, IntLUT::kMaxEntry));
    }
  }
  return IntLUT(lut.num_subspaces(), lut.num_centroids(), scale, std::move(out));
}

double scr_distance(std::span<const std::uint16_t> code_a, std::span<const std::uint16_t> code_b,
                    const DistanceLUT& lut) {
  check_code(code_a, lut.num_subspaces(), lut.num_centroids(), "first");
  check_code(code_b, lut.num_subspaces(), lut.num_centroids(), "second");
  double acc = 0.0;
  for (std::size_t m = 0; m < lut.num_subspaces(); ++m) acc += lut.at(m, code_a[m], code_b[m]);
  return acc;
}

std::uint32_t int_scr_distance(std::span<const std::uint16_t> code_a,
                               std::span<const std::uint16_t> code_b, const IntLUT& lut) {
  check_code(code_a, lut.num_subspaces(), lut.num_centroids(), "first");
  check_code(code_b, lut.num_subspaces(), lut.num_centroids(), "second");
  std::uint32_t acc = 0;
  for (std::size_t m = 0; m < lut.num_subspaces(); ++m) acc += lut.at(m, code_a[m], code_b[m]);
  return acc;
}

DistanceRow distance_row(std::span<const std::uint16_t> query_code, const CodeMatrix& gallery,
                         const DistanceLUT& lut, std::size_t query_index) {
  const auto m_count = lut.num_subspaces();
  const auto c_count = lut.num_centroids();
  check_gallery(gallery, m_count, c_count);
  check_code(query_code, m_count, c_count, "query");

  // Row q_m of each slice is all a query ever reads.
  std::vector<const float*> rows(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    rows[m] = lut.values().data() + (m * c_count + query_code[m]) * c_count;
  }
  DistanceRow out{query_index, DistanceKind::scr, std::vector<double>(gallery.rows()), {}};
  const std::uint16_t* codes = gallery.values().data();
  for (std::size_t j = 0; j < gallery.rows(); ++j, codes += m_count) {
    double acc = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) acc += rows[m][codes[m]];
    out.real[j] = acc;
  }
  return out;
}

DistanceRow distance_row(std::span<const std::uint16_t> query_code, const CodeMatrix& gallery,
                         const IntLUT& lut, std::size_t query_index) {
  const auto m_count = lut.num_subspaces();
  const auto c_count = lut.num_centroids();
  check_gallery(gallery, m_count, c_count);
  check_code(query_code, m_count, c_count, "query");

  std::vector<const std::uint8_t*> rows(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    rows[m] = lut.values().data() + (m * c_count + query_code[m]) * c_count;
  }
  DistanceRow out{query_index, DistanceKind::int_scr, {}, std::vector<std::uint32_t>(gallery.rows())};
  const std::uint16_t* codes = gallery.values().data();
  for (std::size_t j = 0; j < gallery.rows(); ++j, codes += m_count) {
    std::uint32_t acc = 0;
    for (std::size_t m = 0; m < m_count; ++m) acc += rows[m][codes[m]];
    out.integer[j] = acc;
  }
  return out;
}

DistanceRow exact_distance_row(std::span<const float> query, const FeatureSet& gallery,
                               std::size_t query_index) {
  if (query.size() != gallery.dim()) {
    throw ConfigError("query dimension " + std::to_string(query.size()) +
                      " != gallery dimension " + std::to_string(gallery.dim()));
  }
  DistanceRow out{query_index, DistanceKind::euclidean, std::vector<double>(gallery.size()), {}};
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    out.real[j] = detail::squared_distance(query, gallery.row(j));
  }
  return out;
}

BitMatrix binarize(const FeatureSet& set, std::size_t bits) {
  if (bits == 0 || set.dim() % bits != 0) {
    throw ConfigError("bit length " + std::to_string(bits) + " does not divide D = " +
                      std::to_string(set.dim()));
  }
  const std::size_t block = set.dim() / bits;
  const std::size_t words = (bits + 63) / 64;
  std::vector<std::uint64_t> out(set.size() * words, 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = set.row(i);
    for (std::size_t b = 0; b < bits; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < block; ++k) acc += r[b * block + k];
      if (acc > 0.0) out[i * words + b / 64] |= std::uint64_t{1} << (b % 64);
    }
  }
  return BitMatrix(set.size(), bits, std::move(out));
}

std::uint32_t hamming_distance(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw ConfigError("bit strings differ in length");
  std::uint32_t acc = 0;
  for (std::size_t w = 0; w < a.size(); ++w) {
    acc += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
  }
  return acc;
}

DistanceRow hamming_distance_row(std::span<const std::uint64_t> query_bits,
                                 std::size_t bit_length, const BitMatrix& gallery,
                                 std::size_t query_index) {
  if (bit_length != gallery.bits() || query_bits.size() != gallery.words_per_row()) {
    throw ConfigError("query has " + std::to_string(bit_length) + " bits, gallery has " +
                      std::to_string(gallery.bits()));
  }
  DistanceRow out{query_index, DistanceKind::hamming, {}, std::vector<std::uint32_t>(gallery.rows())};
  for (std::size_t j = 0; j < gallery.rows(); ++j) {
    out.integer[j] = hamming_distance(query_bits, gallery.row(j));
  }
  return out;
}

void save_lut(const DistanceLUT& lut, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kLutMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lut.num_subspaces()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lut.num_centroids()));
  w.put_all(lut.values());
  w.save(path);
}

void save_lut(const IntLUT& lut, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kLutMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lut.num_subspaces()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lut.num_centroids()));
  w.put<double>(lut.scale());
  w.put_all(lut.values());
  w.save(path);
}

std::variant<DistanceLUT, IntLUT> load_lut(const std::filesystem::path& path) {
  auto r = io::ByteReader::open(path);
  r.expect_magic(kLutMagic);
  r.expect_version(kVersion);
  const auto kind_at = r.offset();
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError(kind_at, "unknown table kind " + std::to_string(kind));
  const auto shape_at = r.offset();
  const std::uint64_t m = r.get<std::uint32_t>();
  const std::uint64_t c = r.get<std::uint32_t>();
  if (m == 0 || c == 0 || c > 65536) {
    throw FormatError(shape_at, "invalid table shape M=" + std::to_string(m) +
                                    " C=" + std::to_string(c));
  }
  if (kind == 0) {
    const auto payload_at = r.offset();
    auto values = r.get_all<float>(m * c * c);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] < 0.0f) {
        throw FormatError(payload_at + 4 * i, "negative or non-finite table entry");
      }
    }
    r.expect_end();
    return DistanceLUT(m, c, std::move(values));
  }
  const auto scale_at = r.offset();
  const auto scale = r.get<double>();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw FormatError(scale_at, "invalid scale");
  auto values = r.get_all<std::uint8_t>(m * c * c);
  r.expect_end();
  return IntLUT(m, c, scale, std::move(values));
}

}  // namespace scr
