#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "scr/feature_store.hpp"
#include "scr/quantizer.hpp"

namespace scr {

enum class DistanceKind : std::uint8_t { euclidean, scr, int_scr, hamming };

std::string_view to_string(DistanceKind kind) noexcept;
/// Accepts "exact"/"euclidean", "scr", "intscr"/"int_scr", "hamming".
DistanceKind parse_distance_kind(std::string_view name);
constexpr bool is_integer_kind(DistanceKind k) noexcept {
  return k == DistanceKind::int_scr || k == DistanceKind::hamming;
}

/// Per-sub-space squared distances between the rows of A and B (V_R).
class SubspaceDistanceMatrix {
 public:
  SubspaceDistanceMatrix(std::size_t num_subspaces, std::size_t rows_a, std::size_t rows_b,
                         std::vector<double> values);

  std::size_t num_subspaces() const noexcept { return m_; }
  std::size_t rows_a() const noexcept { return na_; }
  std::size_t rows_b() const noexcept { return nb_; }

  double at(std::size_t m, std::size_t i, std::size_t j) const noexcept {
    return values_[(m * na_ + i) * nb_ + j];
  }
  /// Sum over sub-spaces; equals the global squared distance.
  double summed(std::size_t i, std::size_t j) const noexcept;

 private:
  std::size_t m_;
  std::size_t na_;
  std::size_t nb_;
  std::vector<double> values_;
};

/// M x C x C squared distances between the centroids of each sub-space (V_SCR).
class DistanceLUT {
 public:
  DistanceLUT(std::size_t num_subspaces, std::size_t num_centroids, std::vector<float> values);

  std::size_t num_subspaces() const noexcept { return m_; }
  std::size_t num_centroids() const noexcept { return c_; }
  float at(std::size_t m, std::size_t a, std::size_t b) const noexcept {
    return values_[(m * c_ + a) * c_ + b];
  }
  std::span<const float> values() const noexcept { return values_; }
  float max_entry() const noexcept;

  friend bool operator==(const DistanceLUT&, const DistanceLUT&) = default;

 private:
  std::size_t m_;
  std::size_t c_;
  std::vector<float> values_;
};

/// 8-bit quantization of a DistanceLUT with a single global scale (V_IntSCR).
/// entry = round(scale * real entry), scale = 255 / max real entry.
class IntLUT {
 public:
  static constexpr std::uint32_t kMaxEntry = 255;

  IntLUT(std::size_t num_subspaces, std::size_t num_centroids, double scale,
         std::vector<std::uint8_t> values);

  std::size_t num_subspaces() const noexcept { return m_; }
  std::size_t num_centroids() const noexcept { return c_; }
  double scale() const noexcept { return scale_; }
  std::uint8_t at(std::size_t m, std::size_t a, std::size_t b) const noexcept {
    return values_[(m * c_ + a) * c_ + b];
  }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  /// Upper bound of any code-pair distance: 255 * M.
  std::uint32_t max_distance() const noexcept {
    return kMaxEntry * static_cast<std::uint32_t>(m_);
  }

  /// Real-valued view with every entry divided by the scale.
  DistanceLUT descaled() const;

  friend bool operator==(const IntLUT&, const IntLUT&) = default;

 private:
  std::size_t m_;
  std::size_t c_;
  double scale_;
  std::vector<std::uint8_t> values_;
};

/// Sign bits of a feature set, packed into 64-bit words per row.
class BitMatrix {
 public:
  BitMatrix(std::size_t rows, std::size_t bits, std::vector<std::uint64_t> words);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t bits() const noexcept { return bits_; }
  std::size_t words_per_row() const noexcept { return (bits_ + 63) / 64; }
  std::span<const std::uint64_t> row(std::size_t i) const noexcept {
    return {words_.data() + i * words_per_row(), words_per_row()};
  }

 private:
  std::size_t rows_;
  std::size_t bits_;
  std::vector<std::uint64_t> words_;
};

/// One query's distances to every gallery item. Real kinds fill `real`,
/// integer kinds fill `integer`.
struct DistanceRow {
  std::size_t query = 0;
  DistanceKind kind = DistanceKind::euclidean;
  std::vector<double> real;
  std::vector<std::uint32_t> integer;

  bool is_integer() const noexcept { return is_integer_kind(kind); }
  std::size_t size() const noexcept { return is_integer() ? integer.size() : real.size(); }
  double value(std::size_t j) const noexcept {
    return is_integer() ? double(integer[j]) : real[j];
  }
};

SubspaceDistanceMatrix euclidean_matrix(const FeatureSet& a, const FeatureSet& b,
                                        std::size_t num_subspaces);

DistanceLUT build_lut(const Codebook& codebook);

/// Throws CorruptionError on a non-finite entry.
IntLUT quantize_lut(const DistanceLUT& lut);

double scr_distance(std::span<const std::uint16_t> code_a, std::span<const std::uint16_t> code_b,
                    const DistanceLUT& lut);
std::uint32_t int_scr_distance(std::span<const std::uint16_t> code_a,
                               std::span<const std::uint16_t> code_b, const IntLUT& lut);

DistanceRow distance_row(std::span<const std::uint16_t> query_code, const CodeMatrix& gallery,
                         const DistanceLUT& lut, std::size_t query_index = 0);
DistanceRow distance_row(std::span<const std::uint16_t> query_code, const CodeMatrix& gallery,
                         const IntLUT& lut, std::size_t query_index = 0);

/// Squared Euclidean distances from `query` to every gallery row.
DistanceRow exact_distance_row(std::span<const float> query, const FeatureSet& gallery,
                               std::size_t query_index = 0);

/// Bit b is set when the sum of the b-th contiguous block of D/bits
/// coordinates is positive. `bits` must divide D.
BitMatrix binarize(const FeatureSet& set, std::size_t bits);

std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

DistanceRow hamming_distance_row(std::span<const std::uint64_t> query_bits, std::size_t bit_length,
                                 const BitMatrix& gallery, std::size_t query_index = 0);

void save_lut(const DistanceLUT& lut, const std::filesystem::path& path);
void save_lut(const IntLUT& lut, const std::filesystem::path& path);
std::variant<DistanceLUT, IntLUT> load_lut(const std::filesystem::path& path);

}  // namespace scr
