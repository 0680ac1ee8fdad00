#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scr/distance.hpp"
#include "scr/feature_store.hpp"
#include "scr/quantizer.hpp"
#include "scr/ranker.hpp"

namespace scr {

/// A labeled feature set together with whichever encodings a pipeline needs.
struct EncodedSet {
  FeatureSet features;
  std::optional<CodeMatrix> codes;
  std::optional<BitMatrix> bits;
};

/// Encodes with `codebook` when given, and sign-binarizes to `hamming_bits`
/// when non-zero.
EncodedSet encode_set(FeatureSet features, const Codebook* codebook, std::size_t hamming_bits);

struct SearchTables {
  std::optional<DistanceLUT> lut;
  std::optional<IntLUT> int_lut;
};

/// The ranker each pipeline pairs with: counting sort for integer distances,
/// comparison sort for real ones.
RankAlgorithm default_ranker(DistanceKind kind) noexcept;

/// Distances from query row `query_index` to the whole gallery. Throws
/// ConfigError when an encoding or table the pipeline needs is missing.
DistanceRow compute_distance_row(DistanceKind kind, const EncodedSet& query,
                                 std::size_t query_index, const EncodedSet& gallery,
                                 const SearchTables& tables);

/// Counting-sort bound for integer pipelines: 255*M for intscr, bits for hamming.
std::uint32_t max_distance(DistanceKind kind, const EncodedSet& gallery,
                           const SearchTables& tables);

struct EvalReport {
  DistanceKind kind = DistanceKind::euclidean;
  RankAlgorithm ranker = RankAlgorithm::comparison;
  /// cmc[k-1] is the Rank-k hit rate, for k = 1..gallery size.
  std::vector<double> cmc;
  /// Rank-k for k in {1, 5, 10, 20} that fit the gallery, plus the gallery size.
  std::map<std::size_t, double> rank_k;
  double mAP = 0.0;
  std::size_t num_queries_evaluated = 0;
  std::size_t num_queries_skipped = 0;

  double rank(std::size_t k) const;
};

/// Metrics over precomputed rankings (one per query row, full length).
///
/// Gallery items sharing both person id and camera with the query are junk and
/// removed before scoring. Queries with no remaining same-id item are skipped
/// and counted; ProtocolError if every query is skipped.
EvalReport evaluate_rankings(std::span<const RankResult> rankings, const FeatureSet& query,
                             const FeatureSet& gallery);

/// Scores every query against the gallery with one pipeline.
EvalReport evaluate(const EncodedSet& query, const EncodedSet& gallery,
                    const SearchTables& tables, DistanceKind kind, RankAlgorithm ranker);

/// Header `pipeline,ranker,queries,skipped,mAP,rank1,rank5,rank10,rank20`.
void write_eval_csv(std::span<const EvalReport> reports, std::ostream& out);
void write_eval_table(std::span<const EvalReport> reports, std::ostream& out);

struct BenchConfig {
  std::size_t dim = 128;
  std::size_t num_subspaces = 4;
  std::size_t num_centroids = 256;
  /// Zero means "same as the PQ code length".
  std::size_t hamming_bits = 0;
  std::size_t num_queries = 10;
  std::size_t warmup_passes = 1;
  /// Rows sampled from the gallery to train the codebook.
  std::size_t train_sample = 4096;
  std::size_t kmeans_iters = 10;
  std::size_t instances_per_identity = 10;
  double cluster_stddev = 0.3;
  double identity_separation = 2.0;
  /// Sizes whose estimated footprint exceeds this are skipped with a notice.
  std::size_t memory_limit_bytes = 0;
  std::uint64_t rng_seed = 0;
};

struct BenchRow {
  std::size_t gallery_size = 0;
  DistanceKind pipeline = DistanceKind::euclidean;
  RankAlgorithm ranker = RankAlgorithm::comparison;
  std::size_t code_length_bits = 0;
  double build_time_s = 0.0;
  double mean_distance_time_s = 0.0;
  double mean_sort_time_s = 0.0;
  double mean_query_time_s = 0.0;
  double queries_per_second = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> notices;

  /// Header `gallery_size,pipeline,ranker,code_length_bits,build_time_s,
  /// mean_distance_time_s,mean_sort_time_s,mean_query_time_s,queries_per_second`.
  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

/// Times distance computation and ranking per query for each (size, pipeline)
/// on synthetic galleries. Offline structures (codebook, codes, tables, bits)
/// are built untimed for the query phase and reported as build_time_s.
BenchReport bench_ranking(std::span<const std::size_t> gallery_sizes,
                          std::span<const DistanceKind> pipelines, const BenchConfig& config);

/// Distinct values among the real rows and among the integer rows.
std::pair<std::size_t, std::size_t> distinct_distance_census(std::span<const DistanceRow> rows);

}  // namespace scr
