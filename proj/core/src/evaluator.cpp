#include "scr/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <new>
#include <ostream>
#include <set>
#include <string>
#include <unistd.h>

#include "scr/error.hpp"

namespace scr {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t physical_memory_bytes() {
  const long pages = ::sysconf(_SC_PHYS_PAGES);
  const long page = ::sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page <= 0) return std::size_t{1} << 32;
  return static_cast<std::size_t>(pages) * static_cast<std::size_t>(page);
}

FeatureSet synthetic_gallery(std::size_t n, const BenchConfig& config) {
  SynthSpec spec;
  spec.dim = static_cast<std::uint32_t>(config.dim);
  spec.cluster_stddev = config.cluster_stddev;
  spec.identity_separation = config.identity_separation;
  spec.rng_seed = config.rng_seed + n;
  const std::size_t per = std::max<std::size_t>(1, config.instances_per_identity);
  if (n % per == 0) {
    spec.num_identities = static_cast<std::uint32_t>(n / per);
    spec.instances_per_identity = static_cast<std::uint32_t>(per);
    return generate_synthetic(spec);
  }
  spec.num_identities = static_cast<std::uint32_t>(n);
  spec.instances_per_identity = 1;
  return generate_synthetic(spec);
}

/// Evenly spaced sample of row indices.
std::vector<std::size_t> spread(std::size_t n, std::size_t count) {
  count = std::min(count, n);
  std::vector<std::size_t> rows(count);
  for (std::size_t k = 0; k < count; ++k) rows[k] = k * n / count;
  return rows;
}

}  // namespace

EncodedSet encode_set(FeatureSet features, const Codebook* codebook, std::size_t hamming_bits) {
  EncodedSet out{std::move(features), std::nullopt, std::nullopt};
  if (codebook) out.codes = encode(out.features, *codebook);
  if (hamming_bits > 0) out.bits = binarize(out.features, hamming_bits);
  return out;
}

RankAlgorithm default_ranker(DistanceKind kind) noexcept {
  return is_integer_kind(kind) ? RankAlgorithm::counting : RankAlgorithm::comparison;
}

DistanceRow compute_distance_row(DistanceKind kind, const EncodedSet& query,
                                 std::size_t query_index, const EncodedSet& gallery,
                                 const SearchTables& tables) {
  switch (kind) {
    case DistanceKind::euclidean:
      return exact_distance_row(query.features.row(query_index), gallery.features, query_index);
    case DistanceKind::scr:
      if (!query.codes || !gallery.codes || !tables.lut) {
        throw ConfigError("scr pipeline needs query codes, gallery codes and a real table");
      }
      return distance_row(query.codes->row(query_index), *gallery.codes, *tables.lut,
                          query_index);
    case DistanceKind::int_scr:
      if (!query.codes || !gallery.codes || !tables.int_lut) {
        throw ConfigError("intscr pipeline needs query codes, gallery codes and an integer table");
      }
      return distance_row(query.codes->row(query_index), *gallery.codes, *tables.int_lut,
                          query_index);
    case DistanceKind::hamming:
      if (!query.bits || !gallery.bits) {
        throw ConfigError("hamming pipeline needs binarized queries and gallery");
      }
      return hamming_distance_row(query.bits->row(query_index), query.bits->bits(),
                                  *gallery.bits, query_index);
  }
  throw ConfigError("unknown pipeline");
}

std::uint32_t max_distance(DistanceKind kind, const EncodedSet& gallery,
                           const SearchTables& tables) {
  if (kind == DistanceKind::int_scr) {
    if (!tables.int_lut) throw ConfigError("intscr pipeline needs an integer table");
    return tables.int_lut->max_distance();
  }
  if (kind == DistanceKind::hamming) {
    if (!gallery.bits) throw ConfigError("hamming pipeline needs a binarized gallery");
    return static_cast<std::uint32_t>(gallery.bits->bits());
  }
  throw ContractError("pipeline '" + std::string(to_string(kind)) +
                      "' has real distances; counting sort does not apply");
}

double EvalReport::rank(std::size_t k) const {
  if (cmc.empty() || k == 0) return 0.0;
  return cmc[std::min(k, cmc.size()) - 1];
}

EvalReport evaluate_rankings(std::span<const RankResult> rankings, const FeatureSet& query,
                             const FeatureSet& gallery) {
  if (rankings.size() != query.size()) {
    throw ArgumentError("expected one ranking per query");
  }
  const std::size_t n = gallery.size();
  EvalReport report;
  std::vector<double> hits_at(n, 0.0);
  double ap_sum = 0.0;

  for (const auto& ranking : rankings) {
    if (ranking.size() != n) throw ArgumentError("rankings must cover the whole gallery");
    const auto qpid = query.person_ids()[ranking.query];
    const auto qcam = query.camera_ids()[ranking.query];

    std::size_t relevant = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (gallery.person_ids()[j] == qpid && gallery.camera_ids()[j] != qcam) ++relevant;
    }
    if (relevant == 0) {
      ++report.num_queries_skipped;
      continue;
    }

    std::size_t position = 0;
    std::size_t found = 0;
    std::size_t first_hit = n;
    double ap = 0.0;
    for (auto j : ranking.order) {
      const bool same_id = gallery.person_ids()[j] == qpid;
      const bool same_cam = gallery.camera_ids()[j] == qcam;
      if (same_id && same_cam) continue;
      ++position;
      if (!same_id) continue;
      ++found;
      if (first_hit == n) first_hit = position - 1;
      ap += double(found) / double(position);
    }
    ap_sum += ap / double(relevant);
    hits_at[first_hit] += 1.0;
    ++report.num_queries_evaluated;
  }
  if (report.num_queries_evaluated == 0) {
    throw ProtocolError("no query has a valid cross-camera match in the gallery");
  }

  const double q = double(report.num_queries_evaluated);
  report.mAP = ap_sum / q;
  report.cmc.resize(n);
  double running = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    running += hits_at[k];
    report.cmc[k] = running / q;
  }
  for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{10}, std::size_t{20}, n}) {
    if (k <= n) report.rank_k[k] = report.cmc[k - 1];
  }
  return report;
}

EvalReport evaluate(const EncodedSet& query, const EncodedSet& gallery,
                    const SearchTables& tables, DistanceKind kind, RankAlgorithm ranker) {
  if (query.features.dim() != gallery.features.dim()) {
    throw ConfigError("query and gallery dimensions differ");
  }
  std::vector<RankResult> rankings;
  rankings.reserve(query.features.size());
  std::optional<CountingRanker> counting;
  if (ranker == RankAlgorithm::counting) counting.emplace(max_distance(kind, gallery, tables));
  for (std::size_t i = 0; i < query.features.size(); ++i) {
    const auto row = compute_distance_row(kind, query, i, gallery, tables);
    rankings.push_back(counting ? counting->rank(row) : comparison_sort_rank(row));
  }
  auto report = evaluate_rankings(rankings, query.features, gallery.features);
  report.kind = kind;
  report.ranker = ranker;
  return report;
}

void write_eval_csv(std::span<const EvalReport> reports, std::ostream& out) {
  out << "pipeline,ranker,queries,skipped,mAP,rank1,rank5,rank10,rank20\n";
  const auto old_precision = out.precision(6);
  for (const auto& r : reports) {
    out << to_string(r.kind) << ',' << to_string(r.ranker) << ',' << r.num_queries_evaluated
        << ',' << r.num_queries_skipped << ',' << r.mAP << ',' << r.rank(1) << ',' << r.rank(5)
        << ',' << r.rank(10) << ',' << r.rank(20) << '\n';
  }
  out.precision(old_precision);
}

void write_eval_table(std::span<const EvalReport> reports, std::ostream& out) {
  out << std::left << std::setw(10) << "pipeline" << std::setw(12) << "ranker" << std::right
      << std::setw(9) << "queries" << std::setw(9) << "mAP" << std::setw(9) << "R1"
      << std::setw(9) << "R5" << std::setw(9) << "R10" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(10) << to_string(r.kind) << std::setw(12)
        << to_string(r.ranker) << std::right << std::setw(9) << r.num_queries_evaluated
        << std::setw(9) << r.mAP << std::setw(9) << r.rank(1) << std::setw(9) << r.rank(5)
        << std::setw(9) << r.rank(10) << '\n';
  }
  out << std::defaultfloat;
}

void BenchReport::write_csv(std::ostream& out) const {
  out << "gallery_size,pipeline,ranker,code_length_bits,build_time_s,mean_distance_time_s,"
         "mean_sort_time_s,mean_query_time_s,queries_per_second\n";
  const auto old_precision = out.precision(9);
  for (const auto& r : rows) {
    out << r.gallery_size << ',' << to_string(r.pipeline) << ',' << to_string(r.ranker) << ','
        << r.code_length_bits << ',' << r.build_time_s << ',' << r.mean_distance_time_s << ','
        << r.mean_sort_time_s << ',' << r.mean_query_time_s << ',' << r.queries_per_second
        << '\n';
  }
  out.precision(old_precision);
}

void BenchReport::write_table(std::ostream& out) const {
  out << std::right << std::setw(10) << "gallery" << std::setw(9) << "pipeline" << std::setw(7)
      << "bits" << std::setw(12) << "build(s)" << std::setw(13) << "dist(ms)" << std::setw(13)
      << "sort(ms)" << std::setw(13) << "query(ms)" << std::setw(12) << "qps" << '\n';
  for (const auto& r : rows) {
    out << std::setw(10) << r.gallery_size << std::setw(9) << to_string(r.pipeline)
        << std::setw(7) << r.code_length_bits << std::fixed << std::setprecision(3)
        << std::setw(12) << r.build_time_s << std::setw(13) << r.mean_distance_time_s * 1e3
        << std::setw(13) << r.mean_sort_time_s * 1e3 << std::setw(13)
        << r.mean_query_time_s * 1e3 << std::setprecision(1) << std::setw(12)
        << r.queries_per_second << std::defaultfloat << '\n';
  }
  for (const auto& n : notices) out << "note: " << n << '\n';
}

BenchReport bench_ranking(std::span<const std::size_t> gallery_sizes,
                          std::span<const DistanceKind> pipelines, const BenchConfig& config) {
  if (config.num_queries == 0) throw ArgumentError("bench needs at least one query");
  if (config.warmup_passes == 0) throw ArgumentError("bench needs at least one warm-up pass");
  if (config.dim % config.num_subspaces != 0) {
    throw ConfigError("M = " + std::to_string(config.num_subspaces) + " does not divide D = " +
                      std::to_string(config.dim));
  }
  const std::size_t limit =
      config.memory_limit_bytes ? config.memory_limit_bytes : physical_memory_bytes() / 2;
  const std::size_t code_bits =
      config.num_subspaces * static_cast<std::size_t>(std::ceil(std::log2(
                                 double(std::max<std::size_t>(config.num_centroids, 2)))));
  const std::size_t hamming_bits = config.hamming_bits ? config.hamming_bits : code_bits;

  BenchReport report;
  for (const auto n : gallery_sizes) {
    if (n == 0) {
      report.notices.push_back("gallery size 0 skipped");
      continue;
    }
    const std::size_t estimate = n * config.dim * sizeof(float) * 2 +
                                 n * (config.num_subspaces * 2 + 8 + 6 + 40);
    if (estimate > limit) {
      report.notices.push_back("gallery size " + std::to_string(n) + " skipped: needs ~" +
                               std::to_string(estimate >> 20) + " MiB, limit " +
                               std::to_string(limit >> 20) + " MiB");
      continue;
    }
    try {
      const auto gallery_features = synthetic_gallery(n, config);
      const auto query_rows = spread(n, config.num_queries);
      EncodedSet query{gallery_features.subset(query_rows), std::nullopt, std::nullopt};

      // Offline stage: codebook on a sample, gallery codes, tables, bits.
      double codebook_time = 0.0, encode_time = 0.0, lut_time = 0.0, quantize_time = 0.0,
             binarize_time = 0.0, copy_time = 0.0;
      // Exact search keeps its own copy of the float gallery.
      auto staged = Clock::now();
      EncodedSet gallery{gallery_features, std::nullopt, std::nullopt};
      copy_time = seconds_since(staged);
      SearchTables tables;
      const bool wants_codes =
          std::any_of(pipelines.begin(), pipelines.end(), [](DistanceKind k) {
            return k == DistanceKind::scr || k == DistanceKind::int_scr;
          });
      if (wants_codes) {
        auto t = Clock::now();
        KMeansOptions km;
        km.num_subspaces = config.num_subspaces;
        km.num_centroids = config.num_centroids;
        km.max_iters = config.kmeans_iters;
        km.rng_seed = config.rng_seed;
        const auto sample = gallery_features.subset(spread(n, config.train_sample));
        auto [codebook, km_report] = train_codebook(sample, km);
        for (const auto& w : km_report.warnings) report.notices.push_back(w);
        codebook_time = seconds_since(t);
        t = Clock::now();
        gallery.codes = encode(gallery.features, codebook);
        encode_time = seconds_since(t);
        query.codes = encode(query.features, codebook);
        t = Clock::now();
        tables.lut = build_lut(codebook);
        lut_time = seconds_since(t);
        t = Clock::now();
        tables.int_lut = quantize_lut(*tables.lut);
        quantize_time = seconds_since(t);
      }
      if (std::find(pipelines.begin(), pipelines.end(), DistanceKind::hamming) !=
          pipelines.end()) {
        if (config.dim % hamming_bits != 0) {
          report.notices.push_back("hamming skipped: " + std::to_string(hamming_bits) +
                                   " bits do not divide D");
        } else {
          auto t = Clock::now();
          gallery.bits = binarize(gallery.features, hamming_bits);
          binarize_time = seconds_since(t);
          query.bits = binarize(query.features, hamming_bits);
        }
      }
      for (const auto kind : pipelines) {
        if (kind == DistanceKind::hamming && !gallery.bits) continue;
        BenchRow row;
        row.gallery_size = n;
        row.pipeline = kind;
        row.ranker = default_ranker(kind);
        switch (kind) {
          case DistanceKind::euclidean:
            row.code_length_bits = 32 * config.dim;
            row.build_time_s = copy_time;
            break;
          case DistanceKind::scr:
            row.code_length_bits = code_bits;
            row.build_time_s = codebook_time + encode_time + lut_time;
            break;
          case DistanceKind::int_scr:
            row.code_length_bits = code_bits;
            row.build_time_s = codebook_time + encode_time + lut_time + quantize_time;
            break;
          case DistanceKind::hamming:
            row.code_length_bits = hamming_bits;
            row.build_time_s = binarize_time;
            break;
        }
        std::optional<CountingRanker> counting;
        if (row.ranker == RankAlgorithm::counting) {
          counting.emplace(max_distance(kind, gallery, tables));
        }
        auto run = [&](std::size_t q, double* dist_s, double* sort_s) {
          auto t = Clock::now();
          const auto distances = compute_distance_row(kind, query, q, gallery, tables);
          const double dt = seconds_since(t);
          t = Clock::now();
          const auto ranked = counting ? counting->rank(distances) : comparison_sort_rank(distances);
          const double st = seconds_since(t);
          if (ranked.order.empty()) throw ContractError("empty ranking");
          if (dist_s) *dist_s += dt;
          if (sort_s) *sort_s += st;
        };
        for (std::size_t w = 0; w < config.warmup_passes; ++w) run(0, nullptr, nullptr);
        double dist_total = 0.0, sort_total = 0.0;
        for (std::size_t q = 0; q < query.features.size(); ++q) run(q, &dist_total, &sort_total);
        const double queries = double(query.features.size());
        row.mean_distance_time_s = dist_total / queries;
        row.mean_sort_time_s = sort_total / queries;
        row.mean_query_time_s = row.mean_distance_time_s + row.mean_sort_time_s;
        row.queries_per_second =
            row.mean_query_time_s > 0.0 ? 1.0 / row.mean_query_time_s : 0.0;
        report.rows.push_back(row);
      }
    } catch (const std::bad_alloc&) {
      report.notices.push_back("gallery size " + std::to_string(n) +
                               " skipped: allocation failed");
    }
  }
  return report;
}

std::pair<std::size_t, std::size_t> distinct_distance_census(std::span<const DistanceRow> rows) {
  std::set<double> reals;
  std::set<std::uint32_t> ints;
  for (const auto& row : rows) {
    if (row.is_integer()) {
      ints.insert(row.integer.begin(), row.integer.end());
    } else {
      reals.insert(row.real.begin(), row.real.end());
    }
  }
  return {reals.size(), ints.size()};
}

}  // namespace scr
