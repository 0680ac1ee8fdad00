#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <random>
#include <sstream>

#include "scr/error.hpp"
#include "scr/evaluator.hpp"

using namespace scr;

namespace {

RankResult ranking(std::vector<std::uint32_t> order, std::size_t query = 0) {
  RankResult r;
  r.query = query;
  r.order = std::move(order);
  r.distances.assign(r.order.size(), 0.0);
  return r;
}

FeatureSet labels(std::vector<std::uint32_t> pids, std::vector<std::uint16_t> cams) {
  std::vector<float> values(pids.size(), 0.0f);
  return FeatureSet(1, std::move(values), std::move(pids), std::move(cams));
}

std::pair<EncodedSet, EncodedSet> small_problem(const Codebook** cb_out = nullptr) {
  SynthSpec s;
  s.num_identities = 15;
  s.instances_per_identity = 6;
  s.dim = 16;
  s.cluster_stddev = 0.4;
  s.identity_separation = 2.0;
  s.rng_seed = 9;
  const auto [q, g] = split_query_gallery(generate_synthetic(s), 0.3, 2);
  KMeansOptions o;
  o.num_subspaces = 4;
  o.num_centroids = 16;
  static Codebook cb = train_codebook(g, o).first;
  if (cb_out) *cb_out = &cb;
  return {encode_set(q, &cb, 16), encode_set(g, &cb, 16)};
}

}  // namespace

TEST(Metrics, AveragePrecisionHandExample) {
  const auto query = labels({1}, {0});
  const auto gallery = labels({1, 2, 1, 3}, {1, 1, 1, 0});
  const std::vector<RankResult> r = {ranking({0, 1, 2, 3})};
  const auto report = evaluate_rankings(r, query, gallery);
  EXPECT_NEAR(report.mAP, 5.0 / 6.0, 1e-12);  // (1/1 + 2/3) / 2
  EXPECT_DOUBLE_EQ(report.rank(1), 1.0);
  EXPECT_EQ(report.num_queries_evaluated, 1u);
}

TEST(Metrics, SameCameraSameIdIsJunk) {
  const auto query = labels({1}, {0});
  const auto gallery = labels({1, 2, 1}, {0, 1, 1});
  const std::vector<RankResult> r = {ranking({0, 1, 2})};
  const auto report = evaluate_rankings(r, query, gallery);
  EXPECT_DOUBLE_EQ(report.rank(1), 0.0);
  EXPECT_DOUBLE_EQ(report.rank(2), 1.0);
  EXPECT_NEAR(report.mAP, 0.5, 1e-12);
}

TEST(Metrics, UnmatchableQueriesSkipped) {
  const auto query = labels({1, 5}, {0, 0});
  const auto gallery = labels({1, 5}, {1, 0});
  const std::vector<RankResult> r = {ranking({0, 1}, 0), ranking({1, 0}, 1)};
  const auto report = evaluate_rankings(r, query, gallery);
  EXPECT_EQ(report.num_queries_evaluated, 1u);
  EXPECT_EQ(report.num_queries_skipped, 1u);

  const auto lonely = labels({9}, {0});
  const std::vector<RankResult> only = {ranking({0, 1}, 0)};
  EXPECT_THROW(evaluate_rankings(only, lonely, gallery), ProtocolError);
}

TEST(Metrics, CmcIsMonotoneAndEndsAtOne) {
  auto [q, g] = small_problem();
  const auto report = evaluate(q, g, {}, DistanceKind::euclidean, RankAlgorithm::comparison);
  for (std::size_t k = 1; k < report.cmc.size(); ++k) EXPECT_GE(report.cmc[k], report.cmc[k - 1]);
  EXPECT_DOUBLE_EQ(report.cmc.back(), 1.0);
  EXPECT_GE(report.mAP, 0.0);
  EXPECT_LE(report.mAP, 1.0);
}

TEST(Metrics, GalleryOrderDoesNotMatter) {
  auto [q, g] = small_problem();
  const auto base = evaluate(q, g, {}, DistanceKind::euclidean, RankAlgorithm::comparison);

  std::vector<std::size_t> perm(g.features.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto shuffled = encode_set(g.features.subset(perm), nullptr, 0);
  const auto again = evaluate(q, shuffled, {}, DistanceKind::euclidean, RankAlgorithm::comparison);
  EXPECT_NEAR(again.mAP, base.mAP, 1e-12);
  EXPECT_EQ(again.cmc, base.cmc);
}

TEST(Evaluate, AllPipelinesAndRankersAgree) {
  const Codebook* cb = nullptr;
  auto [q, g] = small_problem(&cb);
  SearchTables tables;
  tables.lut = build_lut(*cb);
  tables.int_lut = quantize_lut(*tables.lut);
  for (auto kind : {DistanceKind::int_scr, DistanceKind::hamming}) {
    const auto counting = evaluate(q, g, tables, kind, RankAlgorithm::counting);
    const auto comparison = evaluate(q, g, tables, kind, RankAlgorithm::comparison);
    EXPECT_EQ(counting.cmc, comparison.cmc);
    EXPECT_DOUBLE_EQ(counting.mAP, comparison.mAP);
  }
  EXPECT_NO_THROW(evaluate(q, g, tables, DistanceKind::scr, RankAlgorithm::comparison));
  EXPECT_THROW(evaluate(q, g, tables, DistanceKind::scr, RankAlgorithm::counting), ContractError);
  EXPECT_THROW(evaluate(q, g, {}, DistanceKind::int_scr, RankAlgorithm::counting), ConfigError);
  EXPECT_EQ(max_distance(DistanceKind::int_scr, g, tables), 255u * 4u);
  EXPECT_EQ(max_distance(DistanceKind::hamming, g, tables), 16u);
}

TEST(Evaluate, DefaultRankers) {
  EXPECT_EQ(default_ranker(DistanceKind::int_scr), RankAlgorithm::counting);
  EXPECT_EQ(default_ranker(DistanceKind::hamming), RankAlgorithm::counting);
  EXPECT_EQ(default_ranker(DistanceKind::scr), RankAlgorithm::comparison);
  EXPECT_EQ(default_ranker(DistanceKind::euclidean), RankAlgorithm::comparison);
}

TEST(Evaluate, CsvHeaderAndRow) {
  auto [q, g] = small_problem();
  const std::vector<EvalReport> reports = {
      evaluate(q, g, {}, DistanceKind::euclidean, RankAlgorithm::comparison)};
  std::ostringstream out;
  write_eval_csv(reports, out);
  const auto text = out.str();
  EXPECT_EQ(text.rfind("pipeline,ranker,queries,skipped,mAP,rank1,rank5,rank10,rank20\n", 0), 0u);
  EXPECT_NE(text.find("\nexact,comparison,"), std::string::npos);
}

TEST(Evaluate, NoPipelineBeatsExactBeyondNoise) {
  double exact = 0.0, best_other = 0.0;
  std::array<double, 3> other{};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthSpec s;
    s.num_identities = 30;
    s.instances_per_identity = 6;
    s.dim = 32;
    s.cluster_stddev = 0.6;
    s.rng_seed = seed;
    const auto [q, g] = split_query_gallery(generate_synthetic(s), 0.3, seed);
    KMeansOptions o;
    o.num_centroids = 32;
    o.rng_seed = seed;
    const auto cb = train_codebook(g, o).first;
    SearchTables tables;
    tables.lut = build_lut(cb);
    tables.int_lut = quantize_lut(*tables.lut);
    const auto qe = encode_set(q, &cb, 32);
    const auto ge = encode_set(g, &cb, 32);
    exact += evaluate(qe, ge, tables, DistanceKind::euclidean, RankAlgorithm::comparison).mAP / 3;
    const DistanceKind kinds[] = {DistanceKind::scr, DistanceKind::int_scr, DistanceKind::hamming};
    for (std::size_t k = 0; k < 3; ++k) {
      other[k] += evaluate(qe, ge, tables, kinds[k], default_ranker(kinds[k])).mAP / 3;
    }
  }
  for (double v : other) best_other = std::max(best_other, v);
  EXPECT_LE(best_other, exact + 0.02);
}

TEST(Census, IntegerDistinctValuesBounded) {
  const Codebook* cb = nullptr;
  auto [q, g] = small_problem(&cb);
  SearchTables tables;
  tables.lut = build_lut(*cb);
  tables.int_lut = quantize_lut(*tables.lut);
  std::vector<DistanceRow> rows;
  for (std::size_t i = 0; i < q.features.size(); ++i) {
    rows.push_back(compute_distance_row(DistanceKind::euclidean, q, i, g, tables));
    rows.push_back(compute_distance_row(DistanceKind::int_scr, q, i, g, tables));
  }
  const auto [reals, ints] = distinct_distance_census(rows);
  EXPECT_LE(ints, 255u * 4u + 1u);
  EXPECT_GE(reals, 5 * ints);
}

TEST(Bench, OneRowPerSizeAndPipeline) {
  BenchConfig config;
  config.dim = 16;
  config.num_subspaces = 4;
  config.num_centroids = 16;
  config.num_queries = 3;
  config.train_sample = 200;
  config.kmeans_iters = 3;
  const std::vector<std::size_t> sizes = {100, 300};
  const std::vector<DistanceKind> pipelines = {DistanceKind::euclidean, DistanceKind::int_scr,
                                               DistanceKind::hamming};
  const auto report = bench_ranking(sizes, pipelines, config);
  ASSERT_EQ(report.rows.size(), 6u);
  for (const auto& row : report.rows) {
    EXPECT_GT(row.queries_per_second, 0.0);
    EXPECT_GE(row.mean_query_time_s, row.mean_sort_time_s);
    if (row.pipeline == DistanceKind::int_scr) {
      EXPECT_EQ(row.code_length_bits, 16u);
      EXPECT_EQ(row.ranker, RankAlgorithm::counting);
    }
    if (row.pipeline == DistanceKind::hamming) EXPECT_EQ(row.code_length_bits, 16u);
  }
  std::ostringstream csv;
  report.write_csv(csv);
  const auto text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

TEST(Bench, OversizedGallerySkippedWithNotice) {
  BenchConfig config;
  config.dim = 16;
  config.num_centroids = 16;
  config.num_queries = 1;
  config.memory_limit_bytes = 1 << 16;
  const std::vector<std::size_t> sizes = {1000000};
  const std::vector<DistanceKind> pipelines = {DistanceKind::euclidean};
  const auto report = bench_ranking(sizes, pipelines, config);
  EXPECT_TRUE(report.rows.empty());
  ASSERT_EQ(report.notices.size(), 1u);
}
