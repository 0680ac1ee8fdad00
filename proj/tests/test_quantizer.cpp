#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "scr/error.hpp"
#include "scr/quantizer.hpp"

namespace fs = std::filesystem;
using namespace scr;

namespace {

FeatureSet labelled(std::size_t dim, std::vector<float> values) {
  const std::size_t n = values.size() / dim;
  std::vector<std::uint32_t> pids(n);
  std::vector<std::uint16_t> cams(n);
  for (std::size_t i = 0; i < n; ++i) {
    pids[i] = std::uint32_t(i);
    cams[i] = std::uint16_t(i % 2);
  }
  return FeatureSet(dim, std::move(values), std::move(pids), std::move(cams));
}

FeatureSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(n * dim);
  for (auto& x : v) x = g(rng);
  return labelled(dim, std::move(v));
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("scr_q_" + std::to_string(::getpid()) + "_" + name);
}

KMeansOptions opts(std::size_t m, std::size_t c, std::uint64_t seed = 0) {
  KMeansOptions o;
  o.num_subspaces = m;
  o.num_centroids = c;
  o.rng_seed = seed;
  return o;
}

}  // namespace

TEST(SplitSubspaces, ContiguousColumns) {
  const auto set = labelled(4, {0, 1, 2, 3, 4, 5, 6, 7});
  const auto subs = split_subspaces(set, 2);
  ASSERT_EQ(subs.size(), 2u);
  EXPECT_EQ(subs[1].cols, 2u);
  EXPECT_EQ(subs[1].values, (std::vector<float>{2, 3, 6, 7}));
  EXPECT_THROW(split_subspaces(set, 3), ConfigError);
  EXPECT_THROW(split_subspaces(set, 0), ConfigError);
}

TEST(TrainCodebook, RejectsBadConfig) {
  const auto set = random_set(10, 4, 1);
  EXPECT_THROW(train_codebook(set, opts(3, 2)), ConfigError);
  EXPECT_THROW(train_codebook(set, opts(2, 0)), ConfigError);
}

TEST(TrainCodebook, TwoClustersMatchExhaustiveOptimum) {
  const auto set = labelled(2, {0, 0, 0, 0.1f, 10, 10, 10, 10.1f});
  const auto [cb, report] = train_codebook(set, opts(1, 2));
  std::vector<std::pair<float, float>> centroids;
  for (std::size_t c = 0; c < 2; ++c) {
    centroids.emplace_back(cb.centroid(0, c)[0], cb.centroid(0, c)[1]);
  }
  std::sort(centroids.begin(), centroids.end());
  EXPECT_NEAR(centroids[0].first, 0.0, 1e-6);
  EXPECT_NEAR(centroids[0].second, 0.05, 1e-6);
  EXPECT_NEAR(centroids[1].first, 10.0, 1e-6);
  EXPECT_NEAR(centroids[1].second, 10.05, 1e-6);
  EXPECT_NEAR(report.total_quantization_error, 0.01, 1e-6);

  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < set.size(); ++i) {
    pts.emplace_back(set.row(i).begin(), set.row(i).end());
  }
  EXPECT_NEAR(report.total_quantization_error, oracle::exhaustive_two_means(pts).error, 1e-6);
}

TEST(TrainCodebook, ReportedErrorMatchesRecomputation) {
  const auto set = random_set(300, 16, 4);
  const auto [cb, report] = train_codebook(set, opts(4, 8, 2));
  const auto codes = encode(set, cb);
  EXPECT_NEAR(report.total_quantization_error, quantization_error(set, codes, cb),
              1e-6 * report.total_quantization_error);
  double per = 0.0;
  for (double e : report.per_subspace_error) per += e;
  EXPECT_NEAR(per, report.total_quantization_error, 1e-9 * per);
}

TEST(TrainCodebook, ErrorTraceNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto set = random_set(200, 8, 10 + seed);
    auto o = opts(2, 16, seed);
    o.tol = 0.0;
    const auto report = train_codebook(set, o).second;
    ASSERT_GE(report.error_trace.size(), 2u);
    for (std::size_t i = 1; i < report.error_trace.size(); ++i) {
      EXPECT_LE(report.error_trace[i], report.error_trace[i - 1] * (1 + 1e-12));
    }
  }
}

TEST(TrainCodebook, OneCentroidPerDistinctPointIsLossless) {
  const auto set = random_set(20, 6, 3);
  const auto [cb, report] = train_codebook(set, opts(3, 20));
  EXPECT_EQ(report.total_quantization_error, 0.0);
  EXPECT_EQ(reconstruct(encode(set, cb), cb),
            std::vector<float>(set.values().begin(), set.values().end()));
}

TEST(TrainCodebook, ClampsCentroidsToDistinctSubvectors) {
  // Sub-space 1 has only two distinct sub-vectors.
  const auto set = labelled(2, {0, 5, 1, 5, 2, 6, 3, 6});
  const auto [cb, report] = train_codebook(set, opts(2, 4));
  EXPECT_EQ(cb.num_centroids(), 2u);
  EXPECT_EQ(report.num_centroids, 2u);
  EXPECT_FALSE(report.warnings.empty());
}

TEST(TrainCodebook, WarmStartFromConvergedCodebookStopsImmediately) {
  const auto set = random_set(150, 8, 6);
  auto o = opts(2, 8, 1);
  o.tol = 0.0;
  o.max_iters = 200;
  const auto [cb, first] = train_codebook(set, o);
  const auto [again, second] = train_codebook(set, o, &cb);
  EXPECT_EQ(second.iterations_run, 1u);
  EXPECT_EQ(again, cb);
  EXPECT_DOUBLE_EQ(second.total_quantization_error, first.total_quantization_error);
}

TEST(TrainCodebook, WarmStartShapeMismatch) {
  const auto set = random_set(50, 8, 6);
  const auto cb = train_codebook(set, opts(2, 4)).first;
  EXPECT_THROW(train_codebook(set, opts(2, 8), &cb), ConfigError);
  EXPECT_THROW(train_codebook(set, opts(4, 4), &cb), ConfigError);
}

TEST(TrainCodebook, SeededDeterminism) {
  const auto set = random_set(100, 8, 8);
  EXPECT_EQ(train_codebook(set, opts(2, 8, 5)).first, train_codebook(set, opts(2, 8, 5)).first);
}

TEST(TrainCodebook, MoreCentroidsLowerError) {
  const auto set = random_set(400, 16, 12);
  double best4 = 1e300, best16 = 1e300;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    best4 = std::min(best4, train_codebook(set, opts(4, 4, seed)).second.total_quantization_error);
    best16 =
        std::min(best16, train_codebook(set, opts(4, 16, seed)).second.total_quantization_error);
  }
  EXPECT_LT(best16, best4);
}

TEST(Encode, HandExample) {
  const Codebook cb(2, 2, 2, {0, 0, 1, 1, 0, 0, 2, 2});
  const auto codes = encode(labelled(4, {0.9f, 1.1f, 0.1f, -0.1f}), cb);
  EXPECT_EQ(codes.at(0, 0), 1);
  EXPECT_EQ(codes.at(0, 1), 0);
}

TEST(Encode, TieGoesToLowerIndex) {
  const Codebook cb(1, 2, 1, {-1, 1});
  EXPECT_EQ(encode(labelled(1, {0.0f}), cb).at(0, 0), 0);
}

TEST(Encode, Idempotent) {
  const auto set = random_set(100, 8, 9);
  const auto cb = train_codebook(set, opts(2, 8)).first;
  const auto codes = encode(set, cb);
  const auto recon = reconstruct(codes, cb);
  EXPECT_EQ(encode(labelled(8, recon), cb), codes);
}

TEST(Encode, DimensionMismatch) {
  const Codebook cb(1, 2, 2, {0, 0, 1, 1});
  EXPECT_THROW(encode(random_set(3, 4, 1), cb), ConfigError);
}

TEST(Encode, MatchesBruteForce) {
  const auto set = random_set(80, 12, 21);
  const auto cb = train_codebook(set, opts(3, 5)).first;
  const auto codes = encode(set, cb);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t m = 0; m < 3; ++m) {
      const auto sub = set.row(i).subspan(m * 4, 4);
      std::size_t best = 0;
      double best_d = oracle::sq_dist(sub, cb.centroid(m, 0));
      for (std::size_t c = 1; c < 5; ++c) {
        const auto d = oracle::sq_dist(sub, cb.centroid(m, c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      EXPECT_EQ(codes.at(i, m), best);
    }
  }
}

TEST(CodeMatrix, RejectsOutOfRange) {
  EXPECT_THROW(CodeMatrix(1, 2, 4, {0, 4}), CorruptionError);
}

TEST(CodeBits, Examples) {
  EXPECT_EQ(Codebook(4, 256, 1, std::vector<float>(1024)).code_bits(), 32u);
  EXPECT_EQ(Codebook(2, 4, 1, std::vector<float>(8)).code_bits(), 4u);
  EXPECT_EQ(Codebook(3, 5, 1, std::vector<float>(15)).code_bits(), 9u);
}

TEST(Artifacts, CodebookAndCodesRoundTrip) {
  const auto set = random_set(60, 8, 2);
  const auto cb = train_codebook(set, opts(4, 4)).first;
  const auto codes = encode(set, cb);
  const auto cb_path = temp_file("a.cbk");
  const auto codes_path = temp_file("a.pqc");
  save_codebook(cb, cb_path);
  save_codes(codes, codes_path);
  EXPECT_EQ(load_codebook(cb_path), cb);
  EXPECT_EQ(load_codes(codes_path), codes);

  // A codes file read as a codebook is rejected at the magic.
  try {
    load_codebook(codes_path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  // Truncation and trailing garbage are both format errors.
  const auto size = fs::file_size(cb_path);
  fs::resize_file(cb_path, size - 1);
  EXPECT_THROW(load_codebook(cb_path), FormatError);
  fs::resize_file(cb_path, size + 3);
  EXPECT_THROW(load_codebook(cb_path), FormatError);
  fs::remove(cb_path);
  fs::remove(codes_path);
}
