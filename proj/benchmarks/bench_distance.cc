#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <random>

#include "scr/distance.hpp"
#include "scr/quantizer.hpp"

namespace {

constexpr std::size_t kDim = 128;
constexpr std::size_t kM = 4;
constexpr std::size_t kC = 256;

scr::FeatureSet gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<float> v(n * kDim);
  for (auto& x : v) x = g(rng);
  return scr::FeatureSet(kDim, std::move(v), std::vector<std::uint32_t>(n, 0),
                         std::vector<std::uint16_t>(n, 0));
}

struct Fixture {
  scr::FeatureSet gallery;
  scr::Codebook codebook;
  scr::CodeMatrix codes;
  scr::DistanceLUT lut;
  scr::IntLUT int_lut;
  scr::BitMatrix bits;

  explicit Fixture(std::size_t n)
      : gallery(gaussian(n, 1)),
        codebook(train()),
        codes(scr::encode(gallery, codebook)),
        lut(scr::build_lut(codebook)),
        int_lut(scr::quantize_lut(lut)),
        bits(scr::binarize(gallery, 32)) {}

  scr::Codebook train() const {
    scr::KMeansOptions o;
    o.num_subspaces = kM;
    o.num_centroids = kC;
    o.max_iters = 3;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < std::min<std::size_t>(gallery.size(), 4096); ++i) rows.push_back(i);
    return scr::train_codebook(gallery.subset(rows), o).first;
  }
};

const Fixture& fixture(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<Fixture>> cache;
  auto& f = cache[n];
  if (!f) f = std::make_unique<Fixture>(n);
  return *f;
}

void BM_ExactRow(benchmark::State& state) {
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scr::exact_distance_row(f.gallery.row(0), f.gallery));
}

void BM_ScrRow(benchmark::State& state) {
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scr::distance_row(f.codes.row(0), f.codes, f.lut));
}

void BM_IntScrRow(benchmark::State& state) {
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scr::distance_row(f.codes.row(0), f.codes, f.int_lut));
}

void BM_HammingRow(benchmark::State& state) {
  const auto& f = fixture(std::size_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(scr::hamming_distance_row(f.bits.row(0), 32, f.bits));
  }
}

}  // namespace

BENCHMARK(BM_ExactRow)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScrRow)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IntScrRow)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HammingRow)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
