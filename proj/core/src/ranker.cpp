#include "scr/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "scr/error.hpp"

namespace scr {

std::string_view to_string(RankAlgorithm algorithm) noexcept {
  return algorithm == RankAlgorithm::counting ? "counting" : "comparison";
}

CountingRanker::CountingRanker(std::uint32_t max_value)
    : max_value_(max_value), buckets_(std::size_t{max_value} + 1) {}

RankResult CountingRanker::rank(const DistanceRow& row) {
  if (!row.is_integer()) {
    throw ContractError("counting sort needs an integer distance row, got '" +
                        std::string(to_string(row.kind)) + "'");
  }
  const auto& values = row.integer;
  const std::size_t n = values.size();
  std::memset(buckets_.data(), 0, buckets_.size() * sizeof(std::uint32_t));
  for (std::size_t j = 0; j < n; ++j) {
    if (values[j] > max_value_) {
      throw ContractError("distance " + std::to_string(values[j]) + " at gallery index " +
                          std::to_string(j) + " exceeds max_value " + std::to_string(max_value_));
    }
    ++buckets_[values[j]];
  }
  // Exclusive prefix sum turns counts into bucket start offsets.
  std::uint32_t running = 0;
  for (auto& b : buckets_) {
    const auto count = b;
    b = running;
    running += count;
  }

  RankResult out;
  out.query = row.query;
  out.algorithm = RankAlgorithm::counting;
  out.order.resize(n);
  out.distances.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto slot = buckets_[values[j]]++;
    out.order[slot] = static_cast<std::uint32_t>(j);
    out.distances[slot] = double(values[j]);
  }
  return out;
}

RankResult counting_sort_rank(const DistanceRow& row, std::uint32_t max_value) {
  CountingRanker ranker(max_value);
  return ranker.rank(row);
}

RankResult comparison_sort_rank(const DistanceRow& row) {
  const std::size_t n = row.size();
  RankResult out;
  out.query = row.query;
  out.algorithm = RankAlgorithm::comparison;
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), std::uint32_t{0});

  auto sort_by = [&](const auto& values) {
    std::sort(out.order.begin(), out.order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return values[a] < values[b] || (values[a] == values[b] && a < b);
    });
  };
  if (row.is_integer()) {
    sort_by(row.integer);
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row.real[j])) {
        throw ContractError("NaN distance at gallery index " + std::to_string(j));
      }
    }
    sort_by(row.real);
  }
  out.distances.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.distances[k] = row.value(out.order[k]);
  return out;
}

RankResult top_k(const RankResult& result, std::size_t k) {
  if (k < 1 || k > result.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(result.size()) + "]");
  }
  RankResult out;
  out.query = result.query;
  out.algorithm = result.algorithm;
  out.order.assign(result.order.begin(), result.order.begin() + static_cast<std::ptrdiff_t>(k));
  out.distances.assign(result.distances.begin(),
                       result.distances.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

}  // namespace scr
