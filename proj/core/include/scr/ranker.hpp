#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "scr/distance.hpp"

namespace scr {

enum class RankAlgorithm : std::uint8_t { counting, comparison };

std::string_view to_string(RankAlgorithm algorithm) noexcept;

/// Gallery indices ordered by ascending distance, ties by ascending index.
struct RankResult {
  std::size_t query = 0;
  std::vector<std::uint32_t> order;
  std::vector<double> distances;
  RankAlgorithm algorithm = RankAlgorithm::comparison;

  std::size_t size() const noexcept { return order.size(); }
};

/// Counting sort over integer rows with a bucket array reused across queries.
/// One instance per worker; not thread-safe.
class CountingRanker {
 public:
  explicit CountingRanker(std::uint32_t max_value);

  std::uint32_t max_value() const noexcept { return max_value_; }

  /// Throws ContractError for real-valued rows or values above max_value.
  RankResult rank(const DistanceRow& row);

 private:
  std::uint32_t max_value_;
  std::vector<std::uint32_t> buckets_;
};

RankResult counting_sort_rank(const DistanceRow& row, std::uint32_t max_value);

/// O(N log N) sort on (distance, index). Throws ContractError on NaN.
RankResult comparison_sort_rank(const DistanceRow& row);

/// First k entries. Throws ArgumentError unless 1 <= k <= N.
RankResult top_k(const RankResult& result, std::size_t k);

}  // namespace scr
