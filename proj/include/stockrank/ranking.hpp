#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace stockrank {

/// 1-based ascending ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // ranks i+1 .. j share (i+1+j)/2
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

/// Maps an average rank in [1, n] onto [-1, 1]. Written as (2r - n - 1)/(n - 1)
/// so half-integer ranks land on exact rationals.
inline double rank_to_unit_interval(double rank, std::size_t n) {
  const double nn = static_cast<double>(n);
  return (2.0 * rank - nn - 1.0) / (nn - 1.0);
}

/// Maps an average rank onto [0, 1] as (r - 1)/(n - 1); a single value maps to 0.5.
inline double rank_to_percentile(double rank, std::size_t n) {
  if (n < 2) return 0.5;
  return (rank - 1.0) / (static_cast<double>(n) - 1.0);
}

}  // namespace stockrank
