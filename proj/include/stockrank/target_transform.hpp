#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "stockrank/error.hpp"
#include "stockrank/ranking.hpp"

namespace stockrank {

/// Chronological scaling power; the ranked output always spans [-1, 1].
struct TransformSpec {
  double power = 2.0;

  bool operator==(const TransformSpec&) const = default;
};

/// Average-rank the values and map the ranks affinely onto [-1, 1].
inline std::vector<double> rank_normalize(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorKind::TooFewValues, "rank_normalize needs at least 2 values");
  const auto ranks = average_ranks(values);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = rank_to_unit_interval(ranks[i], values.size());
  return out;
}

struct DatedTarget {
  int ordinal = 1;
  double value = 0.0;
};

/// Scale each raw target by ordinal^p, then rank all of them jointly (ascending,
/// signed) into [-1, 1]. Recent periods take the extremes of the ranking.
inline std::vector<double> chrono_scale_rank(std::span<const DatedTarget> targets, const TransformSpec& spec) {
  if (targets.size() < 2) throw Error(ErrorKind::TooFewTargets, "chrono_scale_rank needs at least 2 targets");
  if (!std::isfinite(spec.power) || spec.power < 0.0) {
    throw Error(ErrorKind::InvalidConfig, "transform power must be finite and >= 0");
  }
  std::vector<double> scaled(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].ordinal < 1) throw Error(ErrorKind::TooFewTargets, "ordinals must be >= 1");
    scaled[i] = targets[i].value * std::pow(static_cast<double>(targets[i].ordinal), spec.power);
  }
  return rank_normalize(scaled);
}

}  // namespace stockrank
