#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stockrank/error.hpp"
#include "stockrank/ranking.hpp"

namespace stockrank {

/// Which score drives model and feature selection.
struct MetricKind {
  enum class Kind { Spearman, NdcgTopFraction, Combined };
  Kind kind = Kind::Combined;
  double fraction = 0.2;  // only meaningful for NdcgTopFraction

  static MetricKind spearman() { return {Kind::Spearman, 0.2}; }
  static MetricKind ndcg(double fraction = 0.2) { return {Kind::NdcgTopFraction, fraction}; }
  static MetricKind combined() { return {Kind::Combined, 0.2}; }

  bool operator==(const MetricKind&) const = default;
};

inline std::string to_string(const MetricKind& m) {
  switch (m.kind) {
    case MetricKind::Kind::Spearman: return "spearman";
    case MetricKind::Kind::NdcgTopFraction: return "ndcg";
    case MetricKind::Kind::Combined: return "combined";
  }
  return "combined";
}

namespace detail {

inline void require_same_length(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < min_len) {
    throw Error(ErrorKind::LengthMismatch, "need at least " + std::to_string(min_len) + " values");
  }
}

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace detail

inline bool is_constant(std::span<const double> x) {
  return std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end();
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y, 2);
  const double mx = detail::mean_of(x);
  const double my = detail::mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::ConstantInput, "correlation of a constant vector");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// Pearson correlation, or 0 when either side is constant. Used where the
/// feature-screening rules define a zero-variance correlation as 0.
inline double pearson_or_zero(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y, 2);
  if (is_constant(x) || is_constant(y)) return 0.0;
  return pearson(x, y);
}

/// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> truth) {
  detail::require_same_length(pred, truth, 2);
  if (is_constant(pred) || is_constant(truth)) {
    throw Error(ErrorKind::ConstantInput, "spearman of a constant vector");
  }
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

/// NDCG over the top ceil(fraction * n) predicted items. Relevance is the truth
/// percentile (average rank - 1)/(n - 1); discount is 1/log2(position + 1);
/// prediction ties keep input order.
inline double ndcg_top_fraction(std::span<const double> pred, std::span<const double> truth, double fraction = 0.2) {
  detail::require_same_length(pred, truth, 2);
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::LengthMismatch, "NDCG fraction must lie in (0, 1]");
  }
  const std::size_t n = pred.size();
  // the tolerance keeps 0.2 * 10 from rounding up to 3
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);

  const auto truth_ranks = average_ranks(truth);
  std::vector<double> relevance(n);
  for (std::size_t i = 0; i < n; ++i) relevance[i] = rank_to_percentile(truth_ranks[i], n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });

  std::vector<double> ideal = relevance;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    dcg += relevance[order[i]] * discount;
    idcg += ideal[i] * discount;
  }
  return dcg / idcg;
}

/// Average of Spearman and NDCG@20%.
inline double combined_score(std::span<const double> pred, std::span<const double> truth) {
  return 0.5 * (spearman(pred, truth) + ndcg_top_fraction(pred, truth, 0.2));
}

inline double evaluate_metric(const MetricKind& metric, std::span<const double> pred, std::span<const double> truth) {
  switch (metric.kind) {
    case MetricKind::Kind::Spearman: return spearman(pred, truth);
    case MetricKind::Kind::NdcgTopFraction: return ndcg_top_fraction(pred, truth, metric.fraction);
    case MetricKind::Kind::Combined: return combined_score(pred, truth);
  }
  return combined_score(pred, truth);
}

}  // namespace stockrank
