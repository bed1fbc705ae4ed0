#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"
#include "stockrank/panel.hpp"
#include "stockrank/ranking.hpp"

namespace stockrank {

// ---------------------------------------------------------------------------
// Recipe description

enum class Stat {
  Mean,
  Median,
  Std,
  Max,
  Min,
  Change,
  ChangeSecondLastToLast,
  Range,
  MeanDiff,
  MedianDiff,
  StdDiff,
  MaxDiff,
  MinDiff,
  CoefVariation,  // std / max(|mean|, eps)
};

inline constexpr Stat kAllAggregationStats[] = {
    Stat::Mean,  Stat::Median,   Stat::Std,        Stat::Max,       Stat::Min,
    Stat::Change, Stat::ChangeSecondLastToLast, Stat::Range, Stat::MeanDiff, Stat::MedianDiff,
    Stat::StdDiff, Stat::MaxDiff, Stat::MinDiff,
};

inline std::string_view to_string(Stat s) {
  switch (s) {
    case Stat::Mean: return "mean";
    case Stat::Median: return "median";
    case Stat::Std: return "std";
    case Stat::Max: return "max";
    case Stat::Min: return "min";
    case Stat::Change: return "change";
    case Stat::ChangeSecondLastToLast: return "change_second_last_to_last";
    case Stat::Range: return "range";
    case Stat::MeanDiff: return "mean_diff";
    case Stat::MedianDiff: return "median_diff";
    case Stat::StdDiff: return "std_diff";
    case Stat::MaxDiff: return "max_diff";
    case Stat::MinDiff: return "min_diff";
    case Stat::CoefVariation: return "cv";
  }
  return "mean";
}

inline std::optional<Stat> stat_from_string(std::string_view name) {
  for (Stat s : kAllAggregationStats) {
    if (to_string(s) == name) return s;
  }
  if (name == "cv") return Stat::CoefVariation;
  return std::nullopt;
}

enum class PairwiseOp { Product, Difference, Ratio };

inline std::string_view to_string(PairwiseOp op) {
  switch (op) {
    case PairwiseOp::Product: return "product";
    case PairwiseOp::Difference: return "difference";
    case PairwiseOp::Ratio: return "ratio";
  }
  return "product";
}

inline std::optional<PairwiseOp> pairwise_from_string(std::string_view name) {
  for (PairwiseOp op : {PairwiseOp::Product, PairwiseOp::Difference, PairwiseOp::Ratio}) {
    if (to_string(op) == name) return op;
  }
  return std::nullopt;
}

struct IndicatorParams {
  int ma_window = 3;
  double ema_alpha = 0.5;
  int momentum_lag = 1;
  int roc_lag = 1;

  void validate() const {
    if (ma_window < 1 || momentum_lag < 1 || roc_lag < 1 || !(ema_alpha > 0.0 && ema_alpha <= 1.0)) {
      throw Error(ErrorKind::InvalidRecipe, "indicator params out of range");
    }
  }

  bool operator==(const IndicatorParams&) const = default;
};

struct FeatureRecipe {
  std::vector<Stat> stats{Stat::Mean};
  bool include_percentiles = false;
  bool include_calendar = false;
  std::vector<PairwiseOp> pairwise;
  std::optional<IndicatorParams> indicators;
  std::optional<double> pca;  // explained-variance threshold in (0, 1]

  void validate() const {
    if (stats.empty() && !include_percentiles && !include_calendar && pairwise.empty() && !indicators) {
      throw Error(ErrorKind::InvalidRecipe, "recipe enables no feature source");
    }
    if (indicators) indicators->validate();
    if (pca && !(*pca > 0.0 && *pca <= 1.0)) throw Error(ErrorKind::InvalidRecipe, "pca threshold must lie in (0, 1]");
  }

  /// 70 means, 70 mean percentiles, year and half: 142 columns at challenge shape.
  static FeatureRecipe mean_percentile_calendar() {
    FeatureRecipe r;
    r.include_percentiles = true;
    r.include_calendar = true;
    return r;
  }

  /// The thirteen monthly aggregation statistics.
  static FeatureRecipe aggregation_stats() {
    FeatureRecipe r;
    r.stats.assign(std::begin(kAllAggregationStats), std::end(kAllAggregationStats));
    return r;
  }

  bool operator==(const FeatureRecipe&) const = default;
};

// ---------------------------------------------------------------------------
// Per-row aggregation

namespace detail {

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double median_copy(std::span<const double> v) {
  if (v.empty()) return 0.0;
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

inline double mean_or_zero(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline constexpr double kGuardEps = 1e-8;

inline double stat_value(Stat stat, std::span<const double> v, std::span<const double> diffs) {
  switch (stat) {
    case Stat::Mean: return mean_or_zero(v);
    case Stat::Median: return median_copy(v);
    case Stat::Std: return sample_std(v);
    case Stat::Max: return *std::max_element(v.begin(), v.end());
    case Stat::Min: return *std::min_element(v.begin(), v.end());
    case Stat::Change: return v.back() - v.front();
    case Stat::ChangeSecondLastToLast: return v.size() < 2 ? 0.0 : v[v.size() - 1] - v[v.size() - 2];
    case Stat::Range: return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    case Stat::MeanDiff: return mean_or_zero(diffs);
    case Stat::MedianDiff: return median_copy(diffs);
    case Stat::StdDiff: return sample_std(diffs);
    case Stat::MaxDiff: return diffs.empty() ? 0.0 : *std::max_element(diffs.begin(), diffs.end());
    case Stat::MinDiff: return diffs.empty() ? 0.0 : *std::min_element(diffs.begin(), diffs.end());
    case Stat::CoefVariation: return sample_std(v) / std::max(std::abs(mean_or_zero(v)), kGuardEps);
  }
  return 0.0;
}

}  // namespace detail

struct NamedValues {
  std::vector<std::string> names;
  std::vector<double> values;
};

/// Column names produced by aggregate_monthly_stats, stat-major: X1_mean..Xn_mean, X1_median, ...
inline std::vector<std::string> aggregate_stat_names(int n_variables, std::span<const Stat> stats) {
  std::vector<std::string> names;
  names.reserve(stats.size() * static_cast<std::size_t>(n_variables));
  for (Stat s : stats) {
    for (int v = 0; v < n_variables; ++v) names.push_back("X" + std::to_string(v + 1) + "_" + std::string(to_string(s)));
  }
  return names;
}

/// Writes the requested statistics of each variable's monthly values into `out`
/// (stat-major). `monthly` is variable-major with `n_months` values per variable.
inline void aggregate_monthly_stats_into(std::span<const double> monthly, int n_months, std::span<const Stat> stats,
                                         std::span<double> out) {
  const std::size_t months = static_cast<std::size_t>(n_months);
  const std::size_t n_vars = monthly.size() / months;
  std::vector<double> diffs(months > 0 ? months - 1 : 0);
  for (std::size_t v = 0; v < n_vars; ++v) {
    const auto values = monthly.subspan(v * months, months);
    for (std::size_t j = 0; j + 1 < months; ++j) diffs[j] = values[j + 1] - values[j];
    for (std::size_t s = 0; s < stats.size(); ++s) out[s * n_vars + v] = detail::stat_value(stats[s], values, diffs);
  }
}

/// Per-variable statistics over one observation's monthly values. Std uses the
/// n-1 divisor; diff statistics use d_j = v_{j+1} - v_j.
inline NamedValues aggregate_monthly_stats(const StockObservation& obs, int n_months, std::span<const Stat> stats) {
  if (n_months < 1 || obs.monthly.size() % static_cast<std::size_t>(n_months) != 0) {
    throw Error(ErrorKind::ShapeMismatch, "monthly values do not divide into whole variables");
  }
  for (double v : obs.monthly) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "aggregate_monthly_stats requires an imputed observation");
  }
  const int n_vars = static_cast<int>(obs.monthly.size() / static_cast<std::size_t>(n_months));
  NamedValues out;
  out.names = aggregate_stat_names(n_vars, stats);
  out.values.resize(out.names.size());
  aggregate_monthly_stats_into(obs.monthly, n_months, stats, out.values);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-sectional, calendar, pairwise and indicator features

/// (average rank - 1)/(n - 1) within the given cross-section; a single row gets 0.5.
inline std::vector<double> percentile_within_period(std::span<const double> values) {
  const auto ranks = average_ranks(values);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = rank_to_percentile(ranks[i], values.size());
  return out;
}

struct CalendarFeatures {
  double year = 0.0;
  double half = 0.0;
};

inline CalendarFeatures calendar_features(const PeriodId& period) {
  const HalfYear h = parse_half_year(period.label);
  return {static_cast<double>(h.year), static_cast<double>(h.half)};
}

inline std::string pairwise_name(PairwiseOp op, const std::string& a, const std::string& b) {
  return "syn_" + std::string(to_string(op)) + "_" + a + "_" + b;
}

/// Appends one column per (op, unordered column pair a < b):
/// product a*b, difference a-b, ratio a/(b + eps*sign(b)) with sign(0) = 1.
inline FeatureMatrix synthetic_pairwise(const FeatureMatrix& means, std::span<const PairwiseOp> ops) {
  const std::size_t m = means.cols();
  const std::size_t n_pairs = m * (m - (m > 0 ? 1 : 0)) / 2;
  std::vector<std::string> names;
  names.reserve(ops.size() * n_pairs);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(means.rows()), static_cast<Eigen::Index>(ops.size() * n_pairs));
  const Eigen::MatrixXd& x = means.values();
  Eigen::Index col = 0;
  for (PairwiseOp op : ops) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a + 1; b < m; ++b) {
        names.push_back(pairwise_name(op, means.names()[a], means.names()[b]));
        const auto xa = x.col(static_cast<Eigen::Index>(a));
        const auto xb = x.col(static_cast<Eigen::Index>(b));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          switch (op) {
            case PairwiseOp::Product: values(i, col) = xa(i) * xb(i); break;
            case PairwiseOp::Difference: values(i, col) = xa(i) - xb(i); break;
            case PairwiseOp::Ratio: {
              const double sign = xb(i) < 0.0 ? -1.0 : 1.0;
              values(i, col) = xa(i) / (xb(i) + detail::kGuardEps * sign);
              break;
            }
          }
        }
        ++col;
      }
    }
  }
  return means.append_columns(FeatureMatrix(std::move(names), std::move(values), means.row_ids()));
}

struct IndicatorValues {
  double moving_average = 0.0;
  double exponential_average = 0.0;
  double momentum = 0.0;
  double rate_of_change = 0.0;
};

inline constexpr std::string_view kIndicatorNames[] = {"ind_ma", "ind_ema", "ind_momentum", "ind_roc"};

/// Indicators over a per-period series that ends just before the period being
/// featurized. MA uses up to `ma_window` trailing values; EMA starts at s_1;
/// momentum and rate of change are 0 without enough history (ROC also when the
/// lagged value is 0).
inline IndicatorValues technical_indicators(std::span<const double> series, const IndicatorParams& params) {
  if (series.empty()) throw Error(ErrorKind::EmptySeries, "technical indicators need at least one past period");
  params.validate();
  const std::size_t n = series.size();
  IndicatorValues out;

  const std::size_t window = std::min<std::size_t>(n, static_cast<std::size_t>(params.ma_window));
  out.moving_average = std::accumulate(series.end() - static_cast<std::ptrdiff_t>(window), series.end(), 0.0) /
                       static_cast<double>(window);

  double ema = series[0];
  for (std::size_t t = 1; t < n; ++t) ema = params.ema_alpha * series[t] + (1.0 - params.ema_alpha) * ema;
  out.exponential_average = ema;

  const double last = series[n - 1];
  if (static_cast<std::size_t>(params.momentum_lag) < n) out.momentum = last - series[n - 1 - params.momentum_lag];
  if (static_cast<std::size_t>(params.roc_lag) < n) {
    const double base = series[n - 1 - params.roc_lag];
    out.rate_of_change = base == 0.0 ? 0.0 : last / base - 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel featurization

/// Column names the recipe yields for a schema (PCA excluded; it is fit per window).
inline std::vector<std::string> recipe_column_names(const FeatureRecipe& recipe, const ColumnSchema& schema) {
  std::vector<std::string> names = aggregate_stat_names(schema.n_variables, recipe.stats);
  if (recipe.include_percentiles) {
    for (int v = 0; v < schema.n_variables; ++v) names.push_back("X" + std::to_string(v + 1) + "_mean_pct");
  }
  if (recipe.include_calendar) {
    names.emplace_back("year");
    names.emplace_back("half");
  }
  if (!recipe.pairwise.empty()) {
    std::vector<std::string> mean_names = aggregate_stat_names(schema.n_variables, std::vector<Stat>{Stat::Mean});
    for (PairwiseOp op : recipe.pairwise) {
      for (std::size_t a = 0; a < mean_names.size(); ++a) {
        for (std::size_t b = a + 1; b < mean_names.size(); ++b) names.push_back(pairwise_name(op, mean_names[a], mean_names[b]));
      }
    }
  }
  if (recipe.indicators) {
    for (auto n : kIndicatorNames) names.emplace_back(n);
  }
  return names;
}

/// Mean of the labelled training-row targets of each period; NaN when a period has none.
inline std::vector<double> training_target_means(const Panel& panel) {
  std::vector<double> out;
  out.reserve(panel.num_periods());
  for (const auto& p : panel.periods()) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (p->is_train[i] && p->has_target(i)) {
        sum += p->targets[i];
        ++n;
      }
    }
    out.push_back(n == 0 ? kMissing : sum / static_cast<double>(n));
  }
  return out;
}

/// Featurizes every row of one period. Cross-sectional percentiles are ranked
/// within the row's own partition (train rows among train rows, test rows among
/// test rows) so training-row features never depend on test-row values.
/// `indicator_series` holds the per-period training-target means of strictly
/// earlier periods; with no history the indicator columns are 0.
inline FeatureMatrix featurize_period(const Period& period, const ColumnSchema& schema, const FeatureRecipe& recipe,
                                      std::span<const double> indicator_series = {}) {
  recipe.validate();
  if (period.count_missing() != 0) {
    throw Error(ErrorKind::NonFinite, "period " + period.id.label + " has missing values; impute first");
  }
  const std::size_t n = period.size();
  const auto names = recipe_column_names(recipe, schema);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  const auto nvars = static_cast<std::size_t>(schema.n_variables);

  // per-variable monthly means for percentiles and pairwise features
  Eigen::MatrixXd means(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nvars));
  const Stat mean_stat[] = {Stat::Mean};
  std::vector<double> buffer(std::max<std::size_t>(recipe.stats.size(), 1) * nvars);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = period.row(i);
    aggregate_monthly_stats_into(row, schema.n_months, recipe.stats, buffer);
    for (std::size_t c = 0; c < recipe.stats.size() * nvars; ++c) values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = buffer[c];
    aggregate_monthly_stats_into(row, schema.n_months, mean_stat, buffer);
    for (std::size_t v = 0; v < nvars; ++v) means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = buffer[v];
  }
  Eigen::Index col = static_cast<Eigen::Index>(recipe.stats.size() * nvars);

  if (recipe.include_percentiles) {
    std::vector<std::size_t> groups[2];
    for (std::size_t i = 0; i < n; ++i) groups[period.is_train[i] ? 1 : 0].push_back(i);
    std::vector<double> cross_section;
    for (std::size_t v = 0; v < nvars; ++v, ++col) {
      for (const auto& group : groups) {
        if (group.empty()) continue;
        cross_section.clear();
        for (auto i : group) cross_section.push_back(means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)));
        const auto pct = percentile_within_period(cross_section);
        for (std::size_t k = 0; k < group.size(); ++k) values(static_cast<Eigen::Index>(group[k]), col) = pct[k];
      }
    }
  }
  if (recipe.include_calendar) {
    const auto cal = calendar_features(period.id);
    values.col(col++).setConstant(cal.year);
    values.col(col++).setConstant(cal.half);
  }
  if (!recipe.pairwise.empty()) {
    std::vector<RowId> ids(n);
    auto mean_names = aggregate_stat_names(schema.n_variables, mean_stat);
    const FeatureMatrix mean_matrix(std::move(mean_names), means, ids);
    const FeatureMatrix with_pairs = synthetic_pairwise(mean_matrix, recipe.pairwise);
    const Eigen::Index added = with_pairs.values().cols() - static_cast<Eigen::Index>(nvars);
    values.middleCols(col, added) = with_pairs.values().rightCols(added);
    col += added;
  }
  if (recipe.indicators) {
    IndicatorValues ind;
    if (!indicator_series.empty()) ind = technical_indicators(indicator_series, *recipe.indicators);
    values.col(col++).setConstant(ind.moving_average);
    values.col(col++).setConstant(ind.exponential_average);
    values.col(col++).setConstant(ind.momentum);
    values.col(col++).setConstant(ind.rate_of_change);
  }

  std::vector<RowId> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back({period.id.ordinal, period.obs_ids[i]});
  return FeatureMatrix(names, std::move(values), std::move(ids));
}

/// Featurizes every period of an imputed panel. Indicator inputs for period t are
/// the training-target means of periods before t (periods without labels skipped).
inline std::vector<FeatureMatrix> featurize_panel(const Panel& panel, const FeatureRecipe& recipe) {
  const auto target_means = training_target_means(panel);
  std::vector<FeatureMatrix> out;
  out.reserve(panel.num_periods());
  std::vector<double> history;
  for (std::size_t k = 0; k < panel.num_periods(); ++k) {
    out.push_back(featurize_period(panel.period(k), panel.schema(), recipe, history));
    if (!is_missing(target_means[k])) history.push_back(target_means[k]);
  }
  return out;
}

}  // namespace stockrank
