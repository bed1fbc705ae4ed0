#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"
#include "stockrank/linear_models.hpp"
#include "stockrank/metrics.hpp"

namespace stockrank {

inline constexpr double kTieEpsilon = 1e-9;

/// Features with a target value per row.
struct LabelledSet {
  FeatureMatrix x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
};

/// Labelled training rows of one period.
struct PeriodBlock {
  int ordinal = 0;
  FeatureMatrix x;
  std::vector<double> y;
};

template <typename Item>
struct Dropped {
  Item item;
  std::string reason;

  bool operator==(const Dropped&) const = default;
};

/// Result of a selection procedure. `kept` is ordered (by significance for
/// features, by ordinal for periods); kept and dropped partition the input.
template <typename Item>
struct SelectionOutcome {
  std::vector<Item> kept;
  std::vector<Dropped<Item>> dropped;
  std::vector<std::pair<int, double>> score_trace;  // (step, validation score)

  bool operator==(const SelectionOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Shared helpers

/// Stacks the blocks' rows (in block order) into one labelled set.
inline LabelledSet stack_blocks(std::span<const PeriodBlock> blocks) {
  std::vector<FeatureMatrix> parts;
  parts.reserve(blocks.size());
  LabelledSet out;
  for (const auto& b : blocks) {
    parts.push_back(b.x);
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  }
  out.x = FeatureMatrix::vstack(parts);
  return out;
}

/// Per-period column means, one row per block.
inline FeatureMatrix per_period_means(std::span<const PeriodBlock> blocks) {
  if (blocks.empty()) return {};
  Eigen::MatrixXd means(static_cast<Eigen::Index>(blocks.size()), static_cast<Eigen::Index>(blocks.front().x.cols()));
  std::vector<RowId> ids;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (blocks[k].x.rows() == 0) throw Error(ErrorKind::DegenerateInput, "period block without rows");
    means.row(static_cast<Eigen::Index>(k)) = blocks[k].x.values().colwise().mean();
    ids.push_back({blocks[k].ordinal, ""});
  }
  return FeatureMatrix(blocks.front().x.names(), std::move(means), std::move(ids));
}

inline void require_informative_validation(std::span<const double> y) {
  if (y.size() < 2 || is_constant(y)) {
    throw Error(ErrorKind::DegenerateValidation, "validation targets are constant or fewer than 2");
  }
}

/// Fit on (x_train, y_train), score on validation. Empty when the fit fails or
/// the predictions are constant (rank metrics are undefined there).
inline std::optional<double> try_score(const ModelSpec& spec, const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                                       const Eigen::MatrixXd& x_val, std::span<const double> y_val, const MetricKind& metric) {
  try {
    const auto model = fit(x_train, y_train, spec);
    const Eigen::VectorXd pred = predict(model, x_val);
    const double s = evaluate_metric(metric, as_span(pred), y_val);
    if (!std::isfinite(s)) return std::nullopt;
    return s;
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline Eigen::VectorXd to_vector(std::span<const double> y) {
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

// ---------------------------------------------------------------------------
// Training-period subset selection

struct PeriodSelectionOptions {
  double tie_epsilon = kTieEpsilon;
  int max_sweeps = 10;
};

struct PeriodSelectionResult {
  SelectionOutcome<int> outcome;
  double baseline_score = -std::numeric_limits<double>::infinity();
  double final_score = -std::numeric_limits<double>::infinity();
  int fits = 0;  // model fits including the baseline
  int sweeps = 0;
};

/// Greedy backward elimination over training periods. Starting from all periods,
/// each sweep visits the still-included periods in ordinal order and drops one
/// iff the validation score strictly improves (by more than tie_epsilon) and at
/// least one period remains. The reference score is updated after each accepted
/// removal. Sweeps repeat until one changes nothing or max_sweeps is reached.
inline PeriodSelectionResult select_training_periods(std::span<const PeriodBlock> periods, const ModelSpec& spec,
                                                     const LabelledSet& validation, const MetricKind& metric,
                                                     const PeriodSelectionOptions& options = {}) {
  if (periods.empty()) throw Error(ErrorKind::InsufficientHistory, "no training periods");
  require_informative_validation(validation.y);
  const Eigen::MatrixXd& x_val = validation.x.values();

  std::vector<bool> included(periods.size(), true);
  auto score_subset = [&](const std::vector<bool>& mask) -> std::optional<double> {
    Eigen::Index rows = 0;
    for (std::size_t k = 0; k < periods.size(); ++k) {
      if (mask[k]) rows += static_cast<Eigen::Index>(periods[k].y.size());
    }
    Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(periods.front().x.cols()));
    Eigen::VectorXd y(rows);
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < periods.size(); ++k) {
      if (!mask[k]) continue;
      const auto n = static_cast<Eigen::Index>(periods[k].y.size());
      x.middleRows(at, n) = periods[k].x.values();
      y.segment(at, n) = to_vector(periods[k].y);
      at += n;
    }
    return try_score(spec, x, y, x_val, validation.y, metric);
  };

  PeriodSelectionResult result;
  const auto baseline = score_subset(included);
  result.fits = 1;
  double current = baseline.value_or(-std::numeric_limits<double>::infinity());
  result.baseline_score = current;
  result.outcome.score_trace.emplace_back(0, current);

  std::size_t remaining = periods.size();
  for (int sweep = 0; sweep < options.max_sweeps && remaining > 1; ++sweep) {
    ++result.sweeps;
    bool changed = false;
    for (std::size_t k = 0; k < periods.size() && remaining > 1; ++k) {
      if (!included[k]) continue;
      included[k] = false;
      const auto s = score_subset(included);
      ++result.fits;
      if (s && *s > current + options.tie_epsilon) {
        current = *s;
        --remaining;
        changed = true;
        result.outcome.score_trace.emplace_back(result.fits - 1, current);
        result.outcome.dropped.push_back({periods[k].ordinal, "removal improved validation score"});
      } else {
        included[k] = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t k = 0; k < periods.size(); ++k) {
    if (included[k]) result.outcome.kept.push_back(periods[k].ordinal);
  }
  result.final_score = current;
  return result;
}

// ---------------------------------------------------------------------------
// Feature ordering and selection

/// Feature names by |Pearson(feature, y)| descending. Zero-variance features count
/// as correlation 0 and go last; ties keep column order.
inline std::vector<std::string> order_features_by_correlation(const FeatureMatrix& x, std::span<const double> y) {
  if (x.rows() != y.size() || y.size() < 2) throw Error(ErrorKind::LengthMismatch, "need >= 2 rows with matching targets");
  struct Key {
    bool constant;
    double strength;
  };
  std::vector<Key> keys(x.cols());
  const bool y_constant = is_constant(y);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd col = x.values().col(static_cast<Eigen::Index>(j));
    const bool constant = is_constant(as_span(col));
    keys[j] = {constant, (constant || y_constant) ? 0.0 : std::abs(pearson(as_span(col), y))};
  }
  std::vector<std::size_t> order(x.cols());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a].constant != keys[b].constant) return !keys[a].constant;
    return keys[a].strength > keys[b].strength;
  });
  std::vector<std::string> names;
  names.reserve(order.size());
  for (auto j : order) names.push_back(x.names()[j]);
  return names;
}

/// Greedy forward selection in the given order: a feature joins iff refitting with
/// it raises the feedback score by more than tie_epsilon. The first feature is
/// kept when nothing scores.
inline SelectionOutcome<std::string> stepwise_forward_select(const std::vector<std::string>& ordered, const ModelSpec& spec,
                                                             const LabelledSet& train, const LabelledSet& feedback,
                                                             const MetricKind& metric, double tie_epsilon = kTieEpsilon) {
  if (ordered.empty()) throw Error(ErrorKind::DegenerateInput, "no candidate features");
  if (train.size() == 0 || feedback.size() == 0) throw Error(ErrorKind::DegenerateValidation, "empty train or feedback split");
  require_informative_validation(feedback.y);

  const Eigen::VectorXd y_train = to_vector(train.y);
  SelectionOutcome<std::string> out;
  std::vector<std::string> current;
  double best = -std::numeric_limits<double>::infinity();
  int step = 0;
  for (const auto& name : ordered) {
    ++step;
    std::vector<std::string> trial = current;
    trial.push_back(name);
    const auto s = try_score(spec, train.x.select_columns(trial).values(), y_train, feedback.x.select_columns(trial).values(),
                             feedback.y, metric);
    if (s && *s > best + tie_epsilon) {
      best = *s;
      current = std::move(trial);
      out.score_trace.emplace_back(step, best);
    } else {
      out.dropped.push_back({name, s ? "no improvement" : "fit or score failed"});
    }
  }
  if (current.empty()) {
    current.push_back(ordered.front());
    std::erase_if(out.dropped, [&](const auto& d) { return d.item == ordered.front(); });
  }
  out.kept = std::move(current);
  return out;
}

struct SignStabilityStat {
  std::string feature;
  std::vector<int> windows;  // window lengths; 0 means all available periods
  std::vector<int> signs;    // correlation sign per window, -1/0/+1
  int validation_sign = 0;
  int flip_count = 0;

  bool operator==(const SignStabilityStat&) const = default;
};

struct SignStabilityOptions {
  std::vector<int> windows;  // 0 = all periods
  int max_flips = 10;

  /// 2..30 and all periods.
  static SignStabilityOptions defaults() {
    SignStabilityOptions o;
    for (int w = 2; w <= 30; ++w) o.windows.push_back(w);
    o.windows.push_back(0);
    return o;
  }
};

struct SignStabilityResult {
  SelectionOutcome<std::string> outcome;
  std::vector<SignStabilityStat> stats;  // input order
};

namespace detail {

inline int sign_of(double r) { return r > 0.0 ? 1 : (r < 0.0 ? -1 : 0); }

/// Centered moments of (x, y) that merge exactly across blocks.
struct Moments {
  double n = 0.0, mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;

  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double total = n + o.n;
    const double dx = o.mx - mx;
    const double dy = o.my - my;
    const double f = n * o.n / total;
    sxx += o.sxx + dx * dx * f;
    syy += o.syy + dy * dy * f;
    sxy += o.sxy + dx * dy * f;
    mx += dx * o.n / total;
    my += dy * o.n / total;
    n = total;
  }

  double correlation_or_zero() const {
    if (n < 2.0 || sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
  }
};

inline Moments moments_of(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<const double> y) {
  Moments m;
  m.n = static_cast<double>(y.size());
  if (y.empty()) return m;
  m.mx = x.mean();
  m.my = std::accumulate(y.begin(), y.end(), 0.0) / m.n;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = x(static_cast<Eigen::Index>(i)) - m.mx;
    const double dy = y[i] - m.my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace detail

/// Counts, per feature, the windows whose feature-target correlation sign differs
/// from the validation sign. Windows are the most recent w history periods (0 =
/// all); windows longer than the history are skipped. Features with more than
/// max_flips disagreements are dropped; the rest are ranked by flip count, stable.
inline SignStabilityResult sign_stability_filter(std::span<const PeriodBlock> history, const LabelledSet& validation,
                                                 const SignStabilityOptions& options = SignStabilityOptions::defaults()) {
  const auto n_periods = static_cast<int>(history.size());
  std::vector<int> usable;
  for (int w : options.windows) {
    if ((w == 0 && n_periods >= 1) || (w > 0 && w <= n_periods)) usable.push_back(w);
  }
  if (usable.empty()) throw Error(ErrorKind::NoUsableWindow, "history too short for every configured window");
  const FeatureMatrix& xv = validation.x;

  SignStabilityResult result;
  for (std::size_t j = 0; j < xv.cols(); ++j) {
    const std::string& name = xv.names()[j];
    SignStabilityStat stat;
    stat.feature = name;
    stat.windows = usable;
    stat.validation_sign =
        detail::sign_of(detail::moments_of(xv.values().col(static_cast<Eigen::Index>(j)), validation.y).correlation_or_zero());

    // per-period moments, merged newest to oldest
    std::vector<detail::Moments> per_period(history.size());
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto col = history[k].x.require_index(name);
      per_period[k] = detail::moments_of(history[k].x.values().col(static_cast<Eigen::Index>(col)), history[k].y);
    }
    for (int w : usable) {
      const int len = w == 0 ? n_periods : w;
      detail::Moments acc;
      for (int k = n_periods - 1; k >= n_periods - len; --k) acc.merge(per_period[static_cast<std::size_t>(k)]);
      const int s = detail::sign_of(acc.correlation_or_zero());
      stat.signs.push_back(s);
      if (s != stat.validation_sign) ++stat.flip_count;
    }
    result.stats.push_back(std::move(stat));
  }

  std::vector<std::size_t> order(result.stats.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return result.stats[a].flip_count < result.stats[b].flip_count; });
  for (auto j : order) {
    const auto& s = result.stats[j];
    if (s.flip_count > options.max_flips) {
      result.outcome.dropped.push_back({s.feature, "sign flips " + std::to_string(s.flip_count) + " > " +
                                                       std::to_string(options.max_flips)});
    } else {
      result.outcome.kept.push_back(s.feature);
    }
  }
  if (result.outcome.kept.empty() && !result.outcome.dropped.empty()) {
    // never return an empty set: keep the least-flipping feature
    result.outcome.kept.push_back(result.outcome.dropped.front().item);
    result.outcome.dropped.erase(result.outcome.dropped.begin());
  }
  return result;
}

/// Walks features from most to least significant and drops any whose |Pearson|
/// with an already-kept feature reaches the threshold. Correlations are taken over
/// `period_means` (one row per training period); constant columns never match.
inline SelectionOutcome<std::string> redundancy_prune(const std::vector<std::string>& ranked, const FeatureMatrix& period_means,
                                                      double threshold = 0.8) {
  SelectionOutcome<std::string> out;
  if (ranked.empty()) throw Error(ErrorKind::DegenerateInput, "no features to prune");
  if (period_means.rows() < 2) {
    out.kept = ranked;
    return out;
  }
  std::vector<Eigen::VectorXd> kept_cols;
  for (const auto& name : ranked) {
    const Eigen::VectorXd col = period_means.column(name);
    std::optional<std::size_t> clash;
    for (std::size_t k = 0; k < kept_cols.size() && !clash; ++k) {
      if (std::abs(pearson_or_zero(as_span(col), as_span(kept_cols[k]))) >= threshold) clash = k;
    }
    if (clash) {
      out.dropped.push_back({name, "|r| >= threshold with " + out.kept[*clash]});
    } else {
      out.kept.push_back(name);
      kept_cols.push_back(col);
    }
  }
  return out;
}

/// One single-feature model per feature, scored on validation. Features scoring
/// <= 0 (or failing) are dropped; survivors are ranked best first, ties stable.
inline SelectionOutcome<std::string> single_feature_screen(const std::vector<std::string>& features, const ModelSpec& spec,
                                                           const LabelledSet& train, const LabelledSet& validation,
                                                           const MetricKind& metric = MetricKind::combined()) {
  require_informative_validation(validation.y);
  const Eigen::VectorXd y_train = to_vector(train.y);
  SelectionOutcome<std::string> out;
  std::vector<std::pair<std::string, double>> survivors;
  int step = 0;
  for (const auto& name : features) {
    ++step;
    const auto s = try_score(spec, train.x.select_columns({name}).values(), y_train, validation.x.select_columns({name}).values(),
                             validation.y, metric);
    if (!s) {
      out.dropped.push_back({name, "fit or score failed"});
      continue;
    }
    out.score_trace.emplace_back(step, *s);
    if (*s <= 0.0) {
      out.dropped.push_back({name, "non-positive score"});
    } else {
      survivors.emplace_back(name, *s);
    }
  }
  if (survivors.empty()) {
    // never return an empty set: keep the best scorer even when it is <= 0
    if (out.score_trace.empty()) throw Error(ErrorKind::AllCandidatesFailed, "no single-feature model could be scored");
    const auto best = std::max_element(out.score_trace.begin(), out.score_trace.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    const std::string name = features[static_cast<std::size_t>(best->first - 1)];
    std::erase_if(out.dropped, [&](const auto& d) { return d.item == name; });
    out.kept.push_back(name);
    return out;
  }
  std::stable_sort(survivors.begin(), survivors.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [name, s] : survivors) out.kept.push_back(name);
  return out;
}

/// Keeps the first k features of an ordered list.
inline SelectionOutcome<std::string> top_k(const std::vector<std::string>& ordered, std::size_t k) {
  SelectionOutcome<std::string> out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i < k) {
      out.kept.push_back(ordered[i]);
    } else {
      out.dropped.push_back({ordered[i], "beyond top " + std::to_string(k)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid search

struct CandidateScore {
  std::size_t index = 0;
  std::optional<double> score;
  std::string error;

  bool operator==(const CandidateScore&) const = default;
};

struct GridSearchResult {
  std::size_t best = 0;
  double best_score = 0.0;
  std::vector<CandidateScore> table;
};

/// Scores every candidate with `scorer` (which may throw stockrank::Error) and
/// returns the highest; ties go to the earlier candidate.
template <typename Candidate, typename Scorer>
GridSearchResult grid_search_best(std::span<const Candidate> candidates, Scorer&& scorer) {
  if (candidates.empty()) throw Error(ErrorKind::AllCandidatesFailed, "no candidates");
  GridSearchResult result;
  std::optional<double> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateScore row;
    row.index = i;
    try {
      const double s = std::invoke(scorer, candidates[i]);
      if (std::isfinite(s)) {
        row.score = s;
      } else {
        row.error = "non-finite score";
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (row.score && (!best || *row.score > *best)) {
      best = row.score;
      result.best = i;
    }
    result.table.push_back(std::move(row));
  }
  if (!best) throw Error(ErrorKind::AllCandidatesFailed, "every candidate failed to fit or score");
  result.best_score = *best;
  return result;
}

}  // namespace stockrank
