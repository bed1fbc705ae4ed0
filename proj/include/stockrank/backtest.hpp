#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"
#include "stockrank/features.hpp"
#include "stockrank/linear_models.hpp"
#include "stockrank/metrics.hpp"
#include "stockrank/panel.hpp"
#include "stockrank/pca.hpp"
#include "stockrank/pipeline.hpp"
#include "stockrank/selection.hpp"
#include "stockrank/target_transform.hpp"

namespace stockrank {

inline constexpr double kNotScored = std::numeric_limits<double>::quiet_NaN();

/// Both NaN, or equal.
inline bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

struct CandidateResult {
  ModelSpec model;
  std::optional<double> score;
  std::string error;
  std::vector<int> periods_kept;

  bool operator==(const CandidateResult&) const = default;
};

struct PeriodRecord {
  int ordinal = 0;
  std::string label;
  std::string status;  // "ok", "unscored" or "failed: <reason>"
  std::optional<ModelSpec> model;
  std::vector<std::string> features;
  std::vector<int> periods_kept;
  double validation_score = kNotScored;
  double spearman = kNotScored;
  double ndcg = kNotScored;
  double combined = kNotScored;
  std::size_t n_train_rows = 0;
  std::size_t n_test_rows = 0;
  std::vector<CandidateResult> candidates;

  bool scored() const { return status == "ok"; }
  bool failed() const { return status.rfind("failed", 0) == 0; }

  bool operator==(const PeriodRecord& o) const {
    return ordinal == o.ordinal && label == o.label && status == o.status && model == o.model && features == o.features &&
           periods_kept == o.periods_kept && same_value(validation_score, o.validation_score) &&
           same_value(spearman, o.spearman) && same_value(ndcg, o.ndcg) && same_value(combined, o.combined) &&
           n_train_rows == o.n_train_rows && n_test_rows == o.n_test_rows && candidates == o.candidates;
  }
};

struct MetricSummary {
  double mean = kNotScored;
  double sd = kNotScored;
  std::size_t n = 0;

  bool operator==(const MetricSummary& o) const { return same_value(mean, o.mean) && same_value(sd, o.sd) && n == o.n; }
};

struct BacktestReport {
  std::vector<PeriodRecord> records;
  MetricSummary spearman;
  MetricSummary ndcg;
  MetricSummary combined;
  nlohmann::ordered_json pipeline;
  std::string data_checksum;
  std::string generator;

  bool operator==(const BacktestReport&) const = default;
};

struct PeriodPredictions {
  int ordinal = 0;
  std::string label;
  std::vector<std::string> obs_ids;
  std::vector<double> scores;

  bool operator==(const PeriodPredictions&) const = default;
};

struct BacktestOutput {
  BacktestReport report;
  std::vector<PeriodPredictions> predictions;  // one entry per record that produced predictions
};

struct BacktestOptions {
  unsigned jobs = 1;
};

/// Mean and sample standard deviation (0 when fewer than two values).
inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) {
    s.sd = 0.0;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

/// Recomputes the aggregate statistics from the scored records.
inline void recompute_aggregates(BacktestReport& report) {
  std::vector<double> sp, nd, co;
  for (const auto& r : report.records) {
    if (!r.scored()) continue;
    sp.push_back(r.spearman);
    nd.push_back(r.ndcg);
    co.push_back(r.combined);
  }
  report.spearman = summarize(sp);
  report.ndcg = summarize(nd);
  report.combined = summarize(co);
}

inline std::string checksum_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

/// Row positions of a period split by role.
struct PeriodRows {
  std::vector<std::size_t> labelled_train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> labelled_test;  // positions within `test`
};

inline PeriodRows classify_rows(const Period& p) {
  PeriodRows r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.is_train[i]) {
      if (p.has_target(i)) r.labelled_train.push_back(i);
    } else {
      if (p.has_target(i)) r.labelled_test.push_back(r.test.size());
      r.test.push_back(i);
    }
  }
  return r;
}

/// The configuration chosen for one target period.
struct Plan {
  ModelSpec model;
  std::vector<std::string> features;
  std::vector<int> periods_kept;
  double validation_score = kNotScored;
  std::vector<CandidateResult> candidates;
  std::optional<TrainedLinearModel> trained;
};

inline std::vector<PeriodBlock> restrict_blocks(const std::vector<PeriodBlock>& blocks, const std::vector<std::string>& features) {
  std::vector<PeriodBlock> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back({b.ordinal, b.x.select_columns(features), b.y});
  return out;
}

inline LabelledSet restrict_set(const LabelledSet& s, const std::vector<std::string>& features) {
  return {s.x.select_columns(features), s.y};
}

inline LabelledSet take_rows(const LabelledSet& s, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return {s.x.select_rows(idx), std::vector<double>(s.y.begin() + static_cast<std::ptrdiff_t>(begin),
                                                    s.y.begin() + static_cast<std::ptrdiff_t>(end))};
}

inline std::vector<int> ordinals_of(const std::vector<PeriodBlock>& blocks) {
  std::vector<int> out;
  for (const auto& b : blocks) out.push_back(b.ordinal);
  return out;
}

inline std::vector<PeriodBlock> blocks_with_ordinals(const std::vector<PeriodBlock>& blocks, const std::vector<int>& ordinals) {
  std::vector<PeriodBlock> out;
  for (const auto& b : blocks) {
    if (std::find(ordinals.begin(), ordinals.end(), b.ordinal) != ordinals.end()) out.push_back(b);
  }
  return out;
}

inline std::vector<std::string> correlation_order(const std::vector<PeriodBlock>& history, const std::vector<std::string>& features) {
  const LabelledSet stacked = stack_blocks(restrict_blocks(history, features));
  return order_features_by_correlation(stacked.x, stacked.y);
}

/// Runs the feature stages in order, then scores every grid model (with its own
/// period subset when configured) on the validation rows.
inline Plan choose_configuration(const std::vector<PeriodBlock>& history, const LabelledSet& validation,
                                 const PipelineSpec& spec) {
  require_informative_validation(validation.y);
  std::vector<std::string> features = validation.x.names();
  bool ranked = false;
  const SelectionStage* subset_stage = nullptr;
  const ModelSpec& screening_model = spec.models.front();

  for (const auto& stage : spec.stages) {
    switch (stage.kind) {
      case StageKind::PeriodSubset:
        subset_stage = &stage;
        break;
      case StageKind::SignStability: {
        SignStabilityOptions opts = SignStabilityOptions::defaults();
        if (!stage.windows.empty()) opts.windows = stage.windows;
        opts.max_flips = stage.max_flips;
        features = sign_stability_filter(restrict_blocks(history, features), restrict_set(validation, features), opts).outcome.kept;
        ranked = true;
        break;
      }
      case StageKind::SingleFeatureScreen: {
        const LabelledSet train = stack_blocks(restrict_blocks(history, features));
        features = single_feature_screen(features, screening_model, train, restrict_set(validation, features)).kept;
        ranked = true;
        break;
      }
      case StageKind::RedundancyPrune: {
        if (!ranked) features = correlation_order(history, features);
        features = redundancy_prune(features, per_period_means(restrict_blocks(history, features)), stage.threshold).kept;
        ranked = true;
        break;
      }
      case StageKind::Stepwise: {
        if (!ranked) features = correlation_order(history, features);
        const std::size_t n = validation.size();
        const auto cut = static_cast<std::size_t>(std::floor(stage.stepwise_fraction * static_cast<double>(n)));
        if (cut < 1 || cut >= n) throw Error(ErrorKind::DegenerateValidation, "too few period rows for the stepwise split");
        const LabelledSet current = restrict_set(validation, features);
        features = stepwise_forward_select(features, screening_model, take_rows(current, 0, cut), take_rows(current, cut, n),
                                           spec.selection_metric)
                       .kept;
        ranked = true;
        break;
      }
      case StageKind::TopK: {
        if (!ranked) features = correlation_order(history, features);
        features = top_k(features, stage.k).kept;
        ranked = true;
        break;
      }
    }
  }

  const std::vector<PeriodBlock> blocks = restrict_blocks(history, features);
  const LabelledSet val = restrict_set(validation, features);
  const std::vector<int> all_ordinals = ordinals_of(blocks);

  std::vector<std::optional<TrainedLinearModel>> models(spec.models.size());
  std::vector<std::vector<int>> kept(spec.models.size(), all_ordinals);
  std::size_t index = 0;
  auto scorer = [&](const ModelSpec& m) -> double {
    const std::size_t i = index++;
    if (subset_stage) {
      const auto sel = select_training_periods(blocks, m, val, spec.selection_metric, {kTieEpsilon, subset_stage->max_sweeps});
      kept[i] = sel.outcome.kept;
    }
    const LabelledSet train = stack_blocks(blocks_with_ordinals(blocks, kept[i]));
    models[i] = fit(train.x, train.y, m);
    const Eigen::VectorXd pred = predict(*models[i], val.x);
    return evaluate_metric(spec.selection_metric, as_span(pred), val.y);
  };
  const auto grid = grid_search_best(std::span<const ModelSpec>(spec.models), scorer);

  Plan plan;
  plan.model = spec.models[grid.best];
  plan.features = features;
  plan.periods_kept = kept[grid.best];
  plan.validation_score = grid.best_score;
  plan.trained = models[grid.best];
  for (const auto& row : grid.table) {
    plan.candidates.push_back({spec.models[row.index], row.score, row.error, row.score ? kept[row.index] : std::vector<int>{}});
  }
  return plan;
}

inline int default_first_eval(const Panel& panel) {
  if (auto ord = panel.ordinal_of("2002_1")) return std::max(*ord, 2);
  return 2;
}

class Engine {
 public:
  Engine(const Panel& panel, const PipelineSpec& spec) : panel_(panel), spec_(spec) {
    features_ = featurize_panel(panel_, spec_.recipe);
    rows_.reserve(panel_.num_periods());
    for (std::size_t k = 0; k < panel_.num_periods(); ++k) rows_.push_back(classify_rows(panel_.period(k)));
  }

  std::size_t index_of(int ordinal) const { return static_cast<std::size_t>(ordinal - panel_.first_ordinal()); }

  bool has_validation(std::size_t k) const { return rows_[k].labelled_train.size() >= 2; }

  /// Evaluates one target period. `prior` holds earlier records (only read for
  /// periods without their own validation rows).
  std::pair<PeriodRecord, std::optional<PeriodPredictions>> evaluate(std::size_t k, const std::vector<PeriodRecord>& prior) const {
    const Period& period = panel_.period(k);
    PeriodRecord rec;
    rec.ordinal = period.id.ordinal;
    rec.label = period.id.label;
    rec.n_test_rows = rows_[k].test.size();
    std::optional<PeriodPredictions> preds;
    try {
      preds = run(k, prior, rec);
    } catch (const std::exception& e) {
      rec.status = std::string("failed: ") + e.what();
      rec.spearman = rec.ndcg = rec.combined = kNotScored;
    }
    return {std::move(rec), std::move(preds)};
  }

 private:
  std::optional<PeriodPredictions> run(std::size_t k, const std::vector<PeriodRecord>& prior, PeriodRecord& rec) const {
    // history: labelled train rows of the windowed periods before k
    std::size_t begin = 0;
    if (spec_.window.kind == WindowSpec::Kind::Last && k > static_cast<std::size_t>(spec_.window.length)) {
      begin = k - static_cast<std::size_t>(spec_.window.length);
    }
    std::vector<PeriodBlock> history;
    for (std::size_t j = begin; j < k; ++j) {
      if (rows_[j].labelled_train.empty()) continue;
      history.push_back(block(j));
    }
    std::size_t history_rows = 0;
    for (const auto& b : history) history_rows += b.y.size();
    if (history.empty() || history_rows < 2) {
      throw Error(ErrorKind::InsufficientHistory, "no labelled training rows before " + panel_.period(k).id.label);
    }

    FeatureMatrix test = features_[k].select_rows(rows_[k].test);
    std::optional<LabelledSet> validation;
    if (has_validation(k)) validation = labelled_set(k);

    if (spec_.recipe.pca) {
      const LabelledSet stacked = stack_blocks(history);
      const PcaModel pca = pca_fit(stacked.x, *spec_.recipe.pca);
      for (auto& b : history) b.x = pca_transform(pca, b.x);
      test = pca_transform(pca, test);
      if (validation) validation->x = pca_transform(pca, validation->x);
    }
    if (spec_.transform) transform_targets(history);

    Plan plan;
    if (validation) {
      plan = choose_configuration(history, *validation, spec_);
    } else {
      plan = final_period_plan(history, prior);
    }

    rec.model = plan.model;
    rec.features = plan.features;
    rec.periods_kept = plan.periods_kept;
    rec.validation_score = plan.validation_score;
    rec.candidates = plan.candidates;

    const LabelledSet train = stack_blocks(restrict_blocks(blocks_with_ordinals(history, plan.periods_kept), plan.features));
    rec.n_train_rows = train.size();
    const TrainedLinearModel model = plan.trained ? *plan.trained : fit(train.x, train.y, plan.model);
    const FeatureMatrix test_x = test.select_columns(plan.features);
    const Eigen::VectorXd scores = predict(model, test_x);

    PeriodPredictions out;
    out.ordinal = rec.ordinal;
    out.label = rec.label;
    for (auto i : rows_[k].test) out.obs_ids.push_back(panel_.period(k).obs_ids[i]);
    out.scores.assign(scores.data(), scores.data() + scores.size());

    const auto& labelled = rows_[k].labelled_test;
    if (labelled.size() < 2) {
      rec.status = "unscored";
      return out;
    }
    std::vector<double> pred, truth;
    for (auto t : labelled) {
      pred.push_back(out.scores[t]);
      truth.push_back(panel_.period(k).targets[rows_[k].test[t]]);
    }
    try {
      rec.spearman = spearman(pred, truth);
      rec.ndcg = ndcg_top_fraction(pred, truth, 0.2);
      rec.combined = 0.5 * (rec.spearman + rec.ndcg);
      rec.status = "ok";
    } catch (const Error& e) {
      rec.spearman = rec.ndcg = rec.combined = kNotScored;
      rec.status = std::string("failed: ") + e.what();
    }
    return out;
  }

  PeriodBlock block(std::size_t j) const {
    const auto& idx = rows_[j].labelled_train;
    PeriodBlock b;
    b.ordinal = panel_.period(j).id.ordinal;
    b.x = features_[j].select_rows(idx);
    for (auto i : idx) b.y.push_back(panel_.period(j).targets[i]);
    return b;
  }

  LabelledSet labelled_set(std::size_t j) const {
    PeriodBlock b = block(j);
    return {std::move(b.x), std::move(b.y)};
  }

  void transform_targets(std::vector<PeriodBlock>& history) const {
    std::vector<DatedTarget> dated;
    for (const auto& b : history) {
      for (double y : b.y) dated.push_back({b.ordinal, y});
    }
    const auto ranked = chrono_scale_rank(dated, *spec_.transform);
    std::size_t at = 0;
    for (auto& b : history) {
      for (double& y : b.y) y = ranked[at++];
    }
  }

  /// Configuration for a period with no labelled rows of its own.
  Plan final_period_plan(const std::vector<PeriodBlock>& history, const std::vector<PeriodRecord>& prior) const {
    const PeriodRecord* last = nullptr;
    for (const auto& r : prior) {
      if (r.model && !r.failed()) last = &r;
    }
    const std::vector<std::string> all_features = history.front().x.names();
    const std::vector<int> all_ordinals = ordinals_of(history);

    if (last && spec_.final_period_rule == FinalPeriodRule::ReuseLast) {
      Plan plan;
      plan.model = *last->model;
      plan.features = last->features;
      plan.periods_kept = all_ordinals;
      if (has_subset_stage()) {
        std::vector<int> kept;
        for (int o : last->periods_kept) {
          if (std::find(all_ordinals.begin(), all_ordinals.end(), o) != all_ordinals.end()) kept.push_back(o);
        }
        if (!kept.empty()) plan.periods_kept = kept;
      }
      return plan;
    }
    if (spec_.final_period_rule == FinalPeriodRule::GenericAverage) {
      std::vector<double> sum(spec_.models.size(), 0.0);
      std::vector<std::size_t> count(spec_.models.size(), 0);
      for (const auto& r : prior) {
        for (std::size_t i = 0; i < r.candidates.size() && i < spec_.models.size(); ++i) {
          if (r.candidates[i].score) {
            sum[i] += *r.candidates[i].score;
            ++count[i];
          }
        }
      }
      std::optional<std::size_t> best;
      double best_mean = 0.0;
      for (std::size_t i = 0; i < sum.size(); ++i) {
        if (count[i] == 0) continue;
        const double m = sum[i] / static_cast<double>(count[i]);
        if (!best || m > best_mean) {
          best = i;
          best_mean = m;
        }
      }
      if (best) {
        Plan plan;
        plan.model = spec_.models[*best];
        plan.features = all_features;
        plan.periods_kept = all_ordinals;
        plan.validation_score = best_mean;
        return plan;
      }
    }
    // no earlier winner: validate on the most recent labelled history period
    if (history.size() < 2) {
      throw Error(ErrorKind::InsufficientHistory, "need two labelled history periods to choose a final-period model");
    }
    std::vector<PeriodBlock> earlier(history.begin(), history.end() - 1);
    const PeriodBlock& latest = history.back();
    Plan plan = choose_configuration(earlier, LabelledSet{latest.x, latest.y}, spec_);
    plan.periods_kept.push_back(latest.ordinal);
    plan.trained.reset();
    return plan;
  }

  bool has_subset_stage() const {
    return std::any_of(spec_.stages.begin(), spec_.stages.end(), [](const auto& s) { return s.kind == StageKind::PeriodSubset; });
  }

  const Panel& panel_;
  const PipelineSpec& spec_;
  std::vector<FeatureMatrix> features_;
  std::vector<PeriodRows> rows_;
};

}  // namespace detail

/// Walk-forward evaluation. For each target period T from the first evaluation
/// ordinal onward, models see only the train rows of earlier (windowed) periods,
/// plus period T's own train rows as validation feedback. A raw panel is imputed
/// with the pipeline's strategy first. Per-period failures are recorded, not thrown.
inline BacktestOutput run_backtest_full(const Panel& input, const PipelineSpec& spec, const BacktestOptions& options = {}) {
  spec.validate();
  if (input.empty()) throw Error(ErrorKind::InsufficientHistory, "panel has no periods");
  const Panel panel = input.is_imputed() ? input : impute(input, spec.imputation);

  const int first_eval = spec.first_eval_ordinal.value_or(detail::default_first_eval(panel));
  if (first_eval > panel.last_ordinal() || first_eval - panel.first_ordinal() < 1) {
    throw Error(ErrorKind::InsufficientHistory, "first evaluation ordinal " + std::to_string(first_eval) + " needs earlier periods in a panel spanning " +
                                                    std::to_string(panel.first_ordinal()) + ".." + std::to_string(panel.last_ordinal()));
  }

  const detail::Engine engine(panel, spec);
  const std::size_t first = engine.index_of(first_eval);
  const std::size_t count = panel.num_periods() - first;
  std::vector<PeriodRecord> records(count);
  std::vector<std::optional<PeriodPredictions>> predictions(count);
  const std::vector<PeriodRecord> no_prior;

  // periods with their own validation rows are independent of each other
  std::vector<std::size_t> independent;
  for (std::size_t k = first; k < panel.num_periods(); ++k) {
    if (engine.has_validation(k)) independent.push_back(k);
  }
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(std::max<std::size_t>(independent.size(), 1))));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < independent.size(); i = next++) {
      const std::size_t k = independent[i];
      auto [rec, pred] = engine.evaluate(k, no_prior);
      records[k - first] = std::move(rec);
      predictions[k - first] = std::move(pred);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  // the rest depend on earlier records; run in ordinal order
  for (std::size_t k = first; k < panel.num_periods(); ++k) {
    if (engine.has_validation(k)) continue;
    const std::vector<PeriodRecord> prior(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(k - first));
    auto [rec, pred] = engine.evaluate(k, prior);
    records[k - first] = std::move(rec);
    predictions[k - first] = std::move(pred);
  }

  BacktestOutput out;
  out.report.records = std::move(records);
  out.report.pipeline = to_json(spec);
  out.report.data_checksum = checksum_hex(input.content_checksum());
  out.report.generator = input.provenance().generator;
  recompute_aggregates(out.report);
  for (auto& p : predictions) {
    if (p) out.predictions.push_back(std::move(*p));
  }
  return out;
}

inline BacktestReport run_backtest(const Panel& panel, const PipelineSpec& spec, const BacktestOptions& options = {}) {
  return run_backtest_full(panel, spec, options).report;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace detail {

inline nlohmann::ordered_json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
}

template <typename Json>
double number_or_nan(const Json& j) {
  return j.is_null() ? kNotScored : j.template get<double>();
}

inline nlohmann::ordered_json to_json(const MetricSummary& s) {
  return {{"mean", number_or_null(s.mean)}, {"sd", number_or_null(s.sd)}, {"n", s.n}};
}

template <typename Json>
MetricSummary summary_from_json(const Json& j) {
  return {number_or_nan(j.at("mean")), number_or_nan(j.at("sd")), j.at("n").template get<std::size_t>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const BacktestReport& report) {
  using detail::number_or_null;
  nlohmann::ordered_json j;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json jr;
    jr["period"] = r.label;
    jr["ordinal"] = r.ordinal;
    jr["status"] = r.status;
    jr["model"] = r.model ? to_json(*r.model) : nlohmann::ordered_json(nullptr);
    jr["features"] = r.features;
    jr["periods_kept"] = r.periods_kept;
    jr["validation_score"] = number_or_null(r.validation_score);
    jr["spearman"] = number_or_null(r.spearman);
    jr["ndcg"] = number_or_null(r.ndcg);
    jr["combined"] = number_or_null(r.combined);
    jr["n_train_rows"] = r.n_train_rows;
    jr["n_test_rows"] = r.n_test_rows;
    jr["candidates"] = nlohmann::ordered_json::array();
    for (const auto& c : r.candidates) {
      jr["candidates"].push_back({{"model", to_json(c.model)},
                                  {"score", c.score ? nlohmann::ordered_json(*c.score) : nlohmann::ordered_json(nullptr)},
                                  {"error", c.error},
                                  {"periods_kept", c.periods_kept}});
    }
    j["records"].push_back(std::move(jr));
  }
  j["aggregates"] = {{"spearman", detail::to_json(report.spearman)},
                     {"ndcg", detail::to_json(report.ndcg)},
                     {"combined", detail::to_json(report.combined)}};
  j["provenance"] = {{"pipeline", report.pipeline}, {"data_checksum", report.data_checksum}, {"generator", report.generator}};
  return j;
}

template <typename Json>
BacktestReport report_from_json(const Json& j) {
  using detail::number_or_nan;
  BacktestReport report;
  try {
    for (const auto& jr : j.at("records")) {
      PeriodRecord r;
      r.label = jr.at("period").template get<std::string>();
      r.ordinal = jr.at("ordinal").template get<int>();
      r.status = jr.at("status").template get<std::string>();
      if (!jr.at("model").is_null()) r.model = model_spec_from_json(jr.at("model"));
      r.features = jr.at("features").template get<std::vector<std::string>>();
      r.periods_kept = jr.at("periods_kept").template get<std::vector<int>>();
      r.validation_score = number_or_nan(jr.at("validation_score"));
      r.spearman = number_or_nan(jr.at("spearman"));
      r.ndcg = number_or_nan(jr.at("ndcg"));
      r.combined = number_or_nan(jr.at("combined"));
      r.n_train_rows = jr.at("n_train_rows").template get<std::size_t>();
      r.n_test_rows = jr.at("n_test_rows").template get<std::size_t>();
      for (const auto& jc : jr.at("candidates")) {
        CandidateResult c;
        c.model = model_spec_from_json(jc.at("model"));
        if (!jc.at("score").is_null()) c.score = jc.at("score").template get<double>();
        c.error = jc.at("error").template get<std::string>();
        c.periods_kept = jc.at("periods_kept").template get<std::vector<int>>();
        r.candidates.push_back(std::move(c));
      }
      report.records.push_back(std::move(r));
    }
    const auto& agg = j.at("aggregates");
    report.spearman = detail::summary_from_json(agg.at("spearman"));
    report.ndcg = detail::summary_from_json(agg.at("ndcg"));
    report.combined = detail::summary_from_json(agg.at("combined"));
    const auto& prov = j.at("provenance");
    report.pipeline = nlohmann::ordered_json::parse(prov.at("pipeline").dump());
    report.data_checksum = prov.at("data_checksum").template get<std::string>();
    report.generator = prov.at("generator").template get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed report: ") + e.what());
  }
  return report;
}

inline std::string report_json_text(const BacktestReport& report) { return to_json(report).dump(2) + "\n"; }

inline std::string report_csv_text(const BacktestReport& report) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_double(v); };
  std::string out = "period,model,spearman,ndcg,combined,n_features,n_periods_kept,status\n";
  for (const auto& r : report.records) {
    out += csv::quote(r.label) + "," + csv::quote(r.model ? describe(*r.model) : "") + "," + num(r.spearman) + "," + num(r.ndcg) +
           "," + num(r.combined) + "," + std::to_string(r.features.size()) + "," + std::to_string(r.periods_kept.size()) + "," +
           csv::quote(r.status) + "\n";
  }
  return out;
}

inline std::string predictions_csv_text(const PeriodPredictions& p) {
  std::string out = "period_label,obs_id,score\n";
  for (std::size_t i = 0; i < p.obs_ids.size(); ++i) {
    out += p.label + "," + p.obs_ids[i] + "," + csv::format_double(p.scores[i]) + "\n";
  }
  return out;
}

enum class ReportFormat { Json, Csv };

inline void emit_report(const BacktestReport& report, ReportFormat format, const std::string& path) {
  csv::write_file(path, format == ReportFormat::Json ? report_json_text(report) : report_csv_text(report));
}

}  // namespace stockrank
