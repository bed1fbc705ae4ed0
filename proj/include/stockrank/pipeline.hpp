#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stockrank/error.hpp"
#include "stockrank/features.hpp"
#include "stockrank/linear_models.hpp"
#include "stockrank/metrics.hpp"
#include "stockrank/panel.hpp"
#include "stockrank/selection.hpp"
#include "stockrank/target_transform.hpp"

namespace stockrank {

enum class StageKind { PeriodSubset, SignStability, RedundancyPrune, SingleFeatureScreen, Stepwise, TopK };

inline std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::PeriodSubset: return "period_subset";
    case StageKind::SignStability: return "sign_stability";
    case StageKind::RedundancyPrune: return "redundancy_prune";
    case StageKind::SingleFeatureScreen: return "single_feature_screen";
    case StageKind::Stepwise: return "stepwise";
    case StageKind::TopK: return "top_k";
  }
  return "";
}

inline std::optional<StageKind> stage_from_string(std::string_view s) {
  for (auto k : {StageKind::PeriodSubset, StageKind::SignStability, StageKind::RedundancyPrune, StageKind::SingleFeatureScreen,
                 StageKind::Stepwise, StageKind::TopK}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// One selection step. Only the fields of the stage's own kind are used.
struct SelectionStage {
  StageKind kind = StageKind::TopK;
  std::size_t k = 26;                // top_k
  double threshold = 0.8;            // redundancy_prune
  int max_flips = 10;                // sign_stability
  std::vector<int> windows;          // sign_stability; empty = 2..30 and all
  int max_sweeps = 10;               // period_subset
  double stepwise_fraction = 0.6;    // stepwise: leading share of period-T train rows used for fitting

  bool operator==(const SelectionStage&) const = default;
};

enum class FinalPeriodRule { ReuseLast, GenericAverage };

struct PipelineSpec {
  ImputationStrategy imputation = ImputationStrategy::Zero;
  FeatureRecipe recipe;
  std::optional<TransformSpec> transform;  // empty = raw targets
  std::vector<SelectionStage> stages;
  std::vector<ModelSpec> models{ModelSpec::default_ridge()};
  WindowSpec window;  // All = expanding, Last(k) = sliding
  std::optional<int> first_eval_ordinal;
  FinalPeriodRule final_period_rule = FinalPeriodRule::ReuseLast;
  MetricKind selection_metric = MetricKind::combined();

  void validate() const {
    recipe.validate();
    if (models.empty()) throw Error(ErrorKind::InvalidConfig, "model grid is empty");
    for (const auto& m : models) m.validate();
    if (first_eval_ordinal && *first_eval_ordinal < 2) throw Error(ErrorKind::InvalidConfig, "first_eval_ordinal must be >= 2");
    if (window.kind == WindowSpec::Kind::Last && window.length < 1) throw Error(ErrorKind::InvalidConfig, "sliding window length must be >= 1");
    if (transform && !std::isfinite(transform->power)) throw Error(ErrorKind::InvalidConfig, "transform power must be finite");
    int subset_stages = 0;
    for (const auto& s : stages) {
      if (s.kind == StageKind::PeriodSubset) ++subset_stages;
      if (s.kind == StageKind::TopK && s.k < 1) throw Error(ErrorKind::InvalidConfig, "top_k needs k >= 1");
      if (s.kind == StageKind::RedundancyPrune && !(s.threshold > 0.0 && s.threshold <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "redundancy threshold must lie in (0, 1]");
      }
      if (s.kind == StageKind::SignStability && s.max_flips < 0) throw Error(ErrorKind::InvalidConfig, "max_flips must be >= 0");
      if (s.kind == StageKind::PeriodSubset && s.max_sweeps < 1) throw Error(ErrorKind::InvalidConfig, "max_sweeps must be >= 1");
      if (s.kind == StageKind::Stepwise && !(s.stepwise_fraction > 0.0 && s.stepwise_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "stepwise fraction must lie in (0, 1)");
      }
      for (int w : s.windows) {
        if (w < 0 || w == 1) throw Error(ErrorKind::InvalidConfig, "sign-stability windows must be 0 (all) or >= 2");
      }
    }
    if (subset_stages > 1) throw Error(ErrorKind::InvalidConfig, "period_subset may appear at most once");
  }

  bool operator==(const PipelineSpec&) const = default;
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const FeatureRecipe& r) {
  nlohmann::ordered_json j;
  j["stats"] = nlohmann::ordered_json::array();
  for (auto s : r.stats) j["stats"].push_back(std::string(to_string(s)));
  j["percentiles"] = r.include_percentiles;
  j["calendar"] = r.include_calendar;
  j["pairwise"] = nlohmann::ordered_json::array();
  for (auto op : r.pairwise) j["pairwise"].push_back(std::string(to_string(op)));
  if (r.indicators) {
    j["indicators"] = {{"ma_window", r.indicators->ma_window},
                       {"ema_alpha", r.indicators->ema_alpha},
                       {"momentum_lag", r.indicators->momentum_lag},
                       {"roc_lag", r.indicators->roc_lag}};
  } else {
    j["indicators"] = nullptr;
  }
  j["pca"] = r.pca ? nlohmann::ordered_json(*r.pca) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const SelectionStage& s) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(s.kind));
  switch (s.kind) {
    case StageKind::TopK: j["k"] = s.k; break;
    case StageKind::RedundancyPrune: j["threshold"] = s.threshold; break;
    case StageKind::SignStability:
      j["max_flips"] = s.max_flips;
      j["windows"] = s.windows;
      break;
    case StageKind::PeriodSubset: j["max_sweeps"] = s.max_sweeps; break;
    case StageKind::Stepwise: j["fraction"] = s.stepwise_fraction; break;
    case StageKind::SingleFeatureScreen: break;
  }
  return j;
}

inline nlohmann::ordered_json to_json(const PipelineSpec& p) {
  nlohmann::ordered_json j;
  j["imputation"] = std::string(to_string(p.imputation));
  j["recipe"] = to_json(p.recipe);
  j["target_transform"] = p.transform ? nlohmann::ordered_json{{"power", p.transform->power}} : nlohmann::ordered_json(nullptr);
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : p.stages) j["stages"].push_back(to_json(s));
  j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : p.models) j["models"].push_back(to_json(m));
  if (p.window.kind == WindowSpec::Kind::All) {
    j["window"] = {{"kind", "expanding"}};
  } else {
    j["window"] = {{"kind", "sliding"}, {"length", p.window.length}};
  }
  j["first_eval_ordinal"] = p.first_eval_ordinal ? nlohmann::ordered_json(*p.first_eval_ordinal) : nlohmann::ordered_json(nullptr);
  j["final_period_rule"] = p.final_period_rule == FinalPeriodRule::ReuseLast ? "reuse_last" : "generic_average";
  j["selection_metric"] = to_string(p.selection_metric);
  return j;
}

namespace detail {

template <typename Json>
std::string require_string(const Json& j, const std::string& where) {
  if (!j.is_string()) throw Error(ErrorKind::InvalidConfig, where + " must be a string");
  return j.template get<std::string>();
}

template <typename Json>
FeatureRecipe recipe_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) {
    const auto name = j.template get<std::string>();
    if (name == "mean") return FeatureRecipe{};
    if (name == "mean_percentile_calendar") return FeatureRecipe::mean_percentile_calendar();
    if (name == "aggregation_stats") return FeatureRecipe::aggregation_stats();
    throw Error(ErrorKind::InvalidConfig, where + ": unknown recipe preset '" + name + "'");
  }
  reject_unknown_keys(j, {"stats", "percentiles", "calendar", "pairwise", "indicators", "pca"}, where);
  FeatureRecipe r;
  if (j.contains("stats")) {
    if (!j.at("stats").is_array()) throw Error(ErrorKind::InvalidConfig, where + ".stats must be an array");
    r.stats.clear();
    for (const auto& s : j.at("stats")) {
      const auto stat = stat_from_string(require_string(s, where + ".stats[]"));
      if (!stat) throw Error(ErrorKind::InvalidConfig, where + ": unknown stat '" + s.template get<std::string>() + "'");
      r.stats.push_back(*stat);
    }
  }
  r.include_percentiles = get_or<bool>(j, "percentiles", false, where);
  r.include_calendar = get_or<bool>(j, "calendar", false, where);
  if (j.contains("pairwise")) {
    if (!j.at("pairwise").is_array()) throw Error(ErrorKind::InvalidConfig, where + ".pairwise must be an array");
    for (const auto& s : j.at("pairwise")) {
      const auto op = pairwise_from_string(require_string(s, where + ".pairwise[]"));
      if (!op) throw Error(ErrorKind::InvalidConfig, where + ": unknown pairwise op '" + s.template get<std::string>() + "'");
      r.pairwise.push_back(*op);
    }
  }
  if (j.contains("indicators") && !j.at("indicators").is_null()) {
    const auto& ij = j.at("indicators");
    const std::string w = where + ".indicators";
    reject_unknown_keys(ij, {"ma_window", "ema_alpha", "momentum_lag", "roc_lag"}, w);
    IndicatorParams ip;
    ip.ma_window = get_or<int>(ij, "ma_window", ip.ma_window, w);
    ip.ema_alpha = get_or<double>(ij, "ema_alpha", ip.ema_alpha, w);
    ip.momentum_lag = get_or<int>(ij, "momentum_lag", ip.momentum_lag, w);
    ip.roc_lag = get_or<int>(ij, "roc_lag", ip.roc_lag, w);
    r.indicators = ip;
  }
  if (j.contains("pca") && !j.at("pca").is_null()) r.pca = get_or<double>(j, "pca", 0.99, where);
  try {
    r.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, where + ": " + e.what());
  }
  return r;
}

template <typename Json>
SelectionStage stage_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorKind::InvalidConfig, where + " needs a 'kind'");
  const auto kind = stage_from_string(require_string(j.at("kind"), where + ".kind"));
  if (!kind) throw Error(ErrorKind::InvalidConfig, where + ": unknown stage kind '" + j.at("kind").template get<std::string>() + "'");
  SelectionStage s;
  s.kind = *kind;
  switch (s.kind) {
    case StageKind::TopK:
      reject_unknown_keys(j, {"kind", "k"}, where);
      if (!j.contains("k")) throw Error(ErrorKind::InvalidConfig, where + ": top_k needs 'k'");
      s.k = get_or<std::size_t>(j, "k", s.k, where);
      break;
    case StageKind::RedundancyPrune:
      reject_unknown_keys(j, {"kind", "threshold"}, where);
      s.threshold = get_or<double>(j, "threshold", s.threshold, where);
      break;
    case StageKind::SignStability:
      reject_unknown_keys(j, {"kind", "max_flips", "windows"}, where);
      s.max_flips = get_or<int>(j, "max_flips", s.max_flips, where);
      s.windows = get_or<std::vector<int>>(j, "windows", {}, where);
      break;
    case StageKind::PeriodSubset:
      reject_unknown_keys(j, {"kind", "max_sweeps"}, where);
      s.max_sweeps = get_or<int>(j, "max_sweeps", s.max_sweeps, where);
      break;
    case StageKind::Stepwise:
      reject_unknown_keys(j, {"kind", "fraction"}, where);
      s.stepwise_fraction = get_or<double>(j, "fraction", s.stepwise_fraction, where);
      break;
    case StageKind::SingleFeatureScreen:
      reject_unknown_keys(j, {"kind"}, where);
      break;
  }
  return s;
}

}  // namespace detail

/// Parses a pipeline document. Absent keys take their defaults; unknown keys and
/// out-of-range values raise InvalidConfig.
template <typename Json>
PipelineSpec pipeline_from_json(const Json& j, const std::string& where = "pipeline") {
  using detail::get_or;
  using detail::require_string;
  detail::reject_unknown_keys(j, {"imputation", "recipe", "target_transform", "stages", "models", "window", "first_eval_ordinal",
                                  "final_period_rule", "selection_metric"},
                              where);
  PipelineSpec p;
  if (j.contains("imputation")) {
    const auto s = require_string(j.at("imputation"), where + ".imputation");
    if (s == "zero") {
      p.imputation = ImputationStrategy::Zero;
    } else if (s == "median") {
      p.imputation = ImputationStrategy::MedianPerVariable;
    } else {
      throw Error(ErrorKind::InvalidConfig, where + ".imputation must be 'zero' or 'median'");
    }
  }
  if (j.contains("recipe")) p.recipe = detail::recipe_from_json(j.at("recipe"), where + ".recipe");
  if (j.contains("target_transform") && !j.at("target_transform").is_null()) {
    const auto& t = j.at("target_transform");
    detail::reject_unknown_keys(t, {"power"}, where + ".target_transform");
    p.transform = TransformSpec{get_or<double>(t, "power", 2.0, where + ".target_transform")};
  }
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) throw Error(ErrorKind::InvalidConfig, where + ".stages must be an array");
    std::size_t i = 0;
    for (const auto& s : j.at("stages")) p.stages.push_back(detail::stage_from_json(s, where + ".stages[" + std::to_string(i++) + "]"));
  }
  if (j.contains("models")) {
    if (!j.at("models").is_array()) throw Error(ErrorKind::InvalidConfig, where + ".models must be an array");
    p.models.clear();
    std::size_t i = 0;
    for (const auto& m : j.at("models")) p.models.push_back(model_spec_from_json(m, where + ".models[" + std::to_string(i++) + "]"));
  }
  if (j.contains("window")) {
    const auto& w = j.at("window");
    const std::string ww = where + ".window";
    detail::reject_unknown_keys(w, {"kind", "length"}, ww);
    const auto kind = w.contains("kind") ? require_string(w.at("kind"), ww + ".kind") : std::string("expanding");
    if (kind == "expanding") {
      if (w.contains("length")) throw Error(ErrorKind::InvalidConfig, ww + ": expanding window takes no length");
      p.window = WindowSpec::all();
    } else if (kind == "sliding") {
      if (!w.contains("length")) throw Error(ErrorKind::InvalidConfig, ww + ": sliding window needs 'length'");
      p.window = WindowSpec::last(get_or<int>(w, "length", 1, ww));
    } else {
      throw Error(ErrorKind::InvalidConfig, ww + ".kind must be 'expanding' or 'sliding'");
    }
  }
  if (j.contains("first_eval_ordinal") && !j.at("first_eval_ordinal").is_null()) {
    p.first_eval_ordinal = get_or<int>(j, "first_eval_ordinal", 2, where);
  }
  if (j.contains("final_period_rule")) {
    const auto s = require_string(j.at("final_period_rule"), where + ".final_period_rule");
    if (s == "reuse_last") {
      p.final_period_rule = FinalPeriodRule::ReuseLast;
    } else if (s == "generic_average") {
      p.final_period_rule = FinalPeriodRule::GenericAverage;
    } else {
      throw Error(ErrorKind::InvalidConfig, where + ".final_period_rule must be 'reuse_last' or 'generic_average'");
    }
  }
  if (j.contains("selection_metric")) {
    const auto s = require_string(j.at("selection_metric"), where + ".selection_metric");
    if (s == "combined") {
      p.selection_metric = MetricKind::combined();
    } else if (s == "spearman") {
      p.selection_metric = MetricKind::spearman();
    } else if (s == "ndcg") {
      p.selection_metric = MetricKind::ndcg();
    } else {
      throw Error(ErrorKind::InvalidConfig, where + ".selection_metric must be 'combined', 'spearman' or 'ndcg'");
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidConfig) throw;
    throw Error(ErrorKind::InvalidConfig, where + ": " + e.what());
  }
  return p;
}

}  // namespace stockrank
