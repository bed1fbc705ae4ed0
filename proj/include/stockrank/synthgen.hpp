#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stockrank/error.hpp"
#include "stockrank/linear_models.hpp"
#include "stockrank/panel.hpp"

namespace stockrank {

struct SynthConfig {
  int n_periods = 42;
  int n_stocks = 900;
  int n_variables = 70;
  int n_months = 6;
  std::vector<std::vector<double>> coefficients;  // one vector per regime; empty = default single regime
  std::vector<int> regime_of_period;              // per period (ordinal order); empty = all regime 0
  double noise_sigma = 1.0;
  double missing_rate = 0.0;
  double train_fraction = 0.6;
  std::uint64_t seed = 0;
  std::string start_label = "1996_2";
  bool unlabelled_final_period = false;  // drop every target of the last period

  /// Coefficient vector used when none is configured: (-1)^v / (v + 1).
  static std::vector<double> default_coefficients(int n_variables) {
    std::vector<double> c;
    for (int v = 0; v < n_variables; ++v) c.push_back((v % 2 == 0 ? 1.0 : -1.0) / (v + 1.0));
    return c;
  }

  std::vector<std::vector<double>> regimes() const {
    return coefficients.empty() ? std::vector<std::vector<double>>{default_coefficients(n_variables)} : coefficients;
  }

  int regime(int period_index) const {
    return regime_of_period.empty() ? 0 : regime_of_period[static_cast<std::size_t>(period_index)];
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
    if (n_periods < 1 || n_stocks < 1 || n_variables < 1 || n_months < 1) bad("n_periods, n_stocks, n_variables and n_months must be >= 1");
    for (const auto& c : coefficients) {
      if (c.size() != static_cast<std::size_t>(n_variables)) bad("every coefficient vector needs n_variables entries");
      for (double v : c) {
        if (!std::isfinite(v)) bad("coefficients must be finite");
      }
    }
    if (!regime_of_period.empty()) {
      if (regime_of_period.size() != static_cast<std::size_t>(n_periods)) bad("regime_of_period needs one entry per period");
      const auto n_regimes = static_cast<int>(regimes().size());
      for (int r : regime_of_period) {
        if (r < 0 || r >= n_regimes) bad("regime_of_period refers to a missing regime");
      }
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma must be >= 0");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) bad("missing_rate must lie in [0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) bad("train_fraction must lie in (0, 1)");
    if (!try_parse_half_year(start_label)) bad("start_label must look like YYYY_H");
  }
};

struct GroundTruth {
  std::vector<std::vector<double>> coefficients;
  std::vector<int> regime_of_period;  // one entry per period
  std::uint64_t seed = 0;
  std::string generator;
};

/// mt19937_64 plus explicitly defined conversions, so the stream is reproducible
/// from the seed alone:
///   uniform() = (next() >> 11) * 2^-53                      in [0, 1)
///   normal()  = Box-Muller on u1 = 1 - uniform(), u2 = uniform():
///               r = sqrt(-2 ln u1); returns r cos(2 pi u2), then r sin(2 pi u2)
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    return r * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

inline std::string generator_description(std::uint64_t seed) {
  return "mt19937_64(seed=" + std::to_string(seed) + ");uniform53;box-muller;order=values,noise,train,mask";
}

/// Number of training rows per period: round(train_fraction * n), kept within [1, n-1] when n >= 2.
inline int train_rows_per_period(const SynthConfig& config) {
  const int n = config.n_stocks;
  int k = static_cast<int>(std::lround(config.train_fraction * n));
  if (n >= 2) k = std::clamp(k, 1, n - 1);
  return std::clamp(k, 0, n);
}

/// Generates a panel. Per period, in ordinal order, the stream is consumed as:
///  1. values: stock-major, then variable, then month, one normal each;
///  2. noise: one normal per stock (always drawn, even when sigma is 0);
///  3. train flags: partial Fisher-Yates over stock indices, step i draws one
///     uniform u and swaps i with i + floor(u * (n - i)); the first k picks train;
///  4. mask: one uniform per cell in the order of step 1, masked when u < missing_rate.
/// Targets use the unmasked values: coefficients . (per-variable monthly means) + sigma * noise.
inline std::pair<Panel, GroundTruth> generate_panel(const SynthConfig& config) {
  config.validate();
  const auto regimes = config.regimes();
  ColumnSchema schema;
  schema.n_variables = config.n_variables;
  schema.n_months = config.n_months;
  const std::size_t width = schema.values_per_row();
  const auto n = static_cast<std::size_t>(config.n_stocks);
  const int n_train = train_rows_per_period(config);

  SynthRng rng(config.seed);
  GroundTruth truth;
  truth.coefficients = regimes;
  truth.seed = config.seed;
  truth.generator = generator_description(config.seed);

  std::vector<Period> periods;
  HalfYear label = parse_half_year(config.start_label);
  const int digits = static_cast<int>(std::to_string(config.n_stocks).size());
  for (int t = 0; t < config.n_periods; ++t, label = next_half_year(label)) {
    const int regime = config.regime(t);
    truth.regime_of_period.push_back(regime);
    const auto& coef = regimes[static_cast<std::size_t>(regime)];

    Period p;
    p.id = {t + 1, format_half_year(label)};
    p.width = width;
    p.monthly.resize(n * width);
    for (double& v : p.monthly) v = rng.normal();

    p.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double signal = 0.0;
      for (int v = 0; v < config.n_variables; ++v) {
        double sum = 0.0;
        for (int m = 0; m < config.n_months; ++m) sum += p.monthly[i * width + static_cast<std::size_t>(v * config.n_months + m)];
        signal += coef[static_cast<std::size_t>(v)] * (sum / config.n_months);
      }
      p.targets[i] = signal + config.noise_sigma * rng.normal();
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (int i = 0; i < n_train; ++i) {
      const auto remaining = n - static_cast<std::size_t>(i);
      auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.uniform() * static_cast<double>(remaining));
      if (j >= n) j = n - 1;
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    p.is_train.assign(n, 0);
    for (int i = 0; i < n_train; ++i) p.is_train[order[static_cast<std::size_t>(i)]] = 1;

    for (double& v : p.monthly) {
      if (rng.uniform() < config.missing_rate) v = kMissing;
    }
    if (config.unlabelled_final_period && t == config.n_periods - 1) p.targets.assign(n, kMissing);

    for (std::size_t i = 0; i < n; ++i) {
      std::string id = std::to_string(i + 1);
      p.obs_ids.push_back("s" + std::string(static_cast<std::size_t>(digits) - id.size(), '0') + id);
      p.row_index.push_back(i);
    }
    periods.push_back(std::move(p));
  }

  Provenance prov;
  prov.source = "synthgen";
  prov.generator = truth.generator;
  return {Panel::from_periods(schema, std::move(periods), std::move(prov)), std::move(truth)};
}

inline nlohmann::ordered_json to_json(const GroundTruth& g) {
  nlohmann::ordered_json j;
  j["coefficients"] = g.coefficients;
  j["regime_of_period"] = g.regime_of_period;
  j["seed"] = g.seed;
  j["generator"] = g.generator;
  return j;
}

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n_periods"] = c.n_periods;
  j["n_stocks"] = c.n_stocks;
  j["n_variables"] = c.n_variables;
  j["n_months"] = c.n_months;
  j["coefficients"] = c.coefficients;
  j["regime_of_period"] = c.regime_of_period;
  j["noise_sigma"] = c.noise_sigma;
  j["missing_rate"] = c.missing_rate;
  j["train_fraction"] = c.train_fraction;
  j["seed"] = c.seed;
  j["start_label"] = c.start_label;
  j["unlabelled_final_period"] = c.unlabelled_final_period;
  return j;
}

/// Parses a synth document; `seed` is required, unknown keys are rejected.
template <typename Json>
SynthConfig synth_config_from_json(const Json& j, const std::string& where = "synth") {
  using detail::get_or;
  detail::reject_unknown_keys(j, {"n_periods", "n_stocks", "n_variables", "n_months", "coefficients", "regime_of_period", "noise_sigma",
                                  "missing_rate", "train_fraction", "seed", "start_label", "unlabelled_final_period"},
                              where);
  if (!j.contains("seed")) throw Error(ErrorKind::InvalidConfig, where + ": missing required field 'seed'");
  if (!j.at("seed").is_number_unsigned()) throw Error(ErrorKind::InvalidConfig, where + ".seed must be a non-negative integer");
  SynthConfig c;
  c.n_periods = get_or<int>(j, "n_periods", c.n_periods, where);
  c.n_stocks = get_or<int>(j, "n_stocks", c.n_stocks, where);
  c.n_variables = get_or<int>(j, "n_variables", c.n_variables, where);
  c.n_months = get_or<int>(j, "n_months", c.n_months, where);
  c.coefficients = get_or<std::vector<std::vector<double>>>(j, "coefficients", {}, where);
  c.regime_of_period = get_or<std::vector<int>>(j, "regime_of_period", {}, where);
  c.noise_sigma = get_or<double>(j, "noise_sigma", c.noise_sigma, where);
  c.missing_rate = get_or<double>(j, "missing_rate", c.missing_rate, where);
  c.train_fraction = get_or<double>(j, "train_fraction", c.train_fraction, where);
  c.seed = j.at("seed").template get<std::uint64_t>();
  c.start_label = get_or<std::string>(j, "start_label", c.start_label, where);
  c.unlabelled_final_period = get_or<bool>(j, "unlabelled_final_period", false, where);
  c.validate();
  return c;
}

}  // namespace stockrank
