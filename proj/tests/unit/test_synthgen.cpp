#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace stockrank;

namespace {

SynthConfig cfg(std::uint64_t seed) {
  SynthConfig c;
  c.n_periods = 4;
  c.n_stocks = 50;
  c.n_variables = 3;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Rng, UniformAndNormalStream) {
  SynthRng a(5), b(5);
  std::mt19937_64 raw(5);
  const std::uint64_t first = raw();
  EXPECT_EQ(a.uniform(), static_cast<double>(first >> 11) * 0x1.0p-53);
  b.uniform();
  EXPECT_EQ(a.uniform(), b.uniform());

  SynthRng n(9);
  std::mt19937_64 r(9);
  const double u1 = 1.0 - static_cast<double>(r() >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(r() >> 11) * 0x1.0p-53;
  const double rad = std::sqrt(-2.0 * std::log(u1));
  EXPECT_EQ(n.normal(), rad * std::cos(2.0 * std::numbers::pi * u2));
  EXPECT_EQ(n.normal(), rad * std::sin(2.0 * std::numbers::pi * u2));
}

TEST(Generate, SameSeedIsBitIdentical) {
  const auto a = generate_panel(cfg(3));
  const auto b = generate_panel(cfg(3));
  EXPECT_EQ(write_panel_csv(a.first), write_panel_csv(b.first));
  EXPECT_EQ(a.first.content_checksum(), b.first.content_checksum());
  EXPECT_EQ(to_json(a.second).dump(), to_json(b.second).dump());
  EXPECT_NE(generate_panel(cfg(4)).first.content_checksum(), a.first.content_checksum());
}

TEST(Generate, ShapeLabelsAndFlags) {
  const auto [panel, truth] = generate_panel(cfg(3));
  ASSERT_EQ(panel.num_periods(), 4u);
  EXPECT_EQ(panel.period(0).id.label, "1996_2");
  EXPECT_EQ(panel.period(1).id.label, "1997_1");
  EXPECT_EQ(panel.period(3).id.label, "1998_1");
  EXPECT_EQ(panel.period(0).obs_ids.front(), "s01");
  EXPECT_EQ(panel.period(0).obs_ids.back(), "s50");
  for (const auto& p : panel.periods()) {
    EXPECT_EQ(std::count(p->is_train.begin(), p->is_train.end(), 1), 30);
  }
  EXPECT_EQ(truth.regime_of_period, (std::vector<int>{0, 0, 0, 0}));
  EXPECT_EQ(truth.coefficients.front(), SynthConfig::default_coefficients(3));
  EXPECT_EQ(panel.provenance().source, "synthgen");
  EXPECT_EQ(panel.provenance().generator, truth.generator);
}

TEST(Generate, NoiselessOlsRecoversCoefficients) {
  SynthConfig c = cfg(6);
  c.n_stocks = 200;
  c.n_variables = 6;
  c.noise_sigma = 0.0;
  c.coefficients = {{0.5, -1.25, 2.0, 0.0, 0.75, -0.1}};
  const auto [panel, truth] = generate_panel(c);
  const auto feats = featurize_panel(impute(panel, ImputationStrategy::Zero), FeatureRecipe{});
  for (std::size_t k = 0; k < panel.num_periods(); ++k) {
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(panel.period(k).targets.data(), 200);
    const auto model = fit(feats[k].values(), y, ModelSpec::ols(false));
    for (int v = 0; v < 6; ++v) EXPECT_NEAR(model.weights(v), c.coefficients[0][static_cast<std::size_t>(v)], 1e-8);
    EXPECT_NEAR(spearman(as_span(predict(model, feats[k].values())), panel.period(k).targets), 1.0, 1e-12);
  }
}

TEST(Generate, RegimesAndNegation) {
  SynthConfig c = cfg(7);
  c.noise_sigma = 0.0;
  auto base = SynthConfig::default_coefficients(3);
  auto neg = base;
  for (double& v : neg) v = -v;
  c.coefficients = {base, neg};
  c.regime_of_period = {0, 1, 1, 0};
  const auto [panel, truth] = generate_panel(c);
  EXPECT_EQ(truth.regime_of_period, c.regime_of_period);
  const auto feats = featurize_panel(impute(panel, ImputationStrategy::Zero), FeatureRecipe{});
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(base.data(), 3);
  for (std::size_t k = 0; k < 4; ++k) {
    const Eigen::VectorXd signal = feats[k].values() * w;
    const double expected = c.regime_of_period[k] == 0 ? 1.0 : -1.0;
    EXPECT_NEAR(spearman(as_span(signal), panel.period(k).targets), expected, 1e-12);
  }
}

TEST(Generate, MomentsWithinBands) {
  SynthConfig c = cfg(8);
  c.n_periods = 2;
  c.n_stocks = 400;
  c.n_variables = 10;
  const auto panel = generate_panel(c).first;
  double sum = 0, sq = 0, n = 0;
  for (const auto& p : panel.periods()) {
    for (double v : p->monthly) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  ASSERT_GE(n, 10000);
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_LT(std::abs(mean), 5.0 / std::sqrt(n));
  EXPECT_LT(std::abs(var - 1.0), 5.0 * std::sqrt(2.0 / n));
}

TEST(Generate, MissingRateWithinBinomialBand) {
  SynthConfig c = cfg(9);
  c.n_stocks = 300;
  c.n_variables = 10;
  c.missing_rate = 0.15;
  const auto panel = generate_panel(c).first;
  double missing = 0, n = 0;
  for (const auto& p : panel.periods()) {
    missing += static_cast<double>(p->count_missing());
    n += static_cast<double>(p->monthly.size());
  }
  const double rate = missing / n;
  EXPECT_LT(std::abs(rate - 0.15), 5.0 * std::sqrt(0.15 * 0.85 / n));
  // targets are defined from the unmasked values
  for (const auto& p : panel.periods()) {
    for (std::size_t i = 0; i < p->size(); ++i) EXPECT_TRUE(p->has_target(i));
  }
}

TEST(Generate, CsvRoundTripIsFieldExact) {
  SynthConfig c = cfg(10);
  c.missing_rate = 0.05;
  c.unlabelled_final_period = true;
  const auto panel = generate_panel(c).first;
  const std::string text = write_panel_csv(panel);
  ColumnSchema schema;
  schema.n_variables = 3;
  const auto back = parse_panel_csv(text, schema);
  ASSERT_EQ(back.num_periods(), panel.num_periods());
  EXPECT_EQ(back.content_checksum(), panel.content_checksum());
  for (std::size_t k = 0; k < panel.num_periods(); ++k) {
    const auto& a = panel.period(k);
    const auto& b = back.period(k);
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.obs_ids, b.obs_ids);
    EXPECT_EQ(a.is_train, b.is_train);
    for (std::size_t i = 0; i < a.monthly.size(); ++i) {
      EXPECT_TRUE(a.monthly[i] == b.monthly[i] || (std::isnan(a.monthly[i]) && std::isnan(b.monthly[i])));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_TRUE(a.targets[i] == b.targets[i] || (std::isnan(a.targets[i]) && std::isnan(b.targets[i])));
    }
  }
  EXPECT_EQ(write_panel_csv(back), text);
}

TEST(Config, Validation) {
  SynthConfig c = cfg(1);
  c.missing_rate = 1.0;
  EXPECT_THROW(generate_panel(c), Error);
  c = cfg(1);
  c.train_fraction = 0.0;
  EXPECT_THROW(generate_panel(c), Error);
  c = cfg(1);
  c.coefficients = {{1.0, 2.0}};
  EXPECT_THROW(generate_panel(c), Error);
  c = cfg(1);
  c.regime_of_period = {0, 0, 1, 0};
  try {
    generate_panel(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Config, JsonSeedRequired) {
  try {
    synth_config_from_json(nlohmann::json::parse(R"({"n_periods": 3})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing required field 'seed'"), std::string::npos);
  }
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"seed": -1})")), Error);
  EXPECT_THROW(synth_config_from_json(nlohmann::json::parse(R"({"seed": 1, "sigma": 2})")), Error);
  const auto c = synth_config_from_json(nlohmann::json::parse(to_json(cfg(77)).dump()));
  EXPECT_EQ(to_json(c).dump(), to_json(cfg(77)).dump());
}
