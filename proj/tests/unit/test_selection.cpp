#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "oracles.hpp"

using namespace stockrank;

namespace {

/// Panel whose periods follow coefficient regime 0 or its negation (regime 1).
Panel regime_panel(std::vector<int> regimes, double sigma, std::uint64_t seed, int n_stocks = 200, int n_vars = 5) {
  SynthConfig c;
  c.n_periods = static_cast<int>(regimes.size());
  c.n_stocks = n_stocks;
  c.n_variables = n_vars;
  c.noise_sigma = sigma;
  c.seed = seed;
  auto base = SynthConfig::default_coefficients(n_vars);
  auto neg = base;
  for (double& v : neg) v = -v;
  c.coefficients = {base, neg};
  c.regime_of_period = std::move(regimes);
  return generate_panel(c).first;
}

LabelledSet as_set(const PeriodBlock& b) { return {b.x, b.y}; }

}  // namespace

// ---------------------------------------------------------------------------
// select_training_periods

TEST(PeriodSubset, ThreePeriodsMatchExhaustiveOracle) {
  const Panel panel = regime_panel({0, 1, 0, 0}, 0.3, 7);
  auto blocks = fixture::mean_blocks(panel);
  const LabelledSet validation = as_set(blocks.back());
  blocks.pop_back();

  const auto spec = ModelSpec::ridge(1.0, false);
  const auto result = select_training_periods(blocks, spec, validation, MetricKind::spearman());
  const auto table = oracle::subset_table(oracle::blocks_of(blocks), 1.0, validation.x.values(), validation.y);
  const auto greedy = oracle::greedy_on_table(table, 3, kTieEpsilon, 10);
  EXPECT_EQ(result.outcome.kept, oracle::mask_ordinals(greedy.final_mask, blocks));
  EXPECT_EQ(greedy.final_mask, oracle::best_subset(table));
  // the negated period never survives
  EXPECT_EQ(std::count(result.outcome.kept.begin(), result.outcome.kept.end(), 2), 0);
  ASSERT_EQ(greedy.accepted_scores.size(), result.outcome.score_trace.size());
  for (std::size_t i = 0; i < greedy.accepted_scores.size(); ++i) {
    EXPECT_NEAR(result.outcome.score_trace[i].second, greedy.accepted_scores[i], 1e-9);
  }
}

TEST(PeriodSubset, HomogeneousPanelKeepsEverything) {
  const Panel panel = regime_panel({0, 0, 0, 0, 0, 0}, 1e-4, 8);
  auto blocks = fixture::mean_blocks(panel);
  const LabelledSet validation = as_set(blocks.back());
  blocks.pop_back();
  const auto result = select_training_periods(blocks, ModelSpec::ols(false), validation, MetricKind::spearman());
  EXPECT_EQ(result.outcome.kept, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_TRUE(result.outcome.dropped.empty());
  EXPECT_EQ(result.fits, 6);
  const auto table = oracle::subset_table(oracle::blocks_of(blocks), 0.0, validation.x.values(), validation.y);
  EXPECT_EQ(oracle::greedy_on_table(table, 5, kTieEpsilon, 10).final_mask, 0b11111u);
}

TEST(PeriodSubset, SinglePeriod) {
  const Panel panel = regime_panel({0, 0}, 0.5, 9);
  auto blocks = fixture::mean_blocks(panel);
  const LabelledSet validation = as_set(blocks.back());
  blocks.pop_back();
  const auto result = select_training_periods(blocks, ModelSpec::ridge(1.0), validation, MetricKind::spearman());
  EXPECT_EQ(result.outcome.kept, (std::vector<int>{1}));
  EXPECT_EQ(result.sweeps, 0);
  EXPECT_EQ(result.fits, 1);
}

TEST(PeriodSubset, GreedyMatchesTableOnRandomRegimes) {
  SynthRng pick(10);
  for (int rep = 0; rep < 6; ++rep) {
    const int p = 4 + rep % 4;
    std::vector<int> regimes;
    for (int k = 0; k < p; ++k) regimes.push_back(pick.uniform() < 0.4 ? 1 : 0);
    regimes.push_back(0);
    const Panel panel = regime_panel(regimes, 1.5, 100 + static_cast<std::uint64_t>(rep), 120, 4);
    auto blocks = fixture::mean_blocks(panel);
    const LabelledSet validation = as_set(blocks.back());
    blocks.pop_back();
    const auto result = select_training_periods(blocks, ModelSpec::ridge(2.0, false), validation, MetricKind::spearman());
    const auto table = oracle::subset_table(oracle::blocks_of(blocks), 2.0, validation.x.values(), validation.y);
    const auto greedy = oracle::greedy_on_table(table, static_cast<unsigned>(p), kTieEpsilon, 10);

    std::vector<int> expected;
    for (int k = 0; k < p; ++k) {
      if (greedy.final_mask & (1u << k)) expected.push_back(k + 1);
    }
    EXPECT_EQ(result.outcome.kept, expected) << "rep " << rep;
    ASSERT_EQ(result.outcome.score_trace.size(), greedy.accepted_scores.size());
    for (std::size_t i = 0; i < greedy.accepted_scores.size(); ++i) {
      EXPECT_NEAR(result.outcome.score_trace[i].second, greedy.accepted_scores[i], 1e-9);
      if (i > 0) EXPECT_GT(result.outcome.score_trace[i].second, result.outcome.score_trace[i - 1].second);
    }
    EXPECT_GE(result.final_score, result.baseline_score);
    EXPECT_LE(result.fits, 1 + 10 * p);
    EXPECT_FALSE(result.outcome.kept.empty());
    EXPECT_EQ(result.outcome.kept.size() + result.outcome.dropped.size(), static_cast<std::size_t>(p));
  }
}

TEST(PeriodSubset, DegenerateValidation) {
  const Panel panel = regime_panel({0, 0}, 0.5, 11);
  auto blocks = fixture::mean_blocks(panel);
  LabelledSet validation = as_set(blocks.back());
  std::fill(validation.y.begin(), validation.y.end(), 0.25);
  blocks.pop_back();
  try {
    select_training_periods(blocks, ModelSpec::ridge(1.0), validation, MetricKind::spearman());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateValidation);
  }
}

TEST(PeriodSubset, Deterministic) {
  const Panel panel = regime_panel({1, 0, 1, 0, 0}, 1.0, 12);
  auto blocks = fixture::mean_blocks(panel);
  const LabelledSet validation = as_set(blocks.back());
  blocks.pop_back();
  const auto a = select_training_periods(blocks, ModelSpec::ridge(1.0), validation, MetricKind::combined());
  const auto b = select_training_periods(blocks, ModelSpec::ridge(1.0), validation, MetricKind::combined());
  EXPECT_EQ(a.outcome, b.outcome);
}

// ---------------------------------------------------------------------------
// ordering and stepwise

TEST(OrderByCorrelation, Rules) {
  SynthRng rng(20);
  const auto y = fixture::normals(rng, 40);
  Eigen::MatrixXd m(40, 5);
  for (int i = 0; i < 40; ++i) {
    m(i, 0) = rng.normal();
    m(i, 1) = 3.0;
    m(i, 2) = -2.0 * y[static_cast<std::size_t>(i)] + 1.0;
    m(i, 3) = y[static_cast<std::size_t>(i)] + rng.normal();
    m(i, 4) = rng.normal();
  }
  const auto x = fixture::make_matrix(m, {"noise1", "constant", "neg_y", "y_plus", "noise2"});
  const auto order = order_features_by_correlation(x, y);
  EXPECT_EQ(order.front(), "neg_y");
  EXPECT_EQ(order[1], "y_plus");
  EXPECT_EQ(order.back(), "constant");

  // brute-force |r| ordering of the random columns
  const double r0 = std::abs(oracle::pearson(oracle::to_std(m.col(0)), y));
  const double r4 = std::abs(oracle::pearson(oracle::to_std(m.col(4)), y));
  EXPECT_EQ(order[2], r0 >= r4 ? "noise1" : "noise2");
  EXPECT_THROW(order_features_by_correlation(x.select_rows({0}), std::vector<double>{1.0}), Error);
}

TEST(Stepwise, ExactPredictorAlone) {
  SynthRng rng(21);
  Eigen::MatrixXd m = fixture::normal_matrix(rng, 100, 2);
  std::vector<double> y = oracle::to_std(m.col(0));
  const auto all = fixture::make_matrix(m, {"X1", "noise"});
  std::vector<std::size_t> first(60), rest(40);
  std::iota(first.begin(), first.end(), 0);
  std::iota(rest.begin(), rest.end(), 60);
  const LabelledSet train{all.select_rows(first), {y.begin(), y.begin() + 60}};
  const LabelledSet feedback{all.select_rows(rest), {y.begin() + 60, y.end()}};
  const auto out = stepwise_forward_select({"X1", "noise"}, ModelSpec::ols(false), train, feedback, MetricKind::spearman());
  EXPECT_EQ(out.kept, (std::vector<std::string>{"X1"}));
  ASSERT_EQ(out.dropped.size(), 1u);
  EXPECT_EQ(out.dropped[0].item, "noise");
}

TEST(Stepwise, FirstFeatureGuarantee) {
  SynthRng rng(22);
  Eigen::MatrixXd m = fixture::normal_matrix(rng, 50, 1);
  Eigen::MatrixXd dup(50, 2);
  dup << m, m;
  const auto all = fixture::make_matrix(dup, {"noise_a", "noise_b"});
  const auto y = fixture::normals(rng, 50);
  std::vector<std::size_t> first(30), rest(20);
  std::iota(first.begin(), first.end(), 0);
  std::iota(rest.begin(), rest.end(), 30);
  const LabelledSet train{all.select_rows(first), {y.begin(), y.begin() + 30}};
  const LabelledSet feedback{all.select_rows(rest), {y.begin() + 30, y.end()}};
  const auto out = stepwise_forward_select({"noise_a", "noise_b"}, ModelSpec::ridge(1.0, false), train, feedback,
                                           MetricKind::spearman());
  EXPECT_EQ(out.kept, (std::vector<std::string>{"noise_a"}));

  // nothing scores at all (zero columns give constant predictions)
  const auto zeros = fixture::make_matrix(Eigen::MatrixXd::Zero(50, 2), {"z1", "z2"});
  const LabelledSet zt{zeros.select_rows(first), train.y};
  const LabelledSet zf{zeros.select_rows(rest), feedback.y};
  const auto none = stepwise_forward_select({"z1", "z2"}, ModelSpec::ridge(1.0, false), zt, zf, MetricKind::spearman());
  EXPECT_EQ(none.kept, (std::vector<std::string>{"z1"}));
  EXPECT_EQ(none.kept.size() + none.dropped.size(), 2u);
}

TEST(Stepwise, MatchesGreedyOracle) {
  for (std::uint64_t seed = 30; seed < 36; ++seed) {
    SynthRng rng(seed);
    Eigen::MatrixXd m = fixture::normal_matrix(rng, 150, 4);
    std::vector<double> y(150);
    for (int i = 0; i < 150; ++i) y[static_cast<std::size_t>(i)] = m(i, 1) - 0.6 * m(i, 3) + 0.8 * rng.normal();
    const auto all = fixture::make_matrix(m, {"a", "b", "c", "d"});
    std::vector<std::size_t> first(90), rest(60);
    std::iota(first.begin(), first.end(), 0);
    std::iota(rest.begin(), rest.end(), 90);
    const LabelledSet train{all.select_rows(first), {y.begin(), y.begin() + 90}};
    const LabelledSet feedback{all.select_rows(rest), {y.begin() + 90, y.end()}};
    const std::vector<std::string> order{"a", "b", "c", "d"};
    const auto out = stepwise_forward_select(order, ModelSpec::ridge(0.5, false), train, feedback, MetricKind::spearman());
    EXPECT_EQ(out.kept, oracle::greedy_forward(order, train, feedback, 0.5, kTieEpsilon)) << "seed " << seed;
    const std::set<std::string> kept(out.kept.begin(), out.kept.end());
    EXPECT_TRUE(kept.count("b")) << "seed " << seed;
  }
}

// ---------------------------------------------------------------------------
// sign stability

namespace {

std::vector<PeriodBlock> sign_history(SynthRng& rng, int periods, int rows) {
  std::vector<PeriodBlock> blocks;
  for (int k = 0; k < periods; ++k) {
    Eigen::MatrixXd m(rows, 4);
    std::vector<double> y(static_cast<std::size_t>(rows));
    const double mixed = (k % 3 == 0) ? -1.0 : 1.0;
    for (int i = 0; i < rows; ++i) {
      y[static_cast<std::size_t>(i)] = rng.normal();
      m(i, 0) = y[static_cast<std::size_t>(i)];
      m(i, 1) = -y[static_cast<std::size_t>(i)];
      m(i, 2) = mixed * y[static_cast<std::size_t>(i)] + 0.5 * rng.normal();
      m(i, 3) = rng.normal();
    }
    blocks.push_back({k + 1, fixture::make_matrix(m, {"same", "negated", "mixed", "noise"}, k + 1), y});
  }
  return blocks;
}

}  // namespace

TEST(SignStability, FixturesAndRecountOracle) {
  SynthRng rng(40);
  const auto history = sign_history(rng, 32, 30);
  Eigen::MatrixXd vm(30, 4);
  std::vector<double> vy(30);
  for (int i = 0; i < 30; ++i) {
    vy[static_cast<std::size_t>(i)] = rng.normal();
    vm(i, 0) = vy[static_cast<std::size_t>(i)];
    vm(i, 1) = vy[static_cast<std::size_t>(i)];  // +target in validation
    vm(i, 2) = vy[static_cast<std::size_t>(i)] + 0.5 * rng.normal();
    vm(i, 3) = rng.normal();
  }
  const LabelledSet validation{fixture::make_matrix(vm, {"same", "negated", "mixed", "noise"}), vy};
  const auto options = SignStabilityOptions::defaults();
  const auto result = sign_stability_filter(history, validation, options);

  const auto oracle_counts = oracle::sign_flip_counts(history, validation, options.windows);
  for (const auto& s : result.stats) {
    EXPECT_EQ(s.flip_count, oracle_counts.at(s.feature)) << s.feature;
    EXPECT_LE(s.flip_count, static_cast<int>(s.windows.size()));
  }
  EXPECT_EQ(result.stats[0].flip_count, 0);
  EXPECT_EQ(result.stats[1].flip_count, 30);
  EXPECT_EQ(result.outcome.kept.front(), "same");
  const bool negated_dropped =
      std::any_of(result.outcome.dropped.begin(), result.outcome.dropped.end(), [](const auto& d) { return d.item == "negated"; });
  EXPECT_TRUE(negated_dropped);
  for (std::size_t i = 1; i < result.outcome.kept.size(); ++i) {
    EXPECT_LE(oracle_counts.at(result.outcome.kept[i - 1]), oracle_counts.at(result.outcome.kept[i]));
  }
  EXPECT_EQ(result.outcome.kept.size() + result.outcome.dropped.size(), 4u);
}

TEST(SignStability, ShortHistorySkipsWindows) {
  SynthRng rng(41);
  const auto history = sign_history(rng, 5, 20);
  const LabelledSet validation{history.back().x, history.back().y};
  const auto result = sign_stability_filter(history, validation);
  EXPECT_EQ(result.stats[0].windows, (std::vector<int>{2, 3, 4, 5, 0}));

  SignStabilityOptions only_long;
  only_long.windows = {10, 20};
  try {
    sign_stability_filter(history, validation, only_long);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoUsableWindow);
  }
}

// ---------------------------------------------------------------------------
// redundancy prune

TEST(Redundancy, ChainFixture) {
  SynthRng rng(50);
  Eigen::MatrixXd basis = fixture::normal_matrix(rng, 12, 2);
  basis = basis.rowwise() - basis.colwise().mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(12, 2);
  const Eigen::VectorXd a = q.col(0);
  const Eigen::VectorXd c = 0.5 * q.col(0) + std::sqrt(0.75) * q.col(1);
  const Eigen::VectorXd b = a + c;
  Eigen::MatrixXd m(12, 3);
  m << a, b, c;
  const auto means = fixture::make_matrix(m, {"a", "b", "c"});
  ASSERT_GE(oracle::pearson(oracle::to_std(a), oracle::to_std(b)), 0.8);
  ASSERT_GE(oracle::pearson(oracle::to_std(b), oracle::to_std(c)), 0.8);
  ASSERT_NEAR(oracle::pearson(oracle::to_std(a), oracle::to_std(c)), 0.5, 1e-12);

  const auto out = redundancy_prune({"a", "b", "c"}, means, 0.8);
  EXPECT_EQ(out.kept, (std::vector<std::string>{"a", "c"}));
  ASSERT_EQ(out.dropped.size(), 1u);
  EXPECT_EQ(out.dropped[0].item, "b");
}

TEST(Redundancy, DuplicatesAndIndependentColumns) {
  SynthRng rng(51);
  Eigen::MatrixXd m = fixture::normal_matrix(rng, 20, 3);
  m.col(2) = m.col(0);
  const auto means = fixture::make_matrix(m, {"x", "y", "x_copy"});
  ASSERT_LT(std::abs(oracle::pearson(oracle::to_std(m.col(0)), oracle::to_std(m.col(1)))), 0.8);
  const auto out = redundancy_prune({"x", "y", "x_copy"}, means);
  EXPECT_EQ(out.kept, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(out.dropped[0].item, "x_copy");
}

TEST(Redundancy, MatchesWalkOracleAndIgnoresDropped) {
  SynthRng rng(52);
  Eigen::MatrixXd base = fixture::normal_matrix(rng, 15, 4);
  Eigen::MatrixXd m(15, 8);
  for (int j = 0; j < 8; ++j) m.col(j) = base.col(j % 4) + 0.3 * (j / 4) * fixture::normal_matrix(rng, 15, 1);
  const auto names = fixture::numbered("f", 8);
  const auto means = fixture::make_matrix(m, names);
  const auto out = redundancy_prune(names, means);

  std::vector<std::string> kept;
  for (const auto& n : names) {
    bool clash = false;
    for (const auto& k : kept) clash = clash || std::abs(oracle::pearson(oracle::to_std(means.column(n)), oracle::to_std(means.column(k)))) >= 0.8;
    if (!clash) kept.push_back(n);
  }
  EXPECT_EQ(out.kept, kept);

  // removing a dropped feature from the input changes nothing else
  ASSERT_FALSE(out.dropped.empty());
  std::vector<std::string> fewer;
  for (const auto& n : names) {
    if (n != out.dropped.front().item) fewer.push_back(n);
  }
  EXPECT_EQ(redundancy_prune(fewer, means).kept, out.kept);
}

// ---------------------------------------------------------------------------
// single feature screen

TEST(Screen, FixturesAndRefitOracle) {
  SynthRng rng(60);
  const int n = 80;
  Eigen::MatrixXd train_m(n, 4), val_m(n, 4);
  std::vector<double> ty(n), vy(n);
  for (int i = 0; i < n; ++i) {
    ty[static_cast<std::size_t>(i)] = rng.normal();
    vy[static_cast<std::size_t>(i)] = rng.normal();
    const double a = ty[static_cast<std::size_t>(i)];
    const double b = vy[static_cast<std::size_t>(i)];
    train_m.row(i) << a, a, a + rng.normal(), a + 2.0 * rng.normal();
    // "flipped" tracks the target in training but its negation in validation
    val_m.row(i) << b, -b, b + rng.normal(), b + 2.0 * rng.normal();
  }
  const std::vector<std::string> names{"target", "flipped", "strong", "weak"};
  const LabelledSet train{fixture::make_matrix(train_m, names), ty};
  const LabelledSet validation{fixture::make_matrix(val_m, names), vy};
  const auto spec = ModelSpec::ridge(1.0, true);
  const auto out = single_feature_screen(names, spec, train, validation);

  EXPECT_EQ(out.kept.front(), "target");
  ASSERT_FALSE(out.dropped.empty());
  EXPECT_EQ(out.dropped.front().item, "flipped");

  // oracle: refit each feature alone, rank by combined score
  std::vector<std::pair<std::string, double>> scores;
  for (const auto& name : names) {
    const auto m = fit(train.x.select_columns({name}), train.y, spec);
    const auto pred = oracle::to_std(predict(m, validation.x.select_columns({name})));
    const double s = 0.5 * (oracle::spearman_ties(pred, vy) + ndcg_top_fraction(pred, vy));
    if (s > 0) scores.emplace_back(name, s);
  }
  std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> expected;
  for (const auto& [name, s] : scores) expected.push_back(name);
  EXPECT_EQ(out.kept, expected);
}

TEST(TopK, KeepsPrefix) {
  const auto out = top_k({"a", "b", "c"}, 2);
  EXPECT_EQ(out.kept, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(out.dropped.size(), 1u);
  EXPECT_EQ(top_k({"a"}, 5).kept.size(), 1u);
}

// ---------------------------------------------------------------------------
// grid search

TEST(Grid, SmallAlphaWinsOnStrongSignal) {
  SynthRng rng(70);
  Eigen::MatrixXd latent = fixture::normal_matrix(rng, 200, 3);
  Eigen::MatrixXd x(200, 3);
  x.col(0) = latent.col(0);
  x.col(1) = latent.col(0) + 0.2 * latent.col(1);
  x.col(2) = latent.col(2);
  const Eigen::VectorXd y = 3.0 * x.col(1) - 3.0 * x.col(0) + x.col(2);
  const Eigen::MatrixXd xt = x.topRows(120), xv = x.bottomRows(80);
  const Eigen::VectorXd yt = y.head(120);
  const auto yv = oracle::to_std(y.tail(80));
  const std::vector<ModelSpec> grid{ModelSpec::ridge(0.01, false), ModelSpec::ridge(1e6, false)};
  const auto r = grid_search_best(std::span<const ModelSpec>(grid), [&](const ModelSpec& s) {
    return spearman(as_span(predict(fit(xt, yt, s), xv)), yv);
  });
  EXPECT_EQ(r.best, 0u);
  ASSERT_EQ(r.table.size(), 2u);
  EXPECT_GT(*r.table[0].score, *r.table[1].score);
}

TEST(Grid, TiesSingleAndFailures) {
  const std::vector<int> one{7};
  EXPECT_EQ(grid_search_best(std::span<const int>(one), [](int) { return -5.0; }).best, 0u);

  const std::vector<int> three{1, 2, 3};
  auto tied = grid_search_best(std::span<const int>(three), [](int c) { return c == 1 ? 0.1 : 0.5; });
  EXPECT_EQ(tied.best, 1u);

  auto failing = grid_search_best(std::span<const int>(three), [](int c) -> double {
    if (c != 3) throw Error(ErrorKind::SingularSystem, "boom");
    return 0.0;
  });
  EXPECT_EQ(failing.best, 2u);
  EXPECT_FALSE(failing.table[0].score);
  EXPECT_FALSE(failing.table[0].error.empty());

  try {
    grid_search_best(std::span<const int>(three), [](int) -> double { throw Error(ErrorKind::SingularSystem, "x"); });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllCandidatesFailed);
  }
}
