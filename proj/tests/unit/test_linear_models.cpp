#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "support.hpp"

using namespace stockrank;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Instance {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Instance random_instance(SynthRng& rng, Eigen::Index n, Eigen::Index d, double noise = 0.5) {
  Instance in;
  in.x = fixture::normal_matrix(rng, n, d);
  const Eigen::VectorXd w = fixture::normal_matrix(rng, d, 1);
  in.y = in.x * w + noise * fixture::normal_matrix(rng, n, 1);
  return in;
}

std::vector<std::size_t> argsort(const Eigen::VectorXd& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b)); });
  return idx;
}

}  // namespace

TEST(Fit, HandFixtures) {
  const auto x = column({1, 2});
  const auto y = vec({1, 2});
  EXPECT_NEAR(fit(x, y, ModelSpec::ridge(0.0, false)).weights(0), 1.0, 1e-14);
  EXPECT_NEAR(fit(x, y, ModelSpec::ridge(3.0, false)).weights(0), 5.0 / 8.0, 1e-14);
  const auto bayes = fit(x, y, ModelSpec::bayes(3.0, 1.0, false));
  EXPECT_NEAR(bayes.weights(0), 5.0 / 8.0, 1e-14);
  ASSERT_TRUE(bayes.diagnostics.posterior_covariance);
  EXPECT_NEAR((*bayes.diagnostics.posterior_covariance)(0, 0), 1.0 / 8.0, 1e-14);
  EXPECT_EQ(fit(x, y, ModelSpec::ridge(3.0, false)).intercept, 0.0);
}

TEST(Predict, Fixtures) {
  TrainedLinearModel m;
  m.columns = {"a"};
  m.weights = vec({1});
  EXPECT_EQ(predict(m, column({3}))(0), 3.0);
  m.weights = vec({0});
  m.intercept = 2.5;
  EXPECT_EQ(predict(m, column({3, -4})), vec({2.5, 2.5}));

  SynthRng rng(5);
  const Eigen::MatrixXd x = fixture::normal_matrix(rng, 6, 6);
  const Eigen::VectorXd y = fixture::normal_matrix(rng, 6, 1);
  const auto exact = fit(x, y, ModelSpec::ols(false));
  EXPECT_LT((predict(exact, x) - y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Predict, ColumnMismatch) {
  const auto f = fixture::make_matrix(Eigen::MatrixXd::Identity(3, 2), {"a", "b"});
  const auto model = fit(f, std::vector<double>{1, 2, 3}, ModelSpec::ridge(1.0));
  const auto swapped = f.select_columns({"b", "a"});
  try {
    predict(model, swapped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ColumnMismatch);
  }
  EXPECT_THROW(predict(model, Eigen::MatrixXd::Ones(2, 3)), Error);
}

TEST(Fit, Errors) {
  try {
    fit(column({1, 2}), vec({1}), ModelSpec::ols());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  Eigen::MatrixXd dup(3, 2);
  dup << 1, 1, 2, 2, 3, 3;
  try {
    fit(dup, vec({1, 2, 3}), ModelSpec::ols(false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularSystem);
  }
  Eigen::MatrixXd bad = column({1, 2});
  bad(0, 0) = NAN;
  EXPECT_THROW(fit(bad, vec({1, 2}), ModelSpec::ridge(1.0)), Error);
  EXPECT_THROW(ModelSpec::ridge(-1.0).validate(), Error);
  EXPECT_THROW(ModelSpec::bayes(0.0, 1.0).validate(), Error);
  EXPECT_THROW(ModelSpec::svr(0.0).validate(), Error);
}

TEST(Ridge, ResidualOnRandomInstances) {
  SynthRng rng(100);
  for (int rep = 0; rep < 50; ++rep) {
    const auto n = static_cast<Eigen::Index>(20 + rep * 3);
    const auto d = static_cast<Eigen::Index>(1 + rep % 15);
    const auto in = random_instance(rng, n, d);
    const double alpha = 0.1 * (rep + 1);
    const auto m = fit(in.x, in.y, ModelSpec::ridge(alpha, false));
    const Eigen::MatrixXd a = in.x.transpose() * in.x + alpha * Eigen::MatrixXd::Identity(d, d);
    EXPECT_LT((a * m.weights - in.x.transpose() * in.y).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ridge, InterceptIsNotPenalized) {
  SynthRng rng(101);
  auto in = random_instance(rng, 80, 3);
  in.y.array() += 50.0;
  const auto m = fit(in.x, in.y, ModelSpec::ridge(1e6, true));
  EXPECT_NEAR(m.intercept, in.y.mean() - in.x.colwise().mean().dot(m.weights), 1e-9);
  EXPECT_LT(m.weights.norm(), 1e-2);
}

TEST(Bayes, EqualsRidgeWithRatio) {
  SynthRng rng(102);
  for (int rep = 0; rep < 50; ++rep) {
    const auto in = random_instance(rng, 40 + rep, 1 + rep % 10);
    const double lambda = 0.5 + rep;
    const double beta = 0.25 + 0.1 * rep;
    for (bool intercept : {false, true}) {
      const auto b = fit(in.x, in.y, ModelSpec::bayes(lambda, beta, intercept));
      const auto r = fit(in.x, in.y, ModelSpec::ridge(lambda / beta, intercept));
      EXPECT_LT((b.weights - r.weights).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(b.intercept, r.intercept, 1e-10);
    }
  }
}

TEST(Bayes, PredictiveVariance) {
  const auto m = fit(column({1, 2}), vec({1, 2}), ModelSpec::bayes(3.0, 2.0, false));
  // posterior covariance (2*5 + 3)^-1 = 1/13
  const auto v = predictive_variance(m, column({2}), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(v(0), 0.5 + 4.0 / 13.0, 1e-14);
  EXPECT_THROW(predictive_variance(fit(column({1, 2}), vec({1, 2}), ModelSpec::ridge(1.0)), column({1}), Eigen::VectorXd::Zero(1)),
               Error);
}

TEST(Ridge, MonotoneShrinkage) {
  SynthRng rng(103);
  for (int rep = 0; rep < 20; ++rep) {
    const auto in = random_instance(rng, 60, 8);
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 850.0, 1e4}) {
      const double norm = fit(in.x, in.y, ModelSpec::ridge(alpha, rep % 2 == 0)).weights.norm();
      EXPECT_LE(norm, previous);
      previous = norm;
    }
  }
}

TEST(Ols, MatchesNormalEquations) {
  SynthRng rng(104);
  const auto in = random_instance(rng, 50, 5);
  const auto m = fit(in.x, in.y, ModelSpec::ols(false));
  const Eigen::VectorXd oracle = (in.x.transpose() * in.x).ldlt().solve(in.x.transpose() * in.y);
  EXPECT_LT((m.weights - oracle).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(m.diagnostics.residual_norm, (in.y - in.x * oracle).norm(), 1e-9);
}

TEST(Huber, LargeDeltaIsOls) {
  SynthRng rng(105);
  for (bool intercept : {false, true}) {
    const auto in = random_instance(rng, 100, 4);
    const auto h = fit(in.x, in.y, ModelSpec::huber(1e6, intercept));
    const auto o = fit(in.x, in.y, ModelSpec::ols(intercept));
    EXPECT_LT((h.weights - o.weights).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(h.intercept, o.intercept, 1e-6);
  }
}

TEST(Huber, ResistsOutliers) {
  SynthRng rng(106);
  auto in = random_instance(rng, 200, 2, 0.1);
  const Eigen::VectorXd clean_w = fit(in.x, in.y, ModelSpec::ols(false)).weights;
  for (int i = 0; i < 10; ++i) in.y(i) += 100.0;
  const auto h = fit(in.x, in.y, ModelSpec::huber(1.35, false));
  const auto o = fit(in.x, in.y, ModelSpec::ols(false));
  EXPECT_LT((h.weights - clean_w).norm(), (o.weights - clean_w).norm());
  EXPECT_GE(h.diagnostics.iterations, 1);
}

TEST(Svr, TraceNonIncreasingAndDeterministic) {
  SynthRng rng(107);
  const auto in = random_instance(rng, 120, 6);
  const auto a = fit(in.x, in.y, ModelSpec::svr());
  const auto b = fit(in.x, in.y, ModelSpec::svr());
  const auto& trace = a.diagnostics.objective_trace;
  ASSERT_EQ(trace.size(), 50u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.intercept, b.intercept);
  // learns something: objective beats the zero vector
  const Eigen::VectorXd yc = in.y.array() - in.y.mean();
  const Eigen::MatrixXd xc = in.x.rowwise() - in.x.colwise().mean();
  EXPECT_LT(trace.back(), detail::svr_objective(xc, yc, Eigen::VectorXd::Zero(6), LinearSvr{}));
}

TEST(Intercept, ShiftInvariantRanking) {
  SynthRng rng(108);
  const auto train = random_instance(rng, 80, 4);
  const Eigen::MatrixXd test = fixture::normal_matrix(rng, 30, 4);
  const ModelSpec specs[] = {ModelSpec::ols(), ModelSpec::ridge(5.0), ModelSpec::bayes(2.0, 1.0), ModelSpec::huber(), ModelSpec::svr()};
  for (const auto& spec : specs) {
    Eigen::MatrixXd x2 = train.x;
    Eigen::MatrixXd t2 = test;
    x2.col(2).array() += 11.0;
    t2.col(2).array() += 11.0;
    const auto base = predict(fit(train.x, train.y, spec), test);
    const auto moved = predict(fit(x2, train.y, spec), t2);
    EXPECT_EQ(argsort(base), argsort(moved)) << describe(spec);
  }
}

TEST(Json, SpecAndModelRoundTrip) {
  const ModelSpec specs[] = {ModelSpec::ols(false), ModelSpec::default_ridge(), ModelSpec::bayes(2.0, 0.5),
                             ModelSpec::huber(2.0), ModelSpec::svr(3.0, 0.2)};
  for (const auto& s : specs) EXPECT_EQ(model_spec_from_json(to_json(s)), s);

  SynthRng rng(109);
  const auto in = random_instance(rng, 30, 3);
  const auto m = fit(in.x, in.y, ModelSpec::ridge(2.0));
  const auto text = to_json(m).dump();
  const auto back = trained_model_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.intercept, m.intercept);
  EXPECT_EQ(back.spec, m.spec);
  EXPECT_EQ(back.columns, m.columns);
}

TEST(Json, RejectsBadSpecs) {
  EXPECT_THROW(model_spec_from_json(nlohmann::json::parse(R"({"kind":"lasso"})")), Error);
  EXPECT_THROW(model_spec_from_json(nlohmann::json::parse(R"({"kind":"ridge","alpha":-2})")), Error);
  EXPECT_THROW(model_spec_from_json(nlohmann::json::parse(R"({"kind":"ridge","lambda":2})")), Error);
}

TEST(Describe, Format) {
  EXPECT_EQ(describe(ModelSpec::default_ridge()), "ridge(alpha=850,intercept=0)");
  EXPECT_EQ(describe(ModelSpec::ols()), "ols(intercept=1)");
}
