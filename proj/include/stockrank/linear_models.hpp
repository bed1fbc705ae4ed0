#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"

namespace stockrank {

// ---------------------------------------------------------------------------
// Model specification

struct Ols {
  bool operator==(const Ols&) const = default;
};

struct Ridge {
  double alpha = 850.0;
  bool operator==(const Ridge&) const = default;
};

/// Gaussian prior N(0, 1/prior_precision I) on the weights, Gaussian noise with
/// precision noise_precision.
struct BayesLR {
  double prior_precision = 1.0;
  double noise_precision = 1.0;
  bool operator==(const BayesLR&) const = default;
};

struct Huber {
  double delta = 1.35;
  int max_iters = 50;
  double tol = 1e-6;
  bool operator==(const Huber&) const = default;
};

struct LinearSvr {
  double c = 1.0;
  double epsilon = 0.1;
  int epochs = 50;
  double eta0 = 0.01;
  bool operator==(const LinearSvr&) const = default;
};

using ModelKind = std::variant<Ols, Ridge, BayesLR, Huber, LinearSvr>;

struct ModelSpec {
  ModelKind kind = Ridge{};
  bool fit_intercept = true;

  static ModelSpec ols(bool intercept = true) { return {Ols{}, intercept}; }
  static ModelSpec ridge(double alpha, bool intercept = true) { return {Ridge{alpha}, intercept}; }
  static ModelSpec bayes(double prior_precision, double noise_precision, bool intercept = true) {
    return {BayesLR{prior_precision, noise_precision}, intercept};
  }
  static ModelSpec huber(double delta = 1.35, bool intercept = true) { return {Huber{delta}, intercept}; }
  static ModelSpec svr(double c = 1.0, double epsilon = 0.1, bool intercept = true) {
    return {LinearSvr{c, epsilon}, intercept};
  }
  /// Ridge with alpha 850 and no intercept.
  static ModelSpec default_ridge() { return {Ridge{850.0}, false}; }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidModelSpec, what); };
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Ridge>) {
            if (!(k.alpha >= 0.0) || !std::isfinite(k.alpha)) bad("ridge alpha must be >= 0");
          } else if constexpr (std::is_same_v<K, BayesLR>) {
            if (!(k.prior_precision > 0.0) || !(k.noise_precision > 0.0)) bad("bayes precisions must be > 0");
          } else if constexpr (std::is_same_v<K, Huber>) {
            if (!(k.delta > 0.0) || k.max_iters < 1 || !(k.tol > 0.0)) bad("huber needs delta > 0, max_iters >= 1, tol > 0");
          } else if constexpr (std::is_same_v<K, LinearSvr>) {
            if (!(k.c > 0.0) || !(k.epsilon >= 0.0) || k.epochs < 1 || !(k.eta0 > 0.0)) {
              bad("svr needs C > 0, epsilon >= 0, epochs >= 1, eta0 > 0");
            }
          }
        },
        kind);
  }

  bool operator==(const ModelSpec&) const = default;
};

/// Short human-readable form, e.g. "ridge(alpha=850,intercept=0)".
inline std::string describe(const ModelSpec& spec) {
  using csv::format_double;
  std::string body = std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Ols>) {
          return "ols(";
        } else if constexpr (std::is_same_v<K, Ridge>) {
          return "ridge(alpha=" + format_double(k.alpha) + ",";
        } else if constexpr (std::is_same_v<K, BayesLR>) {
          return "bayes(lambda=" + format_double(k.prior_precision) + ",beta=" + format_double(k.noise_precision) + ",";
        } else if constexpr (std::is_same_v<K, Huber>) {
          return "huber(delta=" + format_double(k.delta) + ",";
        } else {
          return "svr(C=" + format_double(k.c) + ",eps=" + format_double(k.epsilon) + ",";
        }
      },
      spec.kind);
  return body + "intercept=" + (spec.fit_intercept ? "1" : "0") + ")";
}

// ---------------------------------------------------------------------------
// Trained model

struct FitDiagnostics {
  double residual_norm = 0.0;  // ||y - Xw - b||_2 on the training data
  int iterations = 0;          // IRLS iterations or SVR epochs; 1 for direct solves
  std::optional<Eigen::MatrixXd> posterior_covariance;  // BayesLR only
  std::vector<double> objective_trace;                  // LinearSVR: best objective after each epoch
};

struct TrainedLinearModel {
  std::vector<std::string> columns;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  ModelSpec spec;
  FitDiagnostics diagnostics;
};

namespace detail {

/// Cholesky solve of a symmetric positive-definite system; near-zero pivots
/// relative to the diagonal are reported as singular.
inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, std::string(what) + ": system is not positive definite");
  const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
  const Eigen::MatrixXd l = llt.matrixL();
  const double min_pivot = l.diagonal().cwiseAbs2().minCoeff();
  if (!(min_pivot > 1e-13 * std::max(max_diag, 1e-300))) {
    throw Error(ErrorKind::SingularSystem, std::string(what) + ": normal equations are rank deficient");
  }
  return llt.solve(b);
}

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& x) {
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

inline double median_inplace(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

inline Eigen::VectorXd fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() < x.cols()) throw Error(ErrorKind::SingularSystem, "ols: fewer rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    throw Error(ErrorKind::SingularSystem, "ols: design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(x.cols()));
  }
  return qr.solve(y);
}

inline Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha) {
  if (alpha == 0.0) return fit_ols(x, y);
  Eigen::MatrixXd a = gram(x);
  a.diagonal().array() += alpha;
  return solve_spd(a, x.transpose() * y, "ridge");
}

struct BayesPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Posterior of w under prior N(0, I/lambda) and likelihood N(Xw, I/beta):
/// covariance (beta X'X + lambda I)^-1, mean covariance * beta X'y.
inline BayesPosterior fit_bayes(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const BayesLR& k) {
  Eigen::MatrixXd precision = k.noise_precision * gram(x);
  precision.diagonal().array() += k.prior_precision;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "bayes: posterior precision not positive definite");
  BayesPosterior post;
  post.mean = llt.solve(k.noise_precision * (x.transpose() * y));
  post.covariance = llt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  return post;
}

/// Huber regression by IRLS. Residual scale is re-estimated each iteration as
/// MAD/0.6745; rows with |r| > delta*scale get weight delta*scale/|r|.
/// `x` may carry an explicit unpenalized intercept column.
inline Eigen::VectorXd fit_huber(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Huber& k, int& iterations) {
  Eigen::VectorXd w = solve_spd(gram(x), x.transpose() * y, "huber");
  std::vector<double> abs_r(static_cast<std::size_t>(x.rows()));
  Eigen::VectorXd weights(x.rows());
  iterations = 0;
  for (int it = 0; it < k.max_iters; ++it) {
    iterations = it + 1;
    const Eigen::VectorXd r = y - x * w;
    for (Eigen::Index i = 0; i < r.size(); ++i) abs_r[static_cast<std::size_t>(i)] = std::abs(r(i));
    const double scale = median_inplace(abs_r) / 0.6745;
    if (!(scale > 0.0)) break;  // exact fit: every residual within the quadratic zone
    const double cut = k.delta * scale;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double a = std::abs(r(i));
      weights(i) = a <= cut ? 1.0 : cut / a;
    }
    const Eigen::MatrixXd xw = x.array().colwise() * weights.array().sqrt();
    const Eigen::VectorXd yw = y.array() * weights.array().sqrt();
    const Eigen::VectorXd next = solve_spd(gram(xw), xw.transpose() * yw, "huber");
    if (!next.allFinite()) throw Error(ErrorKind::NonFinite, "huber: weights diverged");
    const double change = (next - w).cwiseAbs().maxCoeff();
    w = next;
    if (change < k.tol) break;
  }
  return w;
}

inline double svr_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, const LinearSvr& k) {
  const Eigen::VectorXd r = y - x * w;
  const double loss = (r.array().abs() - k.epsilon).max(0.0).sum();
  return k.c * loss + 0.5 * w.squaredNorm();
}

/// Cyclic (unshuffled) subgradient descent on C*sum max(0, |y - xw| - eps) + 0.5||w||^2.
/// The regularizer is spread evenly over the n per-sample steps; epoch t uses step
/// eta0/(1+t). Returns the best iterate seen at epoch boundaries, starting from w = 0.
inline Eigen::VectorXd fit_svr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LinearSvr& k,
                               std::vector<double>& trace) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd best = w;
  double best_obj = svr_objective(x, y, w, k);
  trace.clear();
  const double shrink_share = 1.0 / static_cast<double>(n);
  for (int epoch = 0; epoch < k.epochs; ++epoch) {
    const double eta = k.eta0 / (1.0 + epoch);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y(i) - x.row(i).dot(w);
      w *= (1.0 - eta * shrink_share);
      if (std::abs(r) > k.epsilon) w.noalias() += (eta * k.c * (r > 0.0 ? 1.0 : -1.0)) * x.row(i).transpose();
    }
    if (!w.allFinite()) throw Error(ErrorKind::NonFinite, "svr: weights diverged");
    const double obj = svr_objective(x, y, w, k);
    if (obj < best_obj) {
      best_obj = obj;
      best = w;
    }
    trace.push_back(best_obj);
  }
  return best;
}

}  // namespace detail

/// Fits `spec` on (x, y). With fit_intercept, columns (and, for the closed-form
/// kinds, the target) are centered on their training means and the intercept is
/// recovered afterwards, so it is never penalized.
inline TrainedLinearModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ModelSpec& spec,
                              std::vector<std::string> columns = {}) {
  spec.validate();
  if (x.rows() != y.size() || x.rows() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "x has " + std::to_string(x.rows()) + " rows, y has " + std::to_string(y.size()));
  }
  if (!columns.empty() && static_cast<Eigen::Index>(columns.size()) != x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "column names do not match x");
  }
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorKind::NonFinite, "training data holds non-finite values");
  if (columns.empty()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) columns.push_back("x" + std::to_string(j + 1));
  }

  Eigen::VectorXd x_mean = Eigen::VectorXd::Zero(x.cols());
  double y_mean = 0.0;
  if (spec.fit_intercept) {
    x_mean = x.colwise().mean().transpose();
    y_mean = y.mean();
  }
  const Eigen::MatrixXd xc = spec.fit_intercept ? Eigen::MatrixXd(x.rowwise() - x_mean.transpose()) : x;

  TrainedLinearModel model;
  model.columns = std::move(columns);
  model.spec = spec;
  model.diagnostics.iterations = 1;

  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Huber>) {
          if (spec.fit_intercept) {
            Eigen::MatrixXd aug(xc.rows(), xc.cols() + 1);
            aug << xc, Eigen::VectorXd::Ones(xc.rows());
            const Eigen::VectorXd coef = detail::fit_huber(aug, y, k, model.diagnostics.iterations);
            model.weights = coef.head(xc.cols());
            model.intercept = coef(xc.cols()) - x_mean.dot(model.weights);
          } else {
            model.weights = detail::fit_huber(xc, y, k, model.diagnostics.iterations);
          }
          return;
        } else {
          const Eigen::VectorXd yc = spec.fit_intercept ? Eigen::VectorXd(y.array() - y_mean) : y;
          if constexpr (std::is_same_v<K, Ols>) {
            model.weights = detail::fit_ols(xc, yc);
          } else if constexpr (std::is_same_v<K, Ridge>) {
            model.weights = detail::fit_ridge(xc, yc, k.alpha);
          } else if constexpr (std::is_same_v<K, BayesLR>) {
            auto post = detail::fit_bayes(xc, yc, k);
            model.weights = std::move(post.mean);
            model.diagnostics.posterior_covariance = std::move(post.covariance);
          } else {
            model.weights = detail::fit_svr(xc, yc, k, model.diagnostics.objective_trace);
            model.diagnostics.iterations = k.epochs;
          }
          model.intercept = spec.fit_intercept ? y_mean - x_mean.dot(model.weights) : 0.0;
        }
      },
      spec.kind);

  if (!model.weights.allFinite() || !std::isfinite(model.intercept)) {
    throw Error(ErrorKind::NonFinite, describe(spec) + " produced non-finite weights");
  }
  model.diagnostics.residual_norm = ((y - x * model.weights).array() - model.intercept).matrix().norm();
  return model;
}

inline TrainedLinearModel fit(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec) {
  if (x.rows() != y.size()) throw Error(ErrorKind::ShapeMismatch, "feature rows and target length differ");
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return fit(x.values(), yv, spec, x.names());
}

/// Raw scores Xw + b. Column positions are trusted.
inline Eigen::VectorXd predict(const TrainedLinearModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.size()) {
    throw Error(ErrorKind::ColumnMismatch, "model has " + std::to_string(model.weights.size()) + " weights, input has " +
                                               std::to_string(x.cols()) + " columns");
  }
  return (x * model.weights).array() + model.intercept;
}

/// Scores for a feature matrix whose columns match the training columns by name and order.
inline Eigen::VectorXd predict(const TrainedLinearModel& model, const FeatureMatrix& x) {
  if (x.names() != model.columns) throw Error(ErrorKind::ColumnMismatch, "feature columns differ from the training columns");
  return predict(model, x.values());
}

/// Predictive variance 1/beta + x' Sigma x of a Bayesian model (centered inputs when an intercept was fit).
inline Eigen::VectorXd predictive_variance(const TrainedLinearModel& model, const Eigen::MatrixXd& x,
                                           const Eigen::VectorXd& training_means) {
  const auto* bayes = std::get_if<BayesLR>(&model.spec.kind);
  if (!bayes || !model.diagnostics.posterior_covariance) {
    throw Error(ErrorKind::InvalidModelSpec, "predictive variance needs a Bayesian model");
  }
  const Eigen::MatrixXd xc = model.spec.fit_intercept ? Eigen::MatrixXd(x.rowwise() - training_means.transpose()) : x;
  const Eigen::MatrixXd& cov = *model.diagnostics.posterior_covariance;
  return ((xc * cov).cwiseProduct(xc)).rowwise().sum().array() + 1.0 / bayes->noise_precision;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Ols>) {
          j["kind"] = "ols";
        } else if constexpr (std::is_same_v<K, Ridge>) {
          j["kind"] = "ridge";
          j["alpha"] = k.alpha;
        } else if constexpr (std::is_same_v<K, BayesLR>) {
          j["kind"] = "bayes";
          j["prior_precision"] = k.prior_precision;
          j["noise_precision"] = k.noise_precision;
        } else if constexpr (std::is_same_v<K, Huber>) {
          j["kind"] = "huber";
          j["delta"] = k.delta;
          j["max_iters"] = k.max_iters;
          j["tol"] = k.tol;
        } else {
          j["kind"] = "svr";
          j["C"] = k.c;
          j["epsilon"] = k.epsilon;
          j["epochs"] = k.epochs;
          j["eta0"] = k.eta0;
        }
      },
      spec.kind);
  j["fit_intercept"] = spec.fit_intercept;
  return j;
}

namespace detail {

template <typename Json>
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(ErrorKind::InvalidConfig, where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T, typename Json>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::InvalidConfig, where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

template <typename Json>
ModelSpec model_spec_from_json(const Json& j, const std::string& where = "model") {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw Error(ErrorKind::InvalidConfig, where + " needs a string 'kind'");
  }
  const std::string kind = j.at("kind").template get<std::string>();
  ModelSpec spec;
  spec.fit_intercept = detail::get_or<bool>(j, "fit_intercept", true, where);
  if (kind == "ols") {
    detail::reject_unknown_keys(j, {"kind", "fit_intercept"}, where);
    spec.kind = Ols{};
  } else if (kind == "ridge") {
    detail::reject_unknown_keys(j, {"kind", "fit_intercept", "alpha"}, where);
    spec.kind = Ridge{detail::get_or<double>(j, "alpha", 850.0, where)};
  } else if (kind == "bayes") {
    detail::reject_unknown_keys(j, {"kind", "fit_intercept", "prior_precision", "noise_precision"}, where);
    spec.kind = BayesLR{detail::get_or<double>(j, "prior_precision", 1.0, where),
                        detail::get_or<double>(j, "noise_precision", 1.0, where)};
  } else if (kind == "huber") {
    detail::reject_unknown_keys(j, {"kind", "fit_intercept", "delta", "max_iters", "tol"}, where);
    spec.kind = Huber{detail::get_or<double>(j, "delta", 1.35, where), detail::get_or<int>(j, "max_iters", 50, where),
                      detail::get_or<double>(j, "tol", 1e-6, where)};
  } else if (kind == "svr") {
    detail::reject_unknown_keys(j, {"kind", "fit_intercept", "C", "epsilon", "epochs", "eta0"}, where);
    spec.kind = LinearSvr{detail::get_or<double>(j, "C", 1.0, where), detail::get_or<double>(j, "epsilon", 0.1, where),
                          detail::get_or<int>(j, "epochs", 50, where), detail::get_or<double>(j, "eta0", 0.01, where)};
  } else {
    throw Error(ErrorKind::InvalidConfig, where + ": unknown model kind '" + kind + "'");
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, where + ": " + e.what());
  }
  return spec;
}

inline nlohmann::ordered_json to_json(const TrainedLinearModel& model) {
  nlohmann::ordered_json j;
  j["spec"] = to_json(model.spec);
  j["columns"] = model.columns;
  j["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
  j["intercept"] = model.intercept;
  j["residual_norm"] = model.diagnostics.residual_norm;
  j["iterations"] = model.diagnostics.iterations;
  return j;
}

template <typename Json>
TrainedLinearModel trained_model_from_json(const Json& j) {
  TrainedLinearModel model;
  model.spec = model_spec_from_json(j.at("spec"), "spec");
  model.columns = j.at("columns").template get<std::vector<std::string>>();
  const auto w = j.at("weights").template get<std::vector<double>>();
  model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  model.intercept = j.at("intercept").template get<double>();
  model.diagnostics.residual_norm = j.value("residual_norm", 0.0);
  model.diagnostics.iterations = j.value("iterations", 0);
  if (model.columns.size() != w.size()) throw Error(ErrorKind::ShapeMismatch, "weights and columns differ in length");
  return model;
}

}  // namespace stockrank
