#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"

namespace stockrank {

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
  int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic: pivots
/// are visited in row-major (p, q) order every sweep. Eigenvectors are oriented so
/// their first non-negligible entry is positive.
inline SymmetricEigen jacobi_eigen(Eigen::MatrixXd a, int max_sweeps = 100) {
  const Eigen::Index d = a.rows();
  if (a.cols() != d) throw Error(ErrorKind::ShapeMismatch, "jacobi_eigen needs a square matrix");
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);
  const double scale = a.norm();

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
    }
    if (off == 0.0 || std::sqrt(off) <= 1e-15 * scale) break;

    for (Eigen::Index p = 0; p < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index r = 0; r < d; ++r) {
          if (r == p || r == q) continue;
          const double g = a(r, p);
          const double h = a(r, q);
          a(r, p) = a(p, r) = c * g - s * h;
          a(r, q) = a(q, r) = s * g + c * h;
        }
        for (Eigen::Index r = 0; r < d; ++r) {
          const double g = v(r, p);
          const double h = v(r, q);
          v(r, p) = c * g - s * h;
          v(r, q) = s * g + c * h;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen out;
  out.values.resize(d);
  out.vectors.resize(d, d);
  out.sweeps = sweep;
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    Eigen::VectorXd vec = v.col(src);
    for (Eigen::Index r = 0; r < d; ++r) {
      if (std::abs(vec(r)) > 1e-12) {
        if (vec(r) < 0.0) vec = -vec;
        break;
      }
    }
    out.vectors.col(k) = vec;
  }
  return out;
}

struct PcaModel {
  std::vector<std::string> columns;
  Eigen::VectorXd means;
  Eigen::VectorXd eigenvalues;          // every component, descending
  Eigen::VectorXd explained_fraction;   // eigenvalue / total variance
  Eigen::MatrixXd loadings;             // columns.size() x k
  int k = 0;
};

/// Principal components of the centered (not rescaled) columns. Keeps the
/// smallest k whose cumulative explained-variance fraction reaches the threshold.
inline PcaModel pca_fit(const FeatureMatrix& x, double variance_threshold) {
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) {
    throw Error(ErrorKind::InvalidRecipe, "variance threshold must lie in (0, 1]");
  }
  if (x.rows() < 2 || x.cols() == 0) throw Error(ErrorKind::DegenerateInput, "PCA needs at least 2 rows and 1 column");

  PcaModel model;
  model.columns = x.names();
  model.means = x.values().colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.values().rowwise() - model.means.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  const double total = cov.trace();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateInput, "columns have zero total variance");

  const SymmetricEigen eig = jacobi_eigen(cov);
  model.eigenvalues = eig.values;
  model.explained_fraction = eig.values.cwiseMax(0.0) / total;

  double cumulative = 0.0;
  int k = 0;
  for (Eigen::Index i = 0; i < model.explained_fraction.size(); ++i) {
    cumulative += model.explained_fraction(i);
    k = static_cast<int>(i) + 1;
    if (cumulative >= variance_threshold - 1e-12) break;
  }
  model.k = k;
  model.loadings = eig.vectors.leftCols(k);
  return model;
}

/// Scores of the model's columns of `x` on the retained loadings, named pc_1..pc_k.
inline FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& x) {
  if (x.cols() < model.columns.size()) {
    throw Error(ErrorKind::ColumnMismatch, "input has " + std::to_string(x.cols()) + " columns, PCA was fit on " +
                                               std::to_string(model.columns.size()));
  }
  const FeatureMatrix aligned = x.select_columns(model.columns);
  Eigen::MatrixXd scores = (aligned.values().rowwise() - model.means.transpose()) * model.loadings;
  std::vector<std::string> names;
  for (int i = 0; i < model.k; ++i) names.push_back("pc_" + std::to_string(i + 1));
  return FeatureMatrix(std::move(names), std::move(scores), x.row_ids());
}

}  // namespace stockrank
