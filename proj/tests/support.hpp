#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "stockrank/stockrank.hpp"

namespace stockrank::fixture {

inline std::vector<double> normals(SynthRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

inline Eigen::MatrixXd normal_matrix(SynthRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

inline FeatureMatrix make_matrix(const Eigen::MatrixXd& values, std::vector<std::string> names = {}, int ordinal = 1) {
  if (names.empty()) names = numbered("f", static_cast<std::size_t>(values.cols()));
  std::vector<RowId> ids;
  for (Eigen::Index i = 0; i < values.rows(); ++i) ids.push_back({ordinal, "r" + std::to_string(i)});
  return FeatureMatrix(std::move(names), values, std::move(ids));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Labelled train rows of every period, featurized with per-variable monthly means.
inline std::vector<PeriodBlock> mean_blocks(const Panel& raw) {
  const Panel panel = raw.is_imputed() ? raw : impute(raw, ImputationStrategy::Zero);
  const auto feats = featurize_panel(panel, FeatureRecipe{});
  std::vector<PeriodBlock> blocks;
  for (std::size_t k = 0; k < panel.num_periods(); ++k) {
    const Period& p = panel.period(k);
    std::vector<std::size_t> rows;
    PeriodBlock b;
    b.ordinal = p.id.ordinal;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.is_train[i] && p.has_target(i)) {
        rows.push_back(i);
        b.y.push_back(p.targets[i]);
      }
    }
    b.x = feats[k].select_rows(rows);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

/// Test rows (all of them) of one period as a labelled set with mean features.
inline LabelledSet mean_test_rows(const Panel& raw, std::size_t k) {
  const Panel panel = raw.is_imputed() ? raw : impute(raw, ImputationStrategy::Zero);
  const Period& p = panel.period(k);
  const FeatureMatrix all = featurize_period(p, panel.schema(), FeatureRecipe{});
  std::vector<std::size_t> rows;
  LabelledSet out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p.is_train[i] && p.has_target(i)) {
      rows.push_back(i);
      out.y.push_back(p.targets[i]);
    }
  }
  out.x = all.select_rows(rows);
  return out;
}

}  // namespace stockrank::fixture
