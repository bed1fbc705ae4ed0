#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"

namespace stockrank {

struct RowId {
  int ordinal = 0;
  std::string obs_id;

  bool operator==(const RowId&) const = default;
};

inline std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Named numeric columns over an ordered list of observations. Values are stored
/// column-major so each column is contiguous.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(std::vector<std::string> names, Eigen::MatrixXd values, std::vector<RowId> rows)
      : names_(std::move(names)), values_(std::move(values)), rows_(std::move(rows)) {
    if (static_cast<std::size_t>(values_.cols()) != names_.size() ||
        static_cast<std::size_t>(values_.rows()) != rows_.size()) {
      throw Error(ErrorKind::ShapeMismatch, "feature matrix is " + std::to_string(values_.rows()) + "x" +
                                                std::to_string(values_.cols()) + " but has " + std::to_string(rows_.size()) +
                                                " row ids and " + std::to_string(names_.size()) + " names");
    }
    index_.reserve(names_.size());
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (!index_.emplace(names_[j], j).second) {
        throw Error(ErrorKind::ShapeMismatch, "duplicate feature column '" + names_[j] + "'");
      }
    }
    if (!values_.allFinite()) throw Error(ErrorKind::NonFinite, "feature matrix holds a missing or non-finite value");
  }

  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<RowId>& row_ids() const { return rows_; }
  const Eigen::MatrixXd& values() const { return values_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require_index(const std::string& name) const {
    auto idx = index_of(name);
    if (!idx) throw Error(ErrorKind::ColumnMismatch, "no feature column '" + name + "'");
    return *idx;
  }

  Eigen::VectorXd column(const std::string& name) const { return values_.col(static_cast<Eigen::Index>(require_index(name))); }

  /// Sub-matrix with the named columns, in the order given.
  FeatureMatrix select_columns(const std::vector<std::string>& wanted) const {
    std::vector<Eigen::Index> idx;
    idx.reserve(wanted.size());
    for (const auto& name : wanted) idx.push_back(static_cast<Eigen::Index>(require_index(name)));
    return FeatureMatrix(wanted, values_(Eigen::all, idx), rows_);
  }

  FeatureMatrix select_rows(const std::vector<std::size_t>& wanted) const {
    std::vector<Eigen::Index> idx(wanted.begin(), wanted.end());
    std::vector<RowId> ids;
    ids.reserve(wanted.size());
    for (auto i : wanted) ids.push_back(rows_.at(i));
    return FeatureMatrix(names_, values_(idx, Eigen::all), std::move(ids));
  }

  /// Columns of `other` (same rows, same order) appended on the right.
  FeatureMatrix append_columns(const FeatureMatrix& other) const {
    if (other.rows() != rows()) throw Error(ErrorKind::ShapeMismatch, "row counts differ when appending columns");
    if (!(other.rows_ == rows_)) throw Error(ErrorKind::ShapeMismatch, "row identities differ when appending columns");
    std::vector<std::string> names = names_;
    names.insert(names.end(), other.names_.begin(), other.names_.end());
    Eigen::MatrixXd values(values_.rows(), values_.cols() + other.values_.cols());
    values << values_, other.values_;
    return FeatureMatrix(std::move(names), std::move(values), rows_);
  }

  /// Rows of all parts stacked in order; every part must have identical column names.
  static FeatureMatrix vstack(std::span<const FeatureMatrix> parts) {
    if (parts.empty()) return {};
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.names_ != parts.front().names_) throw Error(ErrorKind::ColumnMismatch, "stacked parts have different columns");
      total += p.values_.rows();
    }
    Eigen::MatrixXd values(total, static_cast<Eigen::Index>(parts.front().cols()));
    std::vector<RowId> ids;
    ids.reserve(static_cast<std::size_t>(total));
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      values.middleRows(at, p.values_.rows()) = p.values_;
      at += p.values_.rows();
      ids.insert(ids.end(), p.rows_.begin(), p.rows_.end());
    }
    return FeatureMatrix(parts.front().names_, std::move(values), std::move(ids));
  }

  /// CSV with a `period,obs_id,<column names>` header.
  std::string to_csv() const {
    std::string out = "period,obs_id";
    for (const auto& n : names_) out += "," + n;
    out += '\n';
    for (std::size_t i = 0; i < rows(); ++i) {
      out += std::to_string(rows_[i].ordinal) + "," + rows_[i].obs_id;
      for (Eigen::Index j = 0; j < values_.cols(); ++j) {
        out += ',';
        out += csv::format_double(values_(static_cast<Eigen::Index>(i), j));
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  Eigen::MatrixXd values_;
  std::vector<RowId> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace stockrank
