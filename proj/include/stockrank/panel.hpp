#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"

namespace stockrank {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// A half-year period label of the form "YYYY_H".
struct HalfYear {
  int year = 0;
  int half = 0;

  auto operator<=>(const HalfYear&) const = default;
};

inline std::optional<HalfYear> try_parse_half_year(std::string_view label) {
  if (label.size() != 6 || label[4] != '_') return std::nullopt;
  int year = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (label[i] < '0' || label[i] > '9') return std::nullopt;
    year = year * 10 + (label[i] - '0');
  }
  if (label[5] != '1' && label[5] != '2') return std::nullopt;
  return HalfYear{year, label[5] - '0'};
}

inline HalfYear parse_half_year(std::string_view label) {
  auto parsed = try_parse_half_year(label);
  if (!parsed) throw Error(ErrorKind::MalformedLabel, "period label '" + std::string(label) + "' is not YYYY_H");
  return *parsed;
}

inline std::string format_half_year(HalfYear h) {
  std::string year = std::to_string(h.year);
  while (year.size() < 4) year.insert(year.begin(), '0');
  return year + "_" + std::to_string(h.half);
}

inline HalfYear next_half_year(HalfYear h) { return h.half == 1 ? HalfYear{h.year, 2} : HalfYear{h.year + 1, 1}; }

struct PeriodId {
  int ordinal = 0;
  std::string label;

  bool operator==(const PeriodId&) const = default;
};

/// Column layout of a challenge-format CSV. Variables and months are configurable so
/// desk-scale synthetic panels can be narrower than the 70 x 6 challenge shape.
struct ColumnSchema {
  int n_variables = 70;
  int n_months = 6;
  std::string period_column = "period_label";
  std::string id_column = "obs_id";
  std::string train_column = "Train";
  std::string target_column = "Norm_Ret_F6M";

  std::size_t values_per_row() const { return static_cast<std::size_t>(n_variables) * n_months; }

  /// Zero-based variable and month; yields "X{var+1}_{month+1}".
  std::string value_column(int variable, int month) const {
    return "X" + std::to_string(variable + 1) + "_" + std::to_string(month + 1);
  }

  bool operator==(const ColumnSchema&) const = default;
};

/// One stock row, materialized. Periods store rows column-wise; this is the
/// convenient value form for construction and inspection.
struct StockObservation {
  std::string obs_id;
  std::vector<double> monthly;  // variable-major: monthly[var * n_months + month]; NaN = missing
  bool is_train = false;
  std::optional<double> target;
};

/// Cross-section of one period. Storage is structure-of-arrays; `monthly` is row-major
/// with `width` = n_variables * n_months values per row.
struct Period {
  PeriodId id;
  std::size_t width = 0;
  std::vector<std::string> obs_ids;
  std::vector<std::uint8_t> is_train;
  std::vector<double> targets;        // NaN when absent
  std::vector<double> monthly;        // rows * width
  std::vector<std::size_t> row_index;  // position of each row in the originating period

  std::size_t size() const { return obs_ids.size(); }

  std::span<const double> row(std::size_t i) const { return {monthly.data() + i * width, width}; }
  std::span<double> row(std::size_t i) { return {monthly.data() + i * width, width}; }

  bool has_target(std::size_t i) const { return !is_missing(targets[i]); }

  void push_back(const StockObservation& obs) {
    if (obs.monthly.size() != width) {
      throw Error(ErrorKind::ShapeMismatch, "observation '" + obs.obs_id + "' has " + std::to_string(obs.monthly.size()) +
                                                " monthly values, expected " + std::to_string(width));
    }
    row_index.push_back(obs_ids.size());
    obs_ids.push_back(obs.obs_id);
    is_train.push_back(obs.is_train ? 1 : 0);
    targets.push_back(obs.target.value_or(kMissing));
    monthly.insert(monthly.end(), obs.monthly.begin(), obs.monthly.end());
  }

  StockObservation observation(std::size_t i) const {
    StockObservation obs;
    obs.obs_id = obs_ids[i];
    obs.monthly.assign(row(i).begin(), row(i).end());
    obs.is_train = is_train[i] != 0;
    if (has_target(i)) obs.target = targets[i];
    return obs;
  }

  /// Rows selected by `keep`, preserving order and original row positions.
  template <typename Pred>
  Period filtered(Pred keep) const {
    Period out;
    out.id = id;
    out.width = width;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!keep(i)) continue;
      out.obs_ids.push_back(obs_ids[i]);
      out.is_train.push_back(is_train[i]);
      out.targets.push_back(targets[i]);
      out.monthly.insert(out.monthly.end(), row(i).begin(), row(i).end());
      out.row_index.push_back(row_index[i]);
    }
    return out;
  }

  std::size_t count_missing() const {
    return static_cast<std::size_t>(std::count_if(monthly.begin(), monthly.end(), is_missing));
  }
};

enum class ImputationStrategy { Zero, MedianPerVariable };

inline std::string_view to_string(ImputationStrategy s) {
  return s == ImputationStrategy::Zero ? "zero" : "median";
}

struct Provenance {
  std::string source;
  std::string imputation = "raw";
  std::string generator;  // synthgen stream description, empty for file input
};

/// Ordered sequence of periods. Immutable once built; periods are shared between
/// a panel and the windows or views sliced from it.
class Panel {
 public:
  using PeriodPtr = std::shared_ptr<const Period>;

  Panel() = default;

  Panel(ColumnSchema schema, std::vector<PeriodPtr> periods, Provenance provenance)
      : schema_(std::move(schema)), periods_(std::move(periods)), provenance_(std::move(provenance)) {
    validate();
  }

  static Panel from_periods(ColumnSchema schema, std::vector<Period> periods, Provenance provenance) {
    std::vector<PeriodPtr> ptrs;
    ptrs.reserve(periods.size());
    for (auto& p : periods) ptrs.push_back(std::make_shared<const Period>(std::move(p)));
    return Panel(std::move(schema), std::move(ptrs), std::move(provenance));
  }

  const ColumnSchema& schema() const { return schema_; }
  const Provenance& provenance() const { return provenance_; }
  std::span<const PeriodPtr> periods() const { return periods_; }
  std::size_t num_periods() const { return periods_.size(); }
  bool empty() const { return periods_.empty(); }
  bool is_imputed() const { return provenance_.imputation != "raw"; }

  const Period& period(std::size_t index) const { return *periods_.at(index); }
  const Period& front() const { return *periods_.front(); }
  const Period& back() const { return *periods_.back(); }

  int first_ordinal() const { return periods_.empty() ? 0 : periods_.front()->id.ordinal; }
  int last_ordinal() const { return periods_.empty() ? 0 : periods_.back()->id.ordinal; }

  const Period& by_ordinal(int ordinal) const {
    if (periods_.empty() || ordinal < first_ordinal() || ordinal > last_ordinal()) {
      throw Error(ErrorKind::OrdinalOutOfRange, "ordinal " + std::to_string(ordinal) + " not in panel");
    }
    return *periods_[static_cast<std::size_t>(ordinal - first_ordinal())];
  }

  std::optional<int> ordinal_of(std::string_view label) const {
    for (const auto& p : periods_) {
      if (p->id.label == label) return p->id.ordinal;
    }
    return std::nullopt;
  }

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& p : periods_) n += p->size();
    return n;
  }

  /// FNV-1a over the canonical content (labels, ids, flags, bit patterns of values).
  std::uint64_t content_checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* bytes = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    auto mix_double = [&](double v) {
      // every NaN hashes alike so missing cells compare equal
      if (is_missing(v)) v = kMissing;
      mix(&v, sizeof v);
    };
    for (const auto& p : periods_) {
      mix(p->id.label.data(), p->id.label.size());
      for (std::size_t i = 0; i < p->size(); ++i) {
        mix(p->obs_ids[i].data(), p->obs_ids[i].size());
        mix(&p->is_train[i], 1);
        mix_double(p->targets[i]);
        for (double v : p->row(i)) mix_double(v);
      }
    }
    return h;
  }

 private:
  void validate() const {
    const std::size_t width = schema_.values_per_row();
    std::optional<HalfYear> prev_label;
    int prev_ordinal = 0;
    for (std::size_t k = 0; k < periods_.size(); ++k) {
      const Period& p = *periods_[k];
      if (k > 0 && p.id.ordinal != prev_ordinal + 1) {
        throw Error(ErrorKind::InvalidPanel, "period ordinals are not consecutive at '" + p.id.label + "'");
      }
      if (p.id.ordinal < 1) throw Error(ErrorKind::InvalidPanel, "ordinal must be >= 1");
      const auto label = try_parse_half_year(p.id.label);
      if (!label) throw Error(ErrorKind::InvalidPanel, "malformed period label '" + p.id.label + "'");
      if (prev_label && !(*prev_label < *label)) {
        throw Error(ErrorKind::InvalidPanel, "period labels must strictly increase at '" + p.id.label + "'");
      }
      if (p.width != width || p.monthly.size() != p.size() * width || p.is_train.size() != p.size() ||
          p.targets.size() != p.size() || p.row_index.size() != p.size()) {
        throw Error(ErrorKind::InvalidPanel, "period '" + p.id.label + "' storage does not match the schema");
      }
      if (is_imputed() && p.count_missing() != 0) {
        throw Error(ErrorKind::InvalidPanel, "imputed panel still has missing values in '" + p.id.label + "'");
      }
      prev_label = label;
      prev_ordinal = p.id.ordinal;
    }
  }

  ColumnSchema schema_;
  std::vector<PeriodPtr> periods_;
  Provenance provenance_;
};

// ---------------------------------------------------------------------------
// CSV input / output

namespace detail {

inline std::string row_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

}  // namespace detail

/// Parses challenge-format CSV text. Columns are located by header name; extra
/// columns are ignored. Empty cells are missing values.
inline Panel parse_panel_csv(std::string_view contents, const ColumnSchema& schema, std::string source = "<memory>") {
  const auto all_lines = csv::lines(contents);
  std::size_t first = 0;
  while (first < all_lines.size() && all_lines[first].empty()) ++first;
  if (first >= all_lines.size()) throw Error(ErrorKind::EmptyFile, "'" + source + "' has no header row");

  const auto header = csv::split(all_lines[first]);
  std::unordered_map<std::string_view, std::size_t> column_at;
  for (std::size_t i = 0; i < header.size(); ++i) column_at.emplace(header[i], i);
  auto require = [&](const std::string& name) {
    auto it = column_at.find(name);
    if (it == column_at.end()) throw Error(ErrorKind::MissingColumn, "header lacks column '" + name + "'");
    return it->second;
  };
  const std::size_t period_col = require(schema.period_column);
  const std::size_t id_col = require(schema.id_column);
  const std::size_t train_col = require(schema.train_column);
  const std::size_t target_col = require(schema.target_column);
  std::vector<std::size_t> value_cols;
  value_cols.reserve(schema.values_per_row());
  for (int v = 0; v < schema.n_variables; ++v) {
    for (int m = 0; m < schema.n_months; ++m) value_cols.push_back(require(schema.value_column(v, m)));
  }

  std::map<HalfYear, Period> by_label;
  std::map<HalfYear, std::unordered_set<std::string>> seen_ids;
  const std::size_t width = schema.values_per_row();
  for (std::size_t li = first + 1; li < all_lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (all_lines[li].empty()) continue;
    const auto fields = csv::split(all_lines[li]);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::MalformedRow, detail::row_error(line_no, "expected " + std::to_string(header.size()) +
                                                                         " fields, found " + std::to_string(fields.size())));
    }
    const auto label = try_parse_half_year(fields[period_col]);
    if (!label) {
      throw Error(ErrorKind::DuplicatePeriodLabelOrder,
                  detail::row_error(line_no, "period label '" + std::string(fields[period_col]) + "' is not sortable as YYYY_H"));
    }
    const std::string obs_id(fields[id_col]);
    if (obs_id.empty()) throw Error(ErrorKind::MalformedRow, detail::row_error(line_no, "empty obs_id"));

    auto train = csv::parse_double(fields[train_col]);
    if (!train || (*train != 0.0 && *train != 1.0)) {
      throw Error(ErrorKind::MalformedRow, detail::row_error(line_no, "Train must be 0 or 1"));
    }
    StockObservation obs;
    obs.obs_id = obs_id;
    obs.is_train = *train == 1.0;
    if (!fields[target_col].empty()) {
      auto target = csv::parse_double(fields[target_col]);
      if (!target) throw Error(ErrorKind::MalformedRow, detail::row_error(line_no, "unparseable target"));
      obs.target = *target;
    }
    obs.monthly.resize(width);
    for (std::size_t k = 0; k < width; ++k) {
      const auto cell = fields[value_cols[k]];
      if (cell.empty()) {
        obs.monthly[k] = kMissing;
        continue;
      }
      auto value = csv::parse_double(cell);
      if (!value) {
        throw Error(ErrorKind::MalformedRow,
                    detail::row_error(line_no, "unparseable number '" + std::string(cell) + "' in " + std::string(header[value_cols[k]])));
      }
      obs.monthly[k] = *value;
    }
    if (!seen_ids[*label].insert(obs_id).second) {
      throw Error(ErrorKind::MalformedRow, detail::row_error(line_no, "duplicate obs_id '" + obs_id + "' within period"));
    }
    auto [it, inserted] = by_label.try_emplace(*label);
    if (inserted) {
      it->second.id.label = format_half_year(*label);
      it->second.width = width;
    }
    it->second.push_back(obs);
  }
  if (by_label.empty()) throw Error(ErrorKind::EmptyFile, "'" + source + "' has a header but no data rows");

  std::vector<Period> periods;
  periods.reserve(by_label.size());
  int ordinal = 1;
  for (auto& [label, period] : by_label) {
    period.id.ordinal = ordinal++;
    periods.push_back(std::move(period));
  }
  // a training row must carry its label everywhere except the final period
  for (std::size_t k = 0; k + 1 < periods.size(); ++k) {
    const Period& p = periods[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.is_train[i] && !p.has_target(i)) {
        throw Error(ErrorKind::InvalidPanel,
                    "training row '" + p.obs_ids[i] + "' in non-final period " + p.id.label + " has no target");
      }
    }
  }
  return Panel::from_periods(schema, std::move(periods), Provenance{std::move(source), "raw", ""});
}

inline Panel load_csv(const std::string& path, const ColumnSchema& schema = {}) {
  return parse_panel_csv(csv::read_file(path), schema, path);
}

/// Challenge-format CSV text in canonical column order.
inline std::string write_panel_csv(const Panel& panel) {
  const ColumnSchema& schema = panel.schema();
  std::string out;
  out += schema.period_column + "," + schema.id_column + "," + schema.train_column;
  for (int v = 0; v < schema.n_variables; ++v) {
    for (int m = 0; m < schema.n_months; ++m) out += "," + schema.value_column(v, m);
  }
  out += "," + schema.target_column + "\n";
  for (const auto& p : panel.periods()) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      out += p->id.label;
      out += ',';
      out += p->obs_ids[i];
      out += p->is_train[i] ? ",1" : ",0";
      for (double v : p->row(i)) {
        out += ',';
        if (!is_missing(v)) out += csv::format_double(v);
      }
      out += ',';
      if (p->has_target(i)) out += csv::format_double(p->targets[i]);
      out += '\n';
    }
  }
  return out;
}

inline void save_csv(const Panel& panel, const std::string& path) { csv::write_file(path, write_panel_csv(panel)); }

// ---------------------------------------------------------------------------
// Imputation, windows and train/test views

namespace detail {

inline double median_of(std::vector<double>& values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Fills every missing monthly cell. The median strategy uses, per period and per
/// (variable, month) column, the median over that period's training rows only,
/// and 0 when no training row has a value.
inline Panel impute(const Panel& panel, ImputationStrategy strategy) {
  if (panel.is_imputed()) {
    throw Error(ErrorKind::AlreadyImputed, "panel was already imputed with '" + panel.provenance().imputation + "'");
  }
  std::vector<Period> out;
  out.reserve(panel.num_periods());
  for (const auto& src : panel.periods()) {
    Period p = *src;
    std::vector<double> fill(p.width, 0.0);
    if (strategy == ImputationStrategy::MedianPerVariable) {
      std::vector<double> column;
      for (std::size_t c = 0; c < p.width; ++c) {
        column.clear();
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double v = p.monthly[i * p.width + c];
          if (p.is_train[i] && !is_missing(v)) column.push_back(v);
        }
        if (!column.empty()) fill[c] = detail::median_of(column);
      }
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto row = p.row(i);
      for (std::size_t c = 0; c < p.width; ++c) {
        if (is_missing(row[c])) row[c] = fill[c];
      }
    }
    out.push_back(std::move(p));
  }
  Provenance prov = panel.provenance();
  prov.imputation = std::string(to_string(strategy));
  return Panel::from_periods(panel.schema(), std::move(out), std::move(prov));
}

/// All periods, or only the most recent `length`.
struct WindowSpec {
  enum class Kind { All, Last };
  Kind kind = Kind::All;
  int length = 0;

  static WindowSpec all() { return {}; }
  static WindowSpec last(int k) { return {Kind::Last, k}; }

  bool operator==(const WindowSpec&) const = default;
};

/// Periods with ordinal <= end_ordinal, optionally restricted to the last k of them.
/// Shares period storage with `panel`.
inline Panel slice_window(const Panel& panel, int end_ordinal, WindowSpec window) {
  if (panel.empty() || end_ordinal < panel.first_ordinal() || end_ordinal > panel.last_ordinal()) {
    throw Error(ErrorKind::OrdinalOutOfRange, "end ordinal " + std::to_string(end_ordinal) + " outside [" +
                                                  std::to_string(panel.first_ordinal()) + ", " +
                                                  std::to_string(panel.last_ordinal()) + "]");
  }
  if (window.kind == WindowSpec::Kind::Last && window.length < 1) {
    throw Error(ErrorKind::OrdinalOutOfRange, "window length must be >= 1");
  }
  const std::size_t end = static_cast<std::size_t>(end_ordinal - panel.first_ordinal()) + 1;
  std::size_t begin = 0;
  if (window.kind == WindowSpec::Kind::Last && end > static_cast<std::size_t>(window.length)) {
    begin = end - static_cast<std::size_t>(window.length);
  }
  std::vector<Panel::PeriodPtr> kept(panel.periods().begin() + static_cast<std::ptrdiff_t>(begin),
                                     panel.periods().begin() + static_cast<std::ptrdiff_t>(end));
  return Panel(panel.schema(), std::move(kept), panel.provenance());
}

struct TrainTestViews {
  Panel train;
  Panel test;
};

/// Partitions every period by its Train flag. A period may end up empty in one view.
inline TrainTestViews split(const Panel& panel) {
  std::vector<Period> train;
  std::vector<Period> test;
  for (const auto& p : panel.periods()) {
    train.push_back(p->filtered([&](std::size_t i) { return p->is_train[i] != 0; }));
    test.push_back(p->filtered([&](std::size_t i) { return p->is_train[i] == 0; }));
  }
  return {Panel::from_periods(panel.schema(), std::move(train), panel.provenance()),
          Panel::from_periods(panel.schema(), std::move(test), panel.provenance())};
}

/// Inverse of split: interleaves two views back into source row order.
inline Panel merge_views(const Panel& a, const Panel& b) {
  if (a.num_periods() != b.num_periods() || !(a.schema() == b.schema())) {
    throw Error(ErrorKind::ShapeMismatch, "views do not cover the same periods");
  }
  std::vector<Period> out;
  for (std::size_t k = 0; k < a.num_periods(); ++k) {
    const Period& pa = a.period(k);
    const Period& pb = b.period(k);
    if (!(pa.id == pb.id)) throw Error(ErrorKind::ShapeMismatch, "period mismatch while merging views");
    std::vector<std::pair<std::size_t, StockObservation>> rows;
    for (std::size_t i = 0; i < pa.size(); ++i) rows.emplace_back(pa.row_index[i], pa.observation(i));
    for (std::size_t i = 0; i < pb.size(); ++i) rows.emplace_back(pb.row_index[i], pb.observation(i));
    std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    Period merged;
    merged.id = pa.id;
    merged.width = pa.width;
    for (auto& [index, obs] : rows) {
      merged.push_back(obs);
      merged.row_index.back() = index;
    }
    out.push_back(std::move(merged));
  }
  return Panel::from_periods(a.schema(), std::move(out), a.provenance());
}

}  // namespace stockrank
