// stockrank command-line driver: synth, backtest, score, report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stockrank/stockrank.hpp"

namespace fs = std::filesystem;
using namespace stockrank;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

/// Exit code for a library error: configuration and input-shape problems are usage errors.
int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::IoError:
    case ErrorKind::MissingColumn:
    case ErrorKind::MalformedRow:
    case ErrorKind::DuplicatePeriodLabelOrder:
    case ErrorKind::EmptyFile:
    case ErrorKind::InvalidPanel:
    case ErrorKind::InsufficientHistory:
      return kRuntime;
    default:
      return kUsage;
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create directory '" + dir.string() + "': " + ec.message());
}

RunConfig read_config(const std::string& path) {
  std::string text;
  try {
    text = csv::read_file(path);
  } catch (const Error&) {
    throw Error(ErrorKind::InvalidConfig, "cannot read config '" + path + "'");
  }
  return parse_run_config(text);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg;
  try {
    cfg = read_config(a.config);
    if (!cfg.synth) throw Error(ErrorKind::InvalidConfig, "config has no 'synth' section");
    if (a.seed_override) cfg.synth->seed = *a.seed_override;
  } catch (const Error& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return kUsage;
  }
  const std::string out = !a.out.empty() ? a.out : cfg.output.value_or("");
  if (out.empty()) {
    std::cerr << "synth: no output directory (--out or config.output)\n";
    return kUsage;
  }
  try {
    const auto [panel, truth] = generate_panel(*cfg.synth);
    ensure_dir(out);
    save_csv(panel, (fs::path(out) / "panel.csv").string());
    csv::write_file((fs::path(out) / "ground_truth.json").string(), to_json(truth).dump(2) + "\n");
  } catch (const Error& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct BacktestArgs {
  std::string config;
  std::string data;
  std::string out;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed_override;
};

int cmd_backtest(const BacktestArgs& a) {
  RunConfig cfg;
  try {
    cfg = read_config(a.config);
    if (a.seed_override && cfg.synth) cfg.synth->seed = *a.seed_override;
  } catch (const Error& e) {
    std::cerr << "backtest: " << e.what() << "\n";
    return kUsage;
  }
  const std::string data = !a.data.empty() ? a.data : cfg.data.value_or("");
  const std::string out = !a.out.empty() ? a.out : cfg.output.value_or("");
  if (out.empty()) {
    std::cerr << "backtest: no output directory (--out or config.output)\n";
    return kUsage;
  }
  if (data.empty() && !cfg.synth) {
    std::cerr << "backtest: no data (--data, config.data or config.synth)\n";
    return kUsage;
  }

  Panel panel;
  try {
    panel = data.empty() ? generate_panel(*cfg.synth).first : load_csv(data, cfg.column_schema());
  } catch (const Error& e) {
    std::cerr << "backtest: " << e.what() << "\n";
    return kRuntime;
  }

  try {
    const BacktestOutput result = run_backtest_full(panel, cfg.pipeline, {a.jobs});
    ensure_dir(out);
    emit_report(result.report, ReportFormat::Json, (fs::path(out) / "report.json").string());
    emit_report(result.report, ReportFormat::Csv, (fs::path(out) / "report.csv").string());
    const fs::path pred_dir = fs::path(out) / "predictions";
    ensure_dir(pred_dir);
    for (const auto& p : result.predictions) {
      csv::write_file((pred_dir / (p.label + ".csv")).string(), predictions_csv_text(p));
    }
    std::size_t succeeded = 0;
    for (const auto& r : result.report.records) {
      if (!r.failed()) ++succeeded;
      if (r.failed()) std::cerr << "backtest: period " << r.label << " " << r.status << "\n";
    }
    if (succeeded == 0) {
      std::cerr << "backtest: no period succeeded\n";
      return kRuntime;
    }
  } catch (const Error& e) {
    std::cerr << "backtest: " << e.what() << "\n";
    return exit_code_for(e) == kUsage ? kUsage : kRuntime;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct Scores {
  // period label -> (obs_id -> value), in file order of first appearance
  std::map<std::string, std::map<std::string, double>> by_period;
};

std::optional<std::size_t> find_column(const std::vector<std::string_view>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

/// Reads `period_label,obs_id,<value>` rows. With `truth`, a challenge-format panel
/// is also accepted: the target column is Norm_Ret_F6M and only test rows count.
Scores read_scores(const std::string& path, bool truth) {
  const std::string text = csv::read_file(path);
  const auto lines = csv::lines(text);
  if (lines.empty()) throw Error(ErrorKind::EmptyFile, path + " is empty");
  const auto header = csv::split(lines.front());
  const auto period_col = find_column(header, "period_label");
  const auto id_col = find_column(header, "obs_id");
  if (!period_col || !id_col) throw Error(ErrorKind::MissingColumn, path + " needs period_label and obs_id columns");
  std::optional<std::size_t> value_col;
  std::optional<std::size_t> train_col;
  if (truth) {
    value_col = find_column(header, "Norm_Ret_F6M");
    train_col = find_column(header, "Train");
  }
  if (!value_col) {
    if (header.size() != 3) throw Error(ErrorKind::MissingColumn, path + " needs exactly three columns");
    for (std::size_t i = 0; i < 3; ++i) {
      if (i != *period_col && i != *id_col) value_col = i;
    }
  }

  Scores out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto f = csv::split(lines[ln]);
    if (f.size() != header.size()) throw Error(ErrorKind::MalformedRow, path + " line " + std::to_string(ln + 1) + ": wrong field count");
    if (train_col && f[*train_col] != "0") continue;
    if (truth && f[*value_col].empty()) continue;
    const auto v = csv::parse_double(f[*value_col]);
    if (!v) throw Error(ErrorKind::MalformedRow, path + " line " + std::to_string(ln + 1) + ": bad number");
    auto& period = out.by_period[std::string(f[*period_col])];
    if (!period.emplace(std::string(f[*id_col]), *v).second) {
      throw Error(ErrorKind::MalformedRow, path + " line " + std::to_string(ln + 1) + ": duplicate obs_id");
    }
  }
  return out;
}

bool label_less(const std::string& a, const std::string& b) {
  const auto ha = try_parse_half_year(a);
  const auto hb = try_parse_half_year(b);
  if (ha && hb) return *ha < *hb;
  return a < b;
}

/// Rounds to 10 significant digits.
double sig10(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return std::stod(buf);
}

int cmd_score(const std::string& pred_path, const std::string& truth_path) {
  Scores pred, truth;
  try {
    pred = read_scores(pred_path, false);
    truth = read_scores(truth_path, true);
  } catch (const Error& e) {
    std::cerr << "score: " << e.what() << "\n";
    return e.kind() == ErrorKind::IoError ? kRuntime : kUsage;
  }
  std::vector<std::string> labels;
  for (const auto& [label, rows] : pred.by_period) labels.push_back(label);
  std::sort(labels.begin(), labels.end(), label_less);
  if (labels.empty()) {
    std::cerr << "score: no predictions\n";
    return kUsage;
  }

  nlohmann::ordered_json out;
  out["per_period"] = nlohmann::ordered_json::array();
  double sp_sum = 0.0, nd_sum = 0.0;
  for (const auto& label : labels) {
    const auto& p = pred.by_period.at(label);
    const auto it = truth.by_period.find(label);
    if (it == truth.by_period.end()) {
      std::cerr << "score: period " << label << " has no truth rows\n";
      return kUsage;
    }
    const auto& t = it->second;
    if (p.size() != t.size()) {
      std::cerr << "score: obs_id sets differ in period " << label << "\n";
      return kUsage;
    }
    std::vector<double> pv, tv;
    for (const auto& [id, v] : p) {
      const auto jt = t.find(id);
      if (jt == t.end()) {
        std::cerr << "score: obs_id " << id << " of period " << label << " missing from truth\n";
        return kUsage;
      }
      pv.push_back(v);
      tv.push_back(jt->second);
    }
    double sp = 0.0, nd = 0.0;
    try {
      sp = spearman(pv, tv);
      nd = ndcg_top_fraction(pv, tv, 0.2);
    } catch (const Error& e) {
      std::cerr << "score: period " << label << ": " << e.what() << "\n";
      return kUsage;
    }
    sp_sum += sp;
    nd_sum += nd;
    out["per_period"].push_back({{"period", label}, {"n", pv.size()}, {"spearman", sig10(sp)}, {"ndcg", sig10(nd)}});
  }
  out["spearman_mean"] = sig10(sp_sum / static_cast<double>(labels.size()));
  out["ndcg_mean"] = sig10(nd_sum / static_cast<double>(labels.size()));
  std::cout << out.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Per-period metric series with running means, one row per record.
std::string series_csv(const BacktestReport& report) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_double(v); };
  std::string out = "ordinal,period,spearman,ndcg,combined,spearman_running_mean,ndcg_running_mean\n";
  double sp = 0.0, nd = 0.0;
  std::size_t n = 0;
  for (const auto& r : report.records) {
    if (r.scored()) {
      sp += r.spearman;
      nd += r.ndcg;
      ++n;
    }
    const double sp_mean = n ? sp / static_cast<double>(n) : kNotScored;
    const double nd_mean = n ? nd / static_cast<double>(n) : kNotScored;
    out += std::to_string(r.ordinal) + "," + r.label + "," + num(r.spearman) + "," + num(r.ndcg) + "," + num(r.combined) + "," +
           num(sp_mean) + "," + num(nd_mean) + "\n";
  }
  return out;
}

int cmd_report(const std::string& report_path, const std::string& out) {
  BacktestReport report;
  try {
    report = report_from_json(nlohmann::ordered_json::parse(csv::read_file(report_path)));
  } catch (const Error& e) {
    std::cerr << "report: " << e.what() << "\n";
    return e.kind() == ErrorKind::IoError ? kRuntime : kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "report: malformed JSON: " << e.what() << "\n";
    return kUsage;
  }
  if (out.empty()) {
    std::cout << report_csv_text(report);
    return kOk;
  }
  try {
    ensure_dir(out);
    emit_report(report, ReportFormat::Csv, (fs::path(out) / "report.csv").string());
    csv::write_file((fs::path(out) / "series.csv").string(), series_csv(report));
  } catch (const Error& e) {
    std::cerr << "report: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-sectional stock ranking: synthetic panels, walk-forward backtests, scoring"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic panel CSV and its ground-truth JSON");
  synth->add_option("--config", synth_args.config, "Run config JSON with a 'synth' section")->required();
  synth->add_option("--out", synth_args.out, "Output directory (panel.csv, ground_truth.json); default config.output");
  auto* synth_seed_opt = synth->add_option("--seed-override", synth_seed, "Replace the configured seed");

  BacktestArgs bt_args;
  std::uint64_t bt_seed = 0;
  auto* backtest = app.add_subcommand("backtest", "Run the walk-forward backtest and write report and predictions");
  backtest->add_option("--config", bt_args.config, "Run config JSON")->required();
  backtest->add_option("--data", bt_args.data, "Challenge-format panel CSV; default config.data, else generated from config.synth");
  backtest->add_option("--out", bt_args.out, "Output directory; default config.output");
  backtest->add_option("--jobs", bt_args.jobs, "Worker threads (output does not depend on it)")->check(CLI::Range(1u, 1024u));
  auto* bt_seed_opt = backtest->add_option("--seed-override", bt_seed, "Replace config.synth.seed when generating data");

  std::string pred_path, truth_path;
  auto* score = app.add_subcommand("score", "Score a prediction CSV against truth; prints JSON");
  score->add_option("predictions", pred_path, "CSV with period_label,obs_id,score")->required();
  score->add_option("truth", truth_path, "CSV with period_label,obs_id,<target>, or a challenge-format panel")->required();

  std::string report_path, report_out;
  auto* report = app.add_subcommand("report", "Re-render a JSON report as CSV and plot-ready series");
  report->add_option("report", report_path, "report.json from backtest")->required();
  report->add_option("--out", report_out, "Output directory (report.csv, series.csv); default: CSV on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  if (*synth) {
    if (*synth_seed_opt) synth_args.seed_override = synth_seed;
    return cmd_synth(synth_args);
  }
  if (*backtest) {
    if (*bt_seed_opt) bt_args.seed_override = bt_seed;
    return cmd_backtest(bt_args);
  }
  if (*score) return cmd_score(pred_path, truth_path);
  if (*report) return cmd_report(report_path, report_out);
  return kUsage;
}
