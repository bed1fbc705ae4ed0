#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"
#include "stockrank/panel.hpp"
#include "stockrank/pipeline.hpp"
#include "stockrank/synthgen.hpp"

namespace stockrank {

/// One run document: generator settings and/or a data path, the pipeline, and
/// an output directory. Schema: docs/run_config.schema.json.
struct RunConfig {
  std::optional<SynthConfig> synth;
  std::optional<std::string> data;
  std::optional<ColumnSchema> schema;  // CSV shape; falls back to the synth shape, then 70 x 6
  PipelineSpec pipeline;
  std::optional<std::string> output;

  ColumnSchema column_schema() const {
    if (schema) return *schema;
    ColumnSchema s;
    if (synth) {
      s.n_variables = synth->n_variables;
      s.n_months = synth->n_months;
    }
    return s;
  }
};

template <typename Json>
RunConfig run_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"synth", "data", "schema", "pipeline", "output"}, "config");
  RunConfig c;
  if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"), "config.synth");
  if (j.contains("data")) c.data = detail::require_string(j.at("data"), "config.data");
  if (j.contains("schema")) {
    const auto& s = j.at("schema");
    detail::reject_unknown_keys(s, {"n_variables", "n_months"}, "config.schema");
    ColumnSchema cs;
    cs.n_variables = detail::get_or<int>(s, "n_variables", cs.n_variables, "config.schema");
    cs.n_months = detail::get_or<int>(s, "n_months", cs.n_months, "config.schema");
    if (cs.n_variables < 1 || cs.n_months < 1) throw Error(ErrorKind::InvalidConfig, "config.schema sizes must be >= 1");
    c.schema = cs;
  }
  if (j.contains("pipeline")) c.pipeline = pipeline_from_json(j.at("pipeline"), "config.pipeline");
  if (j.contains("output")) c.output = detail::require_string(j.at("output"), "config.output");
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(csv::read_file(path)); }

}  // namespace stockrank
