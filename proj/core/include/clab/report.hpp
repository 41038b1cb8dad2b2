#pragma once

#include <map>
#include <string>
#include <vector>

#include "clab/config.hpp"

namespace clab {

struct RunOutcome {
  std::string report_json;
  std::string summary_csv;
  // file name -> contents, one file per enabled probe
  std::map<std::string, std::string> plot_csvs;
};

// Runs every configured method x seed combination and assembles the report
// payloads. Deterministic except for the per-run wall_clock_seconds field.
RunOutcome execute(const ExperimentConfig& cfg);

// Writes report.json, summary.csv, and the plot CSVs into dir (created if
// missing). Returns the report path.
std::string write_run_outputs(const RunOutcome& outcome, const std::string& dir);

// The report with its nondeterministic wall-clock fields removed, for
// byte-level comparisons.
std::string report_without_wall_clock(const std::string& report_json);

// Markdown table of aggregates aligned by method with deltas against the
// first report. All reports must share the scenario block.
std::string compare_reports(const std::vector<std::string>& report_texts);

}  // namespace clab
