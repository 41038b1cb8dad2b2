#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clab/config.hpp"
#include "clab/report.hpp"

namespace {

int fail(const std::string& verb, const std::string& what) {
  // machine-readable error record on stdout, prose on stderr
  nlohmann::ordered_json err;
  err["error"] = true;
  err["verb"] = verb;
  err["message"] = what;
  std::cout << err.dump() << "\n";
  std::cerr << "clab " << verb << ": " << what << "\n";
  return 1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_verb(const std::string& config_path) {
  clab::ExperimentConfig cfg = clab::parse_config(config_path);
  clab::RunOutcome outcome = clab::execute(cfg);
  const std::string report_path = clab::write_run_outputs(outcome, cfg.output_dir);
  nlohmann::ordered_json done;
  done["error"] = false;
  done["report"] = report_path;
  done["summary"] = (std::filesystem::path(cfg.output_dir) / "summary.csv").string();
  std::cout << done.dump() << "\n";
  return 0;
}

int compare_verb(const std::vector<std::string>& report_paths,
                 const std::string& out_path) {
  std::vector<std::string> texts;
  for (const std::string& p : report_paths) texts.push_back(slurp(p));
  const std::string table = clab::compare_reports(texts);
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << table;
  }
  return 0;
}

int validate_verb(const std::string& config_path) {
  clab::ExperimentConfig cfg = clab::parse_config(config_path);
  nlohmann::ordered_json done;
  done["error"] = false;
  done["config"] = nlohmann::ordered_json::parse(clab::serialize_config(cfg));
  std::cout << done.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning lab"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run = app.add_subcommand("run", "run every method x seed of a config");
  run->add_option("config", run_config, "experiment config (json)")->required();

  std::vector<std::string> compare_paths;
  std::string compare_out;
  CLI::App* compare = app.add_subcommand("compare", "tabulate reports against the first");
  compare->add_option("reports", compare_paths, "report.json files")->required();
  compare->add_option("-o,--out", compare_out, "write the table here instead of stdout");

  std::string validate_config;
  CLI::App* validate = app.add_subcommand("validate", "parse a config and echo it fully defaulted");
  validate->add_option("config", validate_config, "experiment config (json)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_verb(run_config);
    if (compare->parsed()) return compare_verb(compare_paths, compare_out);
    return validate_verb(validate_config);
  } catch (const std::exception& e) {
    return fail(app.get_subcommands().front()->get_name(), e.what());
  }
}
