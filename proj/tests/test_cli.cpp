#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "clab/report.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "clab_cli_work";

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const fs::path out_file = kWork / "stdout.txt";
  const std::string cmd =
      std::string(CLAB_BIN) + " " + args + " > " + out_file.string() + " 2>/dev/null";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file, std::ios::binary);
  r.out.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return r;
}

std::string write_config(const char* name, const std::string& output_dir,
                         const char* extra = "") {
  const fs::path path = kWork / name;
  std::ofstream out(path);
  out << R"({
    "scenario": {"kind": "class_il", "dataset": "synthetic", "num_classes": 4,
                 "per_class": 12, "image_size": 8, "classes_per_task": 2},
    "methods": ["er"],
    "train": {"budget_epochs": 1, "batch_size": 10, "buffer_capacity": 16,
              "learning_rate": 0.01, "gamma": 0.5},
    "network": {"hidden_dims": [16], "ssl_proj_dim": 8},
    "seeds": [1],)"
      << extra << R"(
    "output_dir": ")" << output_dir << R"("
  })";
  return path.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("run verb writes the report tree and exits zero") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string dir = (kWork / "out_a").string();
  const std::string cfg = write_config("a.json", dir);

  CliResult r = run_cli("run " + cfg);
  CHECK(r.code == 0);
  json record = json::parse(r.out);
  CHECK(record.at("error") == false);
  CHECK(fs::exists(dir + "/report.json"));
  CHECK(fs::exists(dir + "/summary.csv"));
  CHECK(record.at("report").get<std::string>() == dir + "/report.json");

  json report = json::parse(slurp(dir + "/report.json"));
  CHECK(report.at("format") == "clab-report");
  CHECK(report.at("runs").size() == 1);

  // rerunning the identical config reproduces the report byte for byte,
  // wall clock aside
  const std::string first_report = slurp(dir + "/report.json");
  const std::string first_summary = slurp(dir + "/summary.csv");
  CHECK(run_cli("run " + cfg).code == 0);
  CHECK(clab::report_without_wall_clock(first_report) ==
        clab::report_without_wall_clock(slurp(dir + "/report.json")));
  CHECK(first_summary == slurp(dir + "/summary.csv"));
}

TEST_CASE("validate verb echoes the fully defaulted config") {
  fs::create_directories(kWork);
  const std::string cfg = write_config("v.json", (kWork / "unused").string());
  CliResult r = run_cli("validate " + cfg);
  CHECK(r.code == 0);
  json record = json::parse(r.out);
  CHECK(record.at("error") == false);
  CHECK(record.at("config").at("train").at("gamma") == 0.5);
  CHECK(record.at("config").at("train").at("alpha") == 1.0);  // defaulted
  CHECK(record.at("config").at("metrics").at("transfer") == true);
}

TEST_CASE("bad configs exit nonzero with a machine-readable record") {
  fs::create_directories(kWork);
  const fs::path bad = kWork / "bad.json";
  std::ofstream(bad) << R"({"method": "er", "train": {"gamma": 2.0}})";

  CliResult r = run_cli("validate " + bad.string());
  CHECK(r.code != 0);
  json record = json::parse(r.out);
  CHECK(record.at("error") == true);
  CHECK(record.at("verb") == "validate");
  CHECK(record.at("message").get<std::string>().find("gamma") != std::string::npos);

  CliResult missing = run_cli("run " + (kWork / "absent.json").string());
  CHECK(missing.code != 0);
  CHECK(json::parse(missing.out).at("error") == true);
}

TEST_CASE("compare verb tabulates reports and rejects mismatches") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string dir_a = (kWork / "cmp_a").string();
  const std::string dir_b = (kWork / "cmp_b").string();
  REQUIRE(run_cli("run " + write_config("ca.json", dir_a)).code == 0);
  REQUIRE(run_cli("run " + write_config("cb.json", dir_b)).code == 0);

  const fs::path table = kWork / "table.md";
  CliResult r = run_cli("compare " + dir_a + "/report.json " + dir_b +
                        "/report.json -o " + table.string());
  CHECK(r.code == 0);
  const std::string text = slurp(table);
  CHECK(text.find("report_0 (er)") != std::string::npos);
  CHECK(text.find("delta_1") != std::string::npos);

  // without -o the table lands on stdout
  CliResult piped = run_cli("compare " + dir_a + "/report.json");
  CHECK(piped.code == 0);
  CHECK(piped.out.find("# report comparison") == 0);

  const std::string dir_c = (kWork / "cmp_c").string();
  const std::string other = write_config(
      "cc.json", dir_c, R"("metrics": {"transfer": false},)");
  {
    // different scenario: bump the task width
    std::ifstream in(kWork / "cc.json");
    std::string text2((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto pos = text2.find("\"classes_per_task\": 2");
    REQUIRE(pos != std::string::npos);
    text2.replace(pos, 21, "\"classes_per_task\": 4");
    std::ofstream(kWork / "cc.json") << text2;
  }
  REQUIRE(run_cli("run " + (kWork / "cc.json").string()).code == 0);
  CliResult mismatch = run_cli("compare " + dir_a + "/report.json " + dir_c +
                               "/report.json");
  CHECK(mismatch.code != 0);
  CHECK(json::parse(mismatch.out).at("error") == true);
}
