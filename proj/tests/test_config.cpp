#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "clab/config.hpp"

namespace {

// doctest's THROWS_WITH wants the full message; we only pin the key path.
template <typename Fn>
std::string error_text(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config applies the documented defaults") {
  clab::ExperimentConfig cfg = clab::parse_config_text(
      R"({"scenario": {"kind": "class_il"}, "method": "er"})");
  CHECK(cfg.methods == std::vector<std::string>{"er"});
  CHECK(cfg.train.gamma == 0.9);
  CHECK(cfg.train.alpha == 1.0);
  CHECK(cfg.train.beta == 1.0);
  CHECK(cfg.train.learning_rate == 3e-4);
  CHECK(cfg.train.buffer_capacity == 200);
  CHECK(cfg.train.optimizer == "adam");
  CHECK(cfg.scenario.dataset == "synthetic");
  CHECK(cfg.scenario.num_classes == 10);
  CHECK(cfg.scenario.classes_per_task == 2);
  CHECK(cfg.hidden_dims == std::vector<std::size_t>{100, 100});
  CHECK(cfg.ssl_proj_dim == 64);
  CHECK(cfg.metrics.transfer);
  CHECK_FALSE(cfg.metrics.ece);
  CHECK_FALSE(cfg.metrics.corruption);
  CHECK(cfg.output_dir == "runs");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
}

TEST_CASE("unknown keys are rejected with their full path") {
  auto parse = [](const char* text) { return clab::parse_config_text(text); };
  CHECK(error_text([&] { parse(R"({"frobnicate": 1})"); }).find("'frobnicate'") !=
        std::string::npos);
  CHECK(error_text([&] {
          parse(R"({"scenario": {"kind": "class_il", "rot": 3}, "method": "er"})");
        }).find("'scenario.rot'") != std::string::npos);
  CHECK(error_text([&] {
          parse(R"({"method": "er", "train": {"seed": 4}})");
        }).find("'train.seed'") != std::string::npos);
  CHECK(error_text([&] {
          parse(R"({"method": "er", "network": {"input_dim": 4}})");
        }).find("'network.input_dim'") != std::string::npos);
  CHECK(error_text([&] {
          parse(R"({"method": "er", "metrics": {"calibration": true}})");
        }).find("'metrics.calibration'") != std::string::npos);
}

TEST_CASE("type and token errors carry context") {
  CHECK(error_text([] {
          clab::parse_config_text(R"({"method": "er+tarc+typo"})");
        }).find("er+tarc+typo") != std::string::npos);
  CHECK(error_text([] {
          clab::parse_config_text(R"({"method": "er", "train": {"gamma": "high"}})");
        }).find("train.gamma") != std::string::npos);
  CHECK(error_text([] { clab::parse_config_text(R"([1, 2])"); })
            .find("object") != std::string::npos);
  CHECK(error_text([] { clab::parse_config_text("{not json"); })
            .find("json") != std::string::npos);
  CHECK_THROWS_AS(
      clab::parse_config_text(R"({"method": "er", "methods": ["er"]})"),
      std::invalid_argument);
}

TEST_CASE("serialize -> parse is a fixpoint") {
  const std::string text = R"({
    "scenario": {"kind": "domain_il", "num_classes": 4, "per_class": 12,
                 "image_size": 8, "n_tasks": 3, "seed": 9},
    "methods": ["er", "er+tarc"],
    "train": {"budget_epochs": 2, "gamma": 0.5, "beta": 0.0, "batch_size": 8,
              "buffer_capacity": 16, "optimizer": "sgd", "learning_rate": 0.05},
    "network": {"hidden_dims": [24, 24], "ssl_proj_dim": 12, "ssl_batchnorm": false},
    "metrics": {"ece": true},
    "output_dir": "out/dir",
    "seeds": [3, 5]
  })";
  clab::ExperimentConfig cfg = clab::parse_config_text(text);
  const std::string s1 = clab::serialize_config(cfg);
  const std::string s2 = clab::serialize_config(clab::parse_config_text(s1));
  CHECK(s1 == s2);

  clab::ExperimentConfig back = clab::parse_config_text(s1);
  CHECK(back.scenario.kind == "domain_il");
  CHECK(back.scenario.n_tasks == 3);
  CHECK(back.methods == cfg.methods);
  CHECK(back.train.gamma == 0.5);
  CHECK(back.train.beta == 0.0);
  CHECK(back.train.optimizer == "sgd");
  CHECK(back.hidden_dims == std::vector<std::size_t>{24, 24});
  CHECK_FALSE(back.ssl_batchnorm);
  CHECK(back.metrics.ece);
  CHECK(back.output_dir == "out/dir");
  CHECK(back.seeds == std::vector<std::uint64_t>{3, 5});
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS_AS(clab::parse_config_text(R"({"methods": []})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(clab::parse_config_text(R"({"method": "er", "seeds": []})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      clab::parse_config_text(R"({"methods": ["er", "er"]})"),
      std::invalid_argument);
  // corruption scores need the plain-er baseline in the same batch
  CHECK_THROWS_AS(clab::parse_config_text(
                      R"({"method": "sgd", "metrics": {"corruption": true}})"),
                  std::invalid_argument);
  CHECK_NOTHROW(clab::parse_config_text(
      R"({"methods": ["sgd", "er"], "metrics": {"corruption": true}})"));
  // recency bias needs tasks that own disjoint class sets
  CHECK_THROWS_AS(
      clab::parse_config_text(
          R"({"scenario": {"kind": "domain_il"}, "method": "er",
              "metrics": {"bias": true}})"),
      std::invalid_argument);
  CHECK_THROWS_AS(clab::parse_config_text(
                      R"({"scenario": {"kind": "marble_il"}, "method": "er"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(clab::parse_config_text(
                      R"({"method": "er", "network": {"hidden_dims": []}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(clab::parse_config_text(
                      R"({"method": "er", "train": {"gamma": 1.5}})"),
                  std::invalid_argument);
}

TEST_CASE("scenario dispatch builds the matching stream") {
  clab::ScenarioConfig sc;
  sc.num_classes = 4;
  sc.per_class = 12;
  sc.image_size = 8;
  clab::Dataset ds = clab::load_scenario_dataset(sc);
  CHECK(ds.num_classes == 4);
  CHECK(ds.size() == 48);

  sc.kind = "class_il";
  sc.classes_per_task = 2;
  clab::ScenarioStream s1 = clab::build_stream(sc, ds);
  CHECK(s1.scenario == clab::Scenario::kClassIl);
  CHECK(s1.tasks.size() == 2);

  sc.kind = "domain_il";
  sc.n_tasks = 3;
  clab::ScenarioStream s2 = clab::build_stream(sc, ds);
  CHECK(s2.scenario == clab::Scenario::kDomainIl);
  CHECK(s2.tasks.size() == 3);

  // the general stream wants the full ten-class layout
  sc.kind = "general_il";
  sc.rounds = 2;
  sc.num_classes = 10;
  clab::Dataset ds10 = clab::load_scenario_dataset(sc);
  clab::ScenarioStream s3 = clab::build_stream(sc, ds10);
  CHECK(s3.scenario == clab::Scenario::kGeneralIl);
  CHECK(s3.tasks.size() > 2);
}

TEST_CASE("network_for derives dimensions from the dataset") {
  clab::ExperimentConfig cfg = clab::parse_config_text(
      R"({"method": "er", "network": {"hidden_dims": [32], "ssl_proj_dim": 16}})");
  clab::Dataset ds = clab::synthetic_digits(4, 12, 8, 0);
  clab::NetworkConfig net = cfg.network_for(ds);
  CHECK(net.input_dim == 64);
  CHECK(net.num_classes == 4);
  CHECK(net.hidden_dims == std::vector<std::size_t>{32});
  CHECK(net.ssl_proj_dim == 16);
}

TEST_CASE("idx datasets resolve against the data directory variable") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "clab_cfg_data";
  const fs::path dir = root / "digits";
  fs::create_directories(dir);
  clab::Dataset ds = clab::synthetic_digits(3, 8, 8, 2);
  clab::write_idx((dir / "images.idx").string(), (dir / "labels.idx").string(), ds);

  clab::ScenarioConfig sc;
  sc.dataset = (dir).string();  // absolute: env var not consulted
  clab::Dataset abs = clab::load_scenario_dataset(sc);
  CHECK(abs.size() == ds.size());
  CHECK(abs.num_classes == 3);

  setenv("CLAB_DATA_DIR", root.string().c_str(), 1);
  sc.dataset = "digits";  // relative: joined onto $CLAB_DATA_DIR
  clab::Dataset rel = clab::load_scenario_dataset(sc);
  unsetenv("CLAB_DATA_DIR");
  CHECK(rel.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(rel.samples[i].label == ds.samples[i].label);
    CHECK(rel.samples[i].image.data == abs.samples[i].image.data);
  }

  sc.dataset = "missing_dir";
  CHECK_THROWS_AS(clab::load_scenario_dataset(sc), std::runtime_error);
}
