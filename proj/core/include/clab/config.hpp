#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clab/data.hpp"
#include "clab/model.hpp"
#include "clab/trainers.hpp"

namespace clab {

struct ScenarioConfig {
  std::string kind = "class_il";  // class_il | domain_il | general_il
  // "synthetic" or a directory holding images.idx / labels.idx. Relative
  // directories resolve against $CLAB_DATA_DIR when that variable is set.
  std::string dataset = "synthetic";
  std::size_t num_classes = 10;  // synthetic generator knobs
  std::size_t per_class = 200;
  std::size_t image_size = 16;
  std::size_t classes_per_task = 2;  // class_il
  std::size_t n_tasks = 20;          // domain_il
  std::size_t rounds = 6;            // general_il
  std::uint64_t seed = 0;            // generator and rotation draws

  void validate() const;
  Scenario scenario() const;
};

struct MetricToggles {
  bool transfer = true;
  bool ece = false;
  bool corruption = false;
  bool flatness = false;
  bool bias = false;
  bool noisy_label = false;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<std::string> methods{"er"};
  TrainConfig train;  // per-run seed comes from `seeds`, not from here
  std::vector<std::size_t> hidden_dims{100, 100};
  std::size_t ssl_proj_dim = 64;
  bool ssl_batchnorm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  MetricToggles metrics;
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
  NetworkConfig network_for(const Dataset& ds) const;
};

// Strict JSON schema: unknown keys are rejected with their full key path, and
// parse -> serialize -> parse is a fixpoint.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

Dataset load_scenario_dataset(const ScenarioConfig& sc);
ScenarioStream build_stream(const ScenarioConfig& sc, const Dataset& ds);

}  // namespace clab
