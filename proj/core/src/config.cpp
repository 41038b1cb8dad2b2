#include "clab/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace clab {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad_value(const std::string& path, const char* what) {
  throw std::invalid_argument("config: " + path + " " + what);
}

void check_keys(const json& j, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad_value(prefix.empty() ? "root" : prefix, "must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) {
      std::string path = prefix.empty() ? item.key() : prefix + "." + item.key();
      throw std::invalid_argument("config: unknown key '" + path + "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const std::string& prefix, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  std::string path = prefix.empty() ? key : prefix + "." + key;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    bad_value(path, "has the wrong type");
  }
}

ScenarioConfig parse_scenario(const json& j) {
  check_keys(j, "scenario",
             {"kind", "dataset", "num_classes", "per_class", "image_size",
              "classes_per_task", "n_tasks", "rounds", "seed"});
  ScenarioConfig sc;
  read_field(j, "scenario", "kind", sc.kind);
  read_field(j, "scenario", "dataset", sc.dataset);
  read_field(j, "scenario", "num_classes", sc.num_classes);
  read_field(j, "scenario", "per_class", sc.per_class);
  read_field(j, "scenario", "image_size", sc.image_size);
  read_field(j, "scenario", "classes_per_task", sc.classes_per_task);
  read_field(j, "scenario", "n_tasks", sc.n_tasks);
  read_field(j, "scenario", "rounds", sc.rounds);
  read_field(j, "scenario", "seed", sc.seed);
  return sc;
}

TrainConfig parse_train(const json& j) {
  check_keys(j, "train",
             {"budget_epochs", "gamma", "alpha", "beta", "learning_rate",
              "batch_size", "buffer_capacity", "tau", "optimizer", "ewc_lambda",
              "ewc_decay", "si_c", "si_xi", "augment", "allow_flip"});
  TrainConfig tc;
  read_field(j, "train", "budget_epochs", tc.budget_epochs);
  read_field(j, "train", "gamma", tc.gamma);
  read_field(j, "train", "alpha", tc.alpha);
  read_field(j, "train", "beta", tc.beta);
  read_field(j, "train", "learning_rate", tc.learning_rate);
  read_field(j, "train", "batch_size", tc.batch_size);
  read_field(j, "train", "buffer_capacity", tc.buffer_capacity);
  read_field(j, "train", "tau", tc.tau);
  read_field(j, "train", "optimizer", tc.optimizer);
  read_field(j, "train", "ewc_lambda", tc.ewc_lambda);
  read_field(j, "train", "ewc_decay", tc.ewc_decay);
  read_field(j, "train", "si_c", tc.si_c);
  read_field(j, "train", "si_xi", tc.si_xi);
  read_field(j, "train", "augment", tc.augment);
  read_field(j, "train", "allow_flip", tc.allow_flip);
  return tc;
}

MetricToggles parse_metrics(const json& j) {
  check_keys(j, "metrics",
             {"transfer", "ece", "corruption", "flatness", "bias", "noisy_label"});
  MetricToggles m;
  read_field(j, "metrics", "transfer", m.transfer);
  read_field(j, "metrics", "ece", m.ece);
  read_field(j, "metrics", "corruption", m.corruption);
  read_field(j, "metrics", "flatness", m.flatness);
  read_field(j, "metrics", "bias", m.bias);
  read_field(j, "metrics", "noisy_label", m.noisy_label);
  return m;
}

}  // namespace

void ScenarioConfig::validate() const {
  scenario();  // rejects unknown kinds
  if (dataset.empty()) bad_value("scenario.dataset", "must not be empty");
  if (dataset == "synthetic") {
    if (num_classes < 2) bad_value("scenario.num_classes", "must be >= 2");
    if (per_class < 6) bad_value("scenario.per_class", "must be >= 6 (one sixth is held out)");
    if (image_size < 4) bad_value("scenario.image_size", "must be >= 4");
  }
  if (kind == "class_il" && classes_per_task == 0)
    bad_value("scenario.classes_per_task", "must be >= 1");
  if (kind == "domain_il" && n_tasks == 0)
    bad_value("scenario.n_tasks", "must be >= 1");
  if (kind == "general_il" && rounds == 0)
    bad_value("scenario.rounds", "must be >= 1");
}

Scenario ScenarioConfig::scenario() const {
  if (kind == "class_il") return Scenario::kClassIl;
  if (kind == "domain_il") return Scenario::kDomainIl;
  if (kind == "general_il") return Scenario::kGeneralIl;
  throw std::invalid_argument("config: scenario.kind unknown value '" + kind + "'");
}

void ExperimentConfig::validate() const {
  scenario.validate();
  if (methods.empty()) bad_value("methods", "must list at least one method");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    MethodSpec::parse(methods[i]);
    for (std::size_t k = 0; k < i; ++k)
      if (methods[k] == methods[i])
        throw std::invalid_argument("config: methods lists '" + methods[i] +
                                    "' twice");
  }
  train.validate();
  if (hidden_dims.empty()) bad_value("hidden_dims", "must not be empty");
  for (std::size_t h : hidden_dims)
    if (h == 0) bad_value("hidden_dims", "entries must be >= 1");
  if (ssl_proj_dim == 0) bad_value("ssl_proj_dim", "must be >= 1");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
    bad_value("bn_momentum", "must lie in [0, 1)");
  if (!(bn_eps > 0.0)) bad_value("bn_eps", "must be > 0");
  if (seeds.empty()) bad_value("seeds", "must list at least one seed");
  if (metrics.corruption &&
      std::find(methods.begin(), methods.end(), "er") == methods.end())
    bad_value("metrics.corruption", "needs method \"er\" as the score baseline");
  if (metrics.bias && scenario.kind != "class_il")
    bad_value("metrics.bias", "is only defined for class_il streams");
}

NetworkConfig ExperimentConfig::network_for(const Dataset& ds) const {
  NetworkConfig net;
  net.input_dim = ds.image_rows() * ds.image_cols();
  net.hidden_dims = hidden_dims;
  net.num_classes = ds.num_classes;
  net.ssl_proj_dim = ssl_proj_dim;
  net.ssl_batchnorm = ssl_batchnorm;
  net.bn_momentum = bn_momentum;
  net.bn_eps = bn_eps;
  net.validate();
  return net;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid json: ") + e.what());
  }
  check_keys(j, "",
             {"scenario", "method", "methods", "train", "network", "metrics",
              "output_dir", "seeds"});

  ExperimentConfig cfg;
  if (j.contains("scenario")) cfg.scenario = parse_scenario(j.at("scenario"));
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("metrics")) cfg.metrics = parse_metrics(j.at("metrics"));

  if (j.contains("method") && j.contains("methods"))
    throw std::invalid_argument("config: give either 'method' or 'methods', not both");
  if (j.contains("method")) {
    std::string one;
    read_field(j, "", "method", one);
    cfg.methods = {one};
  }
  read_field(j, "", "methods", cfg.methods);

  if (j.contains("network")) {
    const json& n = j.at("network");
    check_keys(n, "network",
               {"hidden_dims", "ssl_proj_dim", "ssl_batchnorm", "bn_momentum",
                "bn_eps"});
    read_field(n, "network", "hidden_dims", cfg.hidden_dims);
    read_field(n, "network", "ssl_proj_dim", cfg.ssl_proj_dim);
    read_field(n, "network", "ssl_batchnorm", cfg.ssl_batchnorm);
    read_field(n, "network", "bn_momentum", cfg.bn_momentum);
    read_field(n, "network", "bn_eps", cfg.bn_eps);
  }
  read_field(j, "", "output_dir", cfg.output_dir);
  read_field(j, "", "seeds", cfg.seeds);

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  ordered_json j;
  j["scenario"] = {{"kind", cfg.scenario.kind},
                   {"dataset", cfg.scenario.dataset},
                   {"num_classes", cfg.scenario.num_classes},
                   {"per_class", cfg.scenario.per_class},
                   {"image_size", cfg.scenario.image_size},
                   {"classes_per_task", cfg.scenario.classes_per_task},
                   {"n_tasks", cfg.scenario.n_tasks},
                   {"rounds", cfg.scenario.rounds},
                   {"seed", cfg.scenario.seed}};
  j["methods"] = cfg.methods;
  j["train"] = {{"budget_epochs", cfg.train.budget_epochs},
                {"gamma", cfg.train.gamma},
                {"alpha", cfg.train.alpha},
                {"beta", cfg.train.beta},
                {"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"buffer_capacity", cfg.train.buffer_capacity},
                {"tau", cfg.train.tau},
                {"optimizer", cfg.train.optimizer},
                {"ewc_lambda", cfg.train.ewc_lambda},
                {"ewc_decay", cfg.train.ewc_decay},
                {"si_c", cfg.train.si_c},
                {"si_xi", cfg.train.si_xi},
                {"augment", cfg.train.augment},
                {"allow_flip", cfg.train.allow_flip}};
  j["network"] = {{"hidden_dims", cfg.hidden_dims},
                  {"ssl_proj_dim", cfg.ssl_proj_dim},
                  {"ssl_batchnorm", cfg.ssl_batchnorm},
                  {"bn_momentum", cfg.bn_momentum},
                  {"bn_eps", cfg.bn_eps}};
  j["metrics"] = {{"transfer", cfg.metrics.transfer},
                  {"ece", cfg.metrics.ece},
                  {"corruption", cfg.metrics.corruption},
                  {"flatness", cfg.metrics.flatness},
                  {"bias", cfg.metrics.bias},
                  {"noisy_label", cfg.metrics.noisy_label}};
  j["output_dir"] = cfg.output_dir;
  j["seeds"] = cfg.seeds;
  return j.dump(2);
}

Dataset load_scenario_dataset(const ScenarioConfig& sc) {
  sc.validate();
  if (sc.dataset == "synthetic")
    return synthetic_digits(sc.num_classes, sc.per_class, sc.image_size, sc.seed);
  std::filesystem::path dir(sc.dataset);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("CLAB_DATA_DIR")) dir = std::filesystem::path(root) / dir;
  }
  return load_idx((dir / "images.idx").string(), (dir / "labels.idx").string());
}

ScenarioStream build_stream(const ScenarioConfig& sc, const Dataset& ds) {
  switch (sc.scenario()) {
    case Scenario::kClassIl:
      return build_class_il(ds, sc.classes_per_task);
    case Scenario::kDomainIl:
      return build_rotated_domain_il(ds, sc.n_tasks, sc.seed);
    case Scenario::kGeneralIl:
      return build_general_il(ds, sc.rounds);
  }
  throw std::logic_error("config: unreachable scenario kind");
}

}  // namespace clab
