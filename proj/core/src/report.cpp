#include "clab/report.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "clab/metrics.hpp"

namespace clab {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<double> kSigmaGrid{0.0, 0.01, 0.05, 0.1, 0.5, 1.0};
constexpr std::size_t kFlatnessTrials = 3;
const std::vector<double> kNoiseRates{0.0, 0.2, 0.4, 0.6, 0.8};

// Shortest round-trip decimal form, identical to the JSON encoding, so every
// CSV cell re-parses to the exact double stored in the report.
std::string num(double v) { return json(v).dump(); }

struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;
};

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  for (double x : v) a.mean += x;
  a.mean /= double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stdev = std::sqrt(ss / double(v.size() - 1));
  }
  return a;
}

struct PerRun {
  std::string method;
  std::uint64_t seed = 0;
  ordered_json entry;
  std::map<CorruptionKind, std::vector<double>> errors;
  double clean = 0.0;
};

Tensor stack_rows(const std::vector<Tensor>& parts) {
  std::size_t rows = 0;
  for (const Tensor& p : parts) rows += p.rows();
  Tensor out = Tensor::zeros({rows, parts.front().cols()});
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + long(r * p.cols()));
    r += p.rows();
  }
  return out;
}

}  // namespace

RunOutcome execute(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_scenario_dataset(cfg.scenario);
  const ScenarioStream stream = build_stream(cfg.scenario, ds);
  const NetworkConfig net_cfg = cfg.network_for(ds);

  // Probes evaluate flatness on the training split; reuse the task specs with
  // the test indices swapped out.
  std::vector<TaskSpec> train_clones = stream.tasks;
  for (TaskSpec& t : train_clones) t.test_indices = t.train_indices;

  std::vector<std::size_t> class_to_task(ds.num_classes, 0);
  if (cfg.scenario.kind == "class_il") {
    for (std::size_t t = 0; t < stream.tasks.size(); ++t)
      for (std::size_t c : stream.tasks[t].classes) class_to_task[c] = t;
  }

  // The corruption scores need each seed's plain-ER run as the baseline.
  std::size_t er_index = cfg.methods.size();
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    if (cfg.methods[i] == "er") er_index = i;

  const TaskSpec canonical =
      cfg.metrics.corruption ? build_class_il(ds, ds.num_classes).tasks[0] : TaskSpec{};

  ordered_json runs = ordered_json::array();
  std::ostringstream summary;
  summary << "seed,method,scenario,buffer,avg_acc,fwt,bwt,ece\n";
  std::ostringstream flat_csv, noise_csv, rel_csv, bias_csv, corr_csv;
  flat_csv << "method,seed,sigma,accuracy\n";
  noise_csv << "method,seed,rate,accuracy\n";
  rel_csv << "method,seed,bin,count,mean_confidence,mean_accuracy\n";
  bias_csv << "method,seed,task,mass\n";
  corr_csv << "method,seed,corruption,severity,error\n";

  std::map<std::string, std::vector<double>> avg_by_method, fwt_by_method, bwt_by_method;

  for (std::uint64_t seed : cfg.seeds) {
    std::vector<PerRun> batch;
    for (const std::string& name : cfg.methods) {
      const MethodSpec spec = MethodSpec::parse(name);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      if (spec.regularized()) tc.buffer_capacity = 0;

      const auto t0 = std::chrono::steady_clock::now();
      RunResult res = run_experiment(spec, ds, stream, net_cfg, tc);

      PerRun run;
      run.method = spec.canonical();
      run.seed = seed;
      ordered_json& e = run.entry;
      e["method"] = run.method;
      e["seed"] = seed;
      e["buffer_capacity"] = spec.uses_buffer() ? tc.buffer_capacity : std::size_t{0};
      e["acc_matrix"] = res.acc_matrix;
      e["random_baseline"] = res.random_baseline;
      {
        ordered_json phases = ordered_json::array();
        for (const TaskStats& s : res.task_stats)
          phases.push_back({{"phase1", s.phase1_steps}, {"phase2", s.phase2_steps}});
        e["phase_steps"] = std::move(phases);
      }

      const AccuracyMatrix m{res.acc_matrix, res.random_baseline};
      const double avg = average_accuracy(m);
      e["average_accuracy"] = avg;
      avg_by_method[run.method].push_back(avg);

      const bool square = res.acc_matrix.size() == res.random_baseline.size() &&
                          res.random_baseline.size() >= 2;
      if (cfg.metrics.transfer && square) {
        const double fwt = forward_transfer(m);
        const double bwt = backward_transfer(m);
        e["forward_transfer"] = fwt;
        e["backward_transfer"] = bwt;
        fwt_by_method[run.method].push_back(fwt);
        bwt_by_method[run.method].push_back(bwt);
      } else {
        e["forward_transfer"] = nullptr;
        e["backward_transfer"] = nullptr;
      }

      if (cfg.metrics.ece) {
        std::vector<double> conf_all, conf;
        std::vector<bool> corr_all, corr;
        for (const TaskSpec& task : stream.tasks) {
          prediction_stats(res.net, ds, task, conf, corr);
          conf_all.insert(conf_all.end(), conf.begin(), conf.end());
          corr_all.insert(corr_all.end(), corr.begin(), corr.end());
        }
        const auto [value, bins] = ece(conf_all, corr_all);
        e["ece"] = value;
        e["reliability"] = {{"counts", bins.counts},
                            {"mean_confidence", bins.mean_confidence},
                            {"mean_accuracy", bins.mean_accuracy}};
        for (std::size_t b = 0; b < bins.n_bins; ++b)
          rel_csv << run.method << ',' << seed << ',' << b << ',' << bins.counts[b]
                  << ',' << num(bins.mean_confidence[b]) << ','
                  << num(bins.mean_accuracy[b]) << '\n';
      } else {
        e["ece"] = nullptr;
      }

      if (cfg.metrics.bias) {
        std::vector<Tensor> probs;
        for (const TaskSpec& task : stream.tasks)
          probs.push_back(softmax_probabilities(
              res.net.class_logits(materialize_inputs(ds, task, task.test_indices))));
        const std::vector<double> mass = task_bias(stack_rows(probs), class_to_task);
        e["task_bias"] = mass;
        for (std::size_t t = 0; t < mass.size(); ++t)
          bias_csv << run.method << ',' << seed << ',' << t << ',' << num(mass[t]) << '\n';
      } else {
        e["task_bias"] = nullptr;
      }

      if (cfg.metrics.flatness) {
        const auto curve =
            flat_minima_probe(res.net, ds, train_clones, kSigmaGrid, kFlatnessTrials, seed);
        ordered_json points = ordered_json::array();
        for (const FlatnessPoint& p : curve) {
          points.push_back({{"sigma", p.sigma}, {"accuracy", p.mean_accuracy}});
          flat_csv << run.method << ',' << seed << ',' << num(p.sigma) << ','
                   << num(p.mean_accuracy) << '\n';
        }
        e["flatness"] = std::move(points);
      } else {
        e["flatness"] = nullptr;
      }

      if (cfg.metrics.noisy_label) {
        const auto curve = noisy_label_probe(res.net, ds, kNoiseRates, tc);
        ordered_json points = ordered_json::array();
        for (const NoisyLabelPoint& p : curve) {
          points.push_back({{"rate", p.rate}, {"accuracy", p.accuracy}});
          noise_csv << run.method << ',' << seed << ',' << num(p.rate) << ','
                    << num(p.accuracy) << '\n';
        }
        e["noisy_labels"] = std::move(points);
      } else {
        e["noisy_labels"] = nullptr;
      }

      if (cfg.metrics.corruption) {
        run.errors = corruption_error_table(res.net, ds, canonical, seed);
        run.clean = clean_error(res.net, ds, canonical);
        corr_csv << run.method << ',' << seed << ",clean,0," << num(run.clean) << '\n';
        for (const auto& [kind, errs] : run.errors)
          for (std::size_t s = 0; s < errs.size(); ++s)
            corr_csv << run.method << ',' << seed << ',' << corruption_name(kind)
                     << ',' << (s + 1) << ',' << num(errs[s]) << '\n';
      }

      const std::chrono::duration<double> secs = std::chrono::steady_clock::now() - t0;
      e["wall_clock_seconds"] = secs.count();

      batch.push_back(std::move(run));
    }

    if (cfg.metrics.corruption) {
      const PerRun& base = batch[er_index];
      for (PerRun& run : batch) {
        ordered_json c;
        c["clean_error"] = run.clean;
        ordered_json table;
        for (const auto& [kind, errs] : run.errors) table[corruption_name(kind)] = errs;
        c["errors"] = std::move(table);
        try {
          const CorruptionScores s =
              corruption_scores(run.errors, base.errors, run.clean, base.clean);
          ordered_json ce, rce;
          for (const auto& [kind, v] : s.corruption_error) ce[corruption_name(kind)] = v;
          for (const auto& [kind, v] : s.relative_corruption_error)
            rce[corruption_name(kind)] = v;
          c["corruption_error"] = std::move(ce);
          c["relative_corruption_error"] = std::move(rce);
          c["mce"] = s.mce;
          c["relative_mce"] = s.relative_mce;
        } catch (const std::domain_error&) {
          // a baseline with zero error on some corruption leaves the ratios
          // undefined; keep the raw tables
          c["mce"] = nullptr;
          c["relative_mce"] = nullptr;
        }
        run.entry["corruption"] = std::move(c);
      }
    } else {
      for (PerRun& run : batch) run.entry["corruption"] = nullptr;
    }

    for (PerRun& run : batch) {
      const ordered_json& e = run.entry;
      summary << seed << ',' << run.method << ',' << cfg.scenario.kind << ','
              << e["buffer_capacity"].get<std::size_t>() << ','
              << num(e["average_accuracy"].get<double>()) << ',';
      if (!e["forward_transfer"].is_null()) summary << num(e["forward_transfer"].get<double>());
      summary << ',';
      if (!e["backward_transfer"].is_null()) summary << num(e["backward_transfer"].get<double>());
      summary << ',';
      if (!e["ece"].is_null()) summary << num(e["ece"].get<double>());
      summary << '\n';
      runs.push_back(std::move(run.entry));
    }
  }

  ordered_json aggregates;
  for (const std::string& name : cfg.methods) {
    const std::string method = MethodSpec::parse(name).canonical();
    ordered_json a;
    const Aggregate acc = aggregate(avg_by_method.at(method));
    a["average_accuracy"] = {{"mean", acc.mean}, {"std", acc.stdev}};
    if (fwt_by_method.count(method)) {
      const Aggregate f = aggregate(fwt_by_method.at(method));
      const Aggregate b = aggregate(bwt_by_method.at(method));
      a["forward_transfer"] = {{"mean", f.mean}, {"std", f.stdev}};
      a["backward_transfer"] = {{"mean", b.mean}, {"std", b.stdev}};
    } else {
      a["forward_transfer"] = nullptr;
      a["backward_transfer"] = nullptr;
    }
    aggregates[method] = std::move(a);
  }

  ordered_json root;
  root["format"] = "clab-report";
  root["version"] = "0.1.0";
  root["config"] = ordered_json::parse(serialize_config(cfg));
  root["n_tasks"] = stream.tasks.size();
  root["num_classes"] = ds.num_classes;
  root["runs"] = std::move(runs);
  root["aggregates"] = std::move(aggregates);

  RunOutcome out;
  out.report_json = root.dump(2);
  out.summary_csv = summary.str();
  if (cfg.metrics.flatness) out.plot_csvs["flatness.csv"] = flat_csv.str();
  if (cfg.metrics.noisy_label) out.plot_csvs["noisy_labels.csv"] = noise_csv.str();
  if (cfg.metrics.ece) out.plot_csvs["reliability.csv"] = rel_csv.str();
  if (cfg.metrics.bias) out.plot_csvs["task_bias.csv"] = bias_csv.str();
  if (cfg.metrics.corruption) out.plot_csvs["corruption.csv"] = corr_csv.str();
  return out;
}

std::string write_run_outputs(const RunOutcome& outcome, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto dump = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << text;
    return path;
  };
  const std::string report_path = dump("report.json", outcome.report_json);
  dump("summary.csv", outcome.summary_csv);
  for (const auto& [name, text] : outcome.plot_csvs) dump(name, text);
  return report_path;
}

std::string report_without_wall_clock(const std::string& report_json) {
  ordered_json j = ordered_json::parse(report_json);
  if (j.contains("runs"))
    for (auto& run : j["runs"]) run.erase("wall_clock_seconds");
  return j.dump(2);
}

std::string compare_reports(const std::vector<std::string>& report_texts) {
  if (report_texts.empty())
    throw std::invalid_argument("compare: needs at least one report");

  std::vector<json> reports;
  for (const std::string& text : report_texts) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("compare: not valid json: ") + e.what());
    }
    if (j.value("format", std::string()) != "clab-report")
      throw std::invalid_argument("compare: not a run report");
    reports.push_back(std::move(j));
  }
  const json& scenario = reports.front().at("config").at("scenario");
  for (const json& r : reports)
    if (r.at("config").at("scenario") != scenario)
      throw std::invalid_argument("compare: reports use different scenarios");

  // union of methods, first report's order first
  std::vector<std::string> methods;
  for (const json& r : reports)
    for (const auto& item : r.at("aggregates").items())
      if (std::find(methods.begin(), methods.end(), item.key()) == methods.end())
        methods.push_back(item.key());

  std::ostringstream out;
  out << "# report comparison\n\n";
  out << "scenario: " << scenario.at("kind").get<std::string>() << " ("
      << scenario.at("dataset").get<std::string>() << "), " << reports.size()
      << " report(s)\n";

  const char* metric_keys[] = {"average_accuracy", "forward_transfer",
                               "backward_transfer"};

  // Single-method reports compare head to head even when the methods differ
  // (er vs er+tarc); columns are reports, rows are metrics.
  bool one_each = true;
  for (const json& r : reports) one_each = one_each && r.at("aggregates").size() == 1;
  if (one_each) {
    out << "\n## aggregates\n\n| metric |";
    for (std::size_t i = 0; i < reports.size(); ++i)
      out << " report_" << i << " ("
          << reports[i].at("aggregates").items().begin().key() << ") |";
    for (std::size_t i = 1; i < reports.size(); ++i) out << " delta_" << i << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i + 1 < 2 * reports.size(); ++i) out << "---|";
    out << "\n";
    for (const char* metric : metric_keys) {
      out << "| " << metric << " |";
      std::vector<const json*> cells(reports.size(), nullptr);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const json& agg = reports[i].at("aggregates").items().begin().value();
        if (!agg.at(metric).is_null()) cells[i] = &agg.at(metric);
        if (cells[i])
          out << ' ' << num(cells[i]->at("mean").get<double>()) << " ± "
              << num(cells[i]->at("std").get<double>()) << " |";
        else
          out << " - |";
      }
      for (std::size_t i = 1; i < reports.size(); ++i) {
        if (cells[i] && cells[0])
          out << ' '
              << num(cells[i]->at("mean").get<double>() -
                     cells[0]->at("mean").get<double>())
              << " |";
        else
          out << " - |";
      }
      out << "\n";
    }
    return out.str();
  }

  for (const char* metric : metric_keys) {
    out << "\n## " << metric << "\n\n| method |";
    for (std::size_t i = 0; i < reports.size(); ++i) out << " report_" << i << " |";
    for (std::size_t i = 1; i < reports.size(); ++i) out << " delta_" << i << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i + 1 < 2 * reports.size(); ++i) out << "---|";
    out << "\n";

    for (const std::string& method : methods) {
      out << "| " << method << " |";
      std::vector<const json*> cells(reports.size(), nullptr);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const json& agg = reports[i].at("aggregates");
        if (agg.contains(method) && !agg.at(method).at(metric).is_null())
          cells[i] = &agg.at(method).at(metric);
        if (cells[i])
          out << ' ' << num(cells[i]->at("mean").get<double>()) << " ± "
              << num(cells[i]->at("std").get<double>()) << " |";
        else
          out << " - |";
      }
      for (std::size_t i = 1; i < reports.size(); ++i) {
        if (cells[i] && cells[0])
          out << ' '
              << num(cells[i]->at("mean").get<double>() -
                     cells[0]->at("mean").get<double>())
              << " |";
        else
          out << " - |";
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace clab
