#include "clab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "clab/losses.hpp"
#include "clab/rng.hpp"
#include "clab/tape.hpp"

namespace clab {

namespace {

constexpr std::uint64_t kTagFlat = 0x464c54u;
constexpr std::uint64_t kTagNoise = 0x4e4f49u;
constexpr std::uint64_t kTagHead = 0x484541u;
constexpr std::uint64_t kTagOrder = 0x4f5244u;

constexpr std::size_t kProbeEpochs = 20;

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols(); ++c) {
    if (m.at(row, c) > m.at(row, best)) best = c;
  }
  return best;
}

void check_square(const AccuracyMatrix& m, const char* op) {
  m.validate();
  if (m.tasks() < 2) {
    throw std::invalid_argument(std::string(op) + ": needs at least two tasks");
  }
  if (m.rows.size() != m.tasks()) {
    throw std::invalid_argument(std::string(op) + ": needs one row per task");
  }
}

}  // namespace

void AccuracyMatrix::validate() const {
  if (random_baseline.empty()) {
    throw std::invalid_argument("accuracy matrix: empty baseline");
  }
  if (rows.empty()) throw std::invalid_argument("accuracy matrix: no rows");
  for (const auto& row : rows) {
    if (row.size() != random_baseline.size()) {
      throw std::invalid_argument("accuracy matrix: ragged row");
    }
    for (double a : row) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw std::invalid_argument("accuracy matrix: entry outside [0,1]");
      }
    }
  }
  for (double a : random_baseline) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw std::invalid_argument("accuracy matrix: baseline outside [0,1]");
    }
  }
}

double average_accuracy(const AccuracyMatrix& m) {
  m.validate();
  const auto& last = m.rows.back();
  double sum = 0.0;
  for (double a : last) sum += a;
  return sum / double(last.size());
}

double forward_transfer(const AccuracyMatrix& m) {
  check_square(m, "forward_transfer");
  const std::size_t t = m.tasks();
  double sum = 0.0;
  for (std::size_t j = 1; j < t; ++j) {
    sum += m.rows[j - 1][j] - m.random_baseline[j];
  }
  return sum / double(t - 1);
}

double backward_transfer(const AccuracyMatrix& m) {
  check_square(m, "backward_transfer");
  const std::size_t t = m.tasks();
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < t; ++j) {
    double best = m.rows[j][j];
    for (std::size_t i = j; i < t; ++i) best = std::max(best, m.rows[i][j]);
    sum += m.rows[t - 1][j] - best;
  }
  return sum / double(t - 1);
}

std::pair<double, ReliabilityBins> ece(const std::vector<double>& confidences,
                                       const std::vector<bool>& correct,
                                       std::size_t n_bins) {
  if (n_bins == 0) throw std::invalid_argument("ece: n_bins must be >= 1");
  if (confidences.size() != correct.size()) {
    throw std::invalid_argument("ece: confidence/flag length mismatch");
  }
  if (confidences.empty()) throw std::invalid_argument("ece: empty prediction set");

  ReliabilityBins bins;
  bins.n_bins = n_bins;
  bins.counts.assign(n_bins, 0);
  bins.mean_confidence.assign(n_bins, 0.0);
  bins.mean_accuracy.assign(n_bins, 0.0);

  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c > 0.0 && c <= 1.0)) {
      throw std::invalid_argument("ece: confidence outside (0,1]");
    }
    // bins are left-open: bin b covers (b/n, (b+1)/n]
    std::size_t b = n_bins - 1;
    for (std::size_t k = 0; k < n_bins; ++k) {
      if (c <= double(k + 1) / double(n_bins)) {
        b = k;
        break;
      }
    }
    bins.counts[b] += 1;
    bins.mean_confidence[b] += c;
    bins.mean_accuracy[b] += correct[i] ? 1.0 : 0.0;
  }

  const double n = double(confidences.size());
  double value = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins.counts[b] == 0) continue;
    bins.mean_confidence[b] /= double(bins.counts[b]);
    bins.mean_accuracy[b] /= double(bins.counts[b]);
    value += double(bins.counts[b]) / n *
             std::fabs(bins.mean_accuracy[b] - bins.mean_confidence[b]);
  }
  return {value, bins};
}

Tensor softmax_probabilities(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_probabilities: logits must be rank 2");
  }
  Tensor out = Tensor::zeros(logits.shape);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double peak = logits.at(r, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) peak = std::max(peak, logits.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      out.at(r, c) = std::exp(logits.at(r, c) - peak);
      total += out.at(r, c);
    }
    for (std::size_t c = 0; c < logits.cols(); ++c) out.at(r, c) /= total;
  }
  return out;
}

void prediction_stats(const MultiHeadNet& net, const Dataset& ds,
                      const TaskSpec& task, std::vector<double>& confidences,
                      std::vector<bool>& correct) {
  const Tensor probs = softmax_probabilities(
      net.class_logits(materialize_inputs(ds, task, task.test_indices)));
  confidences.clear();
  correct.clear();
  for (std::size_t r = 0; r < task.test_indices.size(); ++r) {
    const std::size_t pred = argmax_row(probs, r);
    confidences.push_back(probs.at(r, pred));
    correct.push_back(pred == ds.samples[task.test_indices[r]].label);
  }
}

CorruptionScores corruption_scores(
    const std::map<CorruptionKind, std::vector<double>>& model_errors,
    const std::map<CorruptionKind, std::vector<double>>& baseline_errors,
    double model_clean_error, double baseline_clean_error) {
  if (model_errors.empty()) {
    throw std::invalid_argument("corruption_scores: empty error table");
  }
  if (model_errors.size() != baseline_errors.size()) {
    throw std::invalid_argument("corruption_scores: kind sets differ");
  }

  CorruptionScores scores;
  double ce_sum = 0.0;
  double rel_sum = 0.0;
  for (const auto& [kind, errors] : model_errors) {
    const auto it = baseline_errors.find(kind);
    if (it == baseline_errors.end()) {
      throw std::invalid_argument("corruption_scores: kind sets differ");
    }
    const auto& base = it->second;
    if (errors.empty() || errors.size() != base.size()) {
      throw std::invalid_argument("corruption_scores: severity counts differ");
    }

    double num = 0.0, den = 0.0, rel_num = 0.0, rel_den = 0.0;
    for (std::size_t s = 0; s < errors.size(); ++s) {
      num += errors[s];
      den += base[s];
      rel_num += errors[s] - model_clean_error;
      rel_den += base[s] - baseline_clean_error;
    }
    if (den == 0.0) throw std::domain_error("corruption_scores: baseline error sum is zero");
    if (rel_den == 0.0) {
      throw std::domain_error("corruption_scores: baseline relative error sum is zero");
    }
    const double ce = num / den;
    const double rel = rel_num / rel_den;
    scores.corruption_error[kind] = ce;
    scores.relative_corruption_error[kind] = rel;
    ce_sum += ce;
    rel_sum += rel;
  }
  scores.mce = 100.0 * ce_sum / double(model_errors.size());
  scores.relative_mce = 100.0 * rel_sum / double(model_errors.size());
  return scores;
}

std::map<CorruptionKind, std::vector<double>> corruption_error_table(
    const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task,
    std::uint64_t seed) {
  if (task.test_indices.empty()) {
    throw std::invalid_argument("corruption_error_table: empty test split");
  }
  const std::size_t dim = ds.image_rows() * ds.image_cols();
  std::map<CorruptionKind, std::vector<double>> table;
  for (CorruptionKind kind : all_corruption_kinds()) {
    std::vector<double> errors;
    for (int severity = 1; severity <= 5; ++severity) {
      Tensor x = Tensor::zeros({task.test_indices.size(), dim});
      for (std::size_t r = 0; r < task.test_indices.size(); ++r) {
        const std::size_t idx = task.test_indices[r];
        const Tensor img =
            corrupt(task_image(ds, task, idx), kind, severity, mix_seed(seed, idx));
        for (std::size_t p = 0; p < dim; ++p) x.at(r, p) = img.data[p];
      }
      const Tensor logits = net.class_logits(x);
      std::size_t hits = 0;
      for (std::size_t r = 0; r < task.test_indices.size(); ++r) {
        if (argmax_row(logits, r) == ds.samples[task.test_indices[r]].label) ++hits;
      }
      errors.push_back(1.0 - double(hits) / double(task.test_indices.size()));
    }
    table[kind] = std::move(errors);
  }
  return table;
}

double clean_error(const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task) {
  return 1.0 - evaluate_task(net, ds, task);
}

std::vector<double> task_bias(const Tensor& softmax_probs,
                              const std::vector<std::size_t>& class_to_task) {
  if (softmax_probs.rank() != 2) {
    throw std::invalid_argument("task_bias: probabilities must be rank 2");
  }
  if (class_to_task.size() != softmax_probs.cols()) {
    throw std::invalid_argument("task_bias: class map does not cover the classes");
  }
  if (softmax_probs.rows() == 0) {
    throw std::invalid_argument("task_bias: empty prediction set");
  }

  std::size_t n_tasks = 0;
  for (std::size_t t : class_to_task) n_tasks = std::max(n_tasks, t + 1);

  std::vector<double> mass(n_tasks, 0.0);
  for (std::size_t r = 0; r < softmax_probs.rows(); ++r) {
    for (std::size_t c = 0; c < softmax_probs.cols(); ++c) {
      const double p = softmax_probs.at(r, c);
      if (p < 0.0) throw std::invalid_argument("task_bias: negative probability");
      mass[class_to_task[c]] += p;
    }
  }
  for (double& m : mass) m /= double(softmax_probs.rows());

  double total = 0.0;
  for (double m : mass) total += m;
  if (total <= 0.0) throw std::domain_error("task_bias: zero probability mass");
  for (double& m : mass) m /= total;
  return mass;
}

double mean_eval_accuracy(const MultiHeadNet& net, const Dataset& ds,
                          const std::vector<TaskSpec>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("mean_eval_accuracy: no tasks");
  double sum = 0.0;
  for (const TaskSpec& task : tasks) sum += evaluate_task(net, ds, task);
  return sum / double(tasks.size());
}

std::vector<FlatnessPoint> flat_minima_probe(const MultiHeadNet& net,
                                             const Dataset& ds,
                                             const std::vector<TaskSpec>& tasks,
                                             const std::vector<double>& sigma_grid,
                                             std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("flat_minima_probe: trials must be >= 1");
  for (double s : sigma_grid) {
    if (s < 0.0) throw std::invalid_argument("flat_minima_probe: sigma must be >= 0");
  }

  MultiHeadNet work = net;
  const std::vector<double> base = work.flat_params();
  const double base_accuracy = mean_eval_accuracy(work, ds, tasks);

  std::vector<FlatnessPoint> curve;
  curve.reserve(sigma_grid.size());
  for (std::size_t si = 0; si < sigma_grid.size(); ++si) {
    const double sigma = sigma_grid[si];
    if (sigma == 0.0) {
      curve.push_back({0.0, base_accuracy});
      continue;
    }
    double sum = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      Rng rng(mix_seed(seed, kTagFlat, si, trial));
      std::vector<double> noisy(base.size());
      for (std::size_t k = 0; k < base.size(); ++k) {
        noisy[k] = base[k] + sigma * rng.normal();
      }
      work.set_flat_params(noisy);
      sum += mean_eval_accuracy(work, ds, tasks);
    }
    work.set_flat_params(base);
    curve.push_back({sigma, sum / double(trials)});
  }
  return curve;
}

std::vector<NoisyLabelPoint> noisy_label_probe(const MultiHeadNet& net,
                                               const Dataset& ds,
                                               const std::vector<double>& rates,
                                               const TrainConfig& cfg) {
  cfg.validate();
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw std::invalid_argument("noisy_label_probe: rate outside [0,1]");
    }
  }

  const auto probe_stream = build_class_il(ds, ds.num_classes);
  const TaskSpec& split = probe_stream.tasks[0];
  const Tensor f_train = net.features(materialize_inputs(ds, split, split.train_indices));
  const Tensor f_test = net.features(materialize_inputs(ds, split, split.test_indices));
  const std::size_t feat = f_train.cols();
  const std::size_t classes = ds.num_classes;
  const bool adam = cfg.optimizer == "adam";

  std::vector<NoisyLabelPoint> curve;
  curve.reserve(rates.size());
  for (std::size_t ri = 0; ri < rates.size(); ++ri) {
    const Dataset noisy =
        inject_label_noise(ds, rates[ri], mix_seed(cfg.seed, kTagNoise, ri));

    Rng init(mix_seed(cfg.seed, kTagHead, ri));
    const double bound = 1.0 / std::sqrt(double(feat));
    Tensor w = Tensor::zeros({feat, classes});
    for (double& v : w.data) v = init.uniform(-bound, bound);
    Tensor b = Tensor::zeros({classes});
    Tensor mw = Tensor::zeros(w.shape), vw = Tensor::zeros(w.shape);
    Tensor mb = Tensor::zeros(b.shape), vb = Tensor::zeros(b.shape);
    long step = 0;

    for (std::size_t epoch = 0; epoch < kProbeEpochs; ++epoch) {
      std::vector<std::size_t> order(split.train_indices.size());
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng(mix_seed(cfg.seed, kTagOrder, ri, epoch));
      shuffle_rng.shuffle(order);

      for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), i + cfg.batch_size);
        Tensor fb = Tensor::zeros({end - i, feat});
        std::vector<std::size_t> yb;
        for (std::size_t n = i; n < end; ++n) {
          for (std::size_t p = 0; p < feat; ++p) fb.at(n - i, p) = f_train.at(order[n], p);
          yb.push_back(noisy.samples[split.train_indices[order[n]]].label);
        }
        Tape t;
        NodeId logits = t.add_row(t.matmul(t.input("f", fb), t.param("w", w)),
                                  t.param("b", b));
        const auto grads = t.backward(cross_entropy_node(t, logits, yb));
        ++step;
        if (adam) {
          adam_step(w, grads.at("w"), mw, vw, step, cfg.learning_rate);
          adam_step(b, grads.at("b"), mb, vb, step, cfg.learning_rate);
        } else {
          for (std::size_t k = 0; k < w.numel(); ++k) {
            w.data[k] -= cfg.learning_rate * grads.at("w").data[k];
          }
          for (std::size_t k = 0; k < b.numel(); ++k) {
            b.data[k] -= cfg.learning_rate * grads.at("b").data[k];
          }
        }
      }
    }

    Tensor logits = matmul(f_test, w);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) logits.at(r, c) += b.data[c];
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < split.test_indices.size(); ++r) {
      if (argmax_row(logits, r) == ds.samples[split.test_indices[r]].label) ++hits;
    }
    curve.push_back({rates[ri], double(hits) / double(split.test_indices.size())});
  }
  return curve;
}

}  // namespace clab
