#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "clab/data.hpp"
#include "clab/model.hpp"
#include "clab/trainers.hpp"

namespace clab {

// Row i holds per-task test accuracy measured after finishing task i.
// random_baseline holds the same evaluation for the freshly initialized net.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<double> random_baseline;

  std::size_t tasks() const { return random_baseline.size(); }
  void validate() const;
};

// Mean accuracy over the final row.
double average_accuracy(const AccuracyMatrix& m);

// Mean gain of pre-training accuracy over the random baseline, tasks 2..T.
// Requires a full T x T matrix with T >= 2.
double forward_transfer(const AccuracyMatrix& m);

// Mean drop of final accuracy below the best accuracy ever recorded for each
// of the first T-1 tasks. Always <= 0.
double backward_transfer(const AccuracyMatrix& m);

struct ReliabilityBins {
  std::size_t n_bins = 15;
  std::vector<std::size_t> counts;
  std::vector<double> mean_confidence;
  std::vector<double> mean_accuracy;
};

// Expected calibration error over equal-width confidence bins of (0, 1].
std::pair<double, ReliabilityBins> ece(const std::vector<double>& confidences,
                                       const std::vector<bool>& correct,
                                       std::size_t n_bins = 15);

// Row-wise stable softmax of a logits matrix.
Tensor softmax_probabilities(const Tensor& logits);

// Max-softmax confidence and hit flag for every sample of a task's test split.
void prediction_stats(const MultiHeadNet& net, const Dataset& ds,
                      const TaskSpec& task, std::vector<double>& confidences,
                      std::vector<bool>& correct);

struct CorruptionScores {
  std::map<CorruptionKind, double> corruption_error;
  std::map<CorruptionKind, double> relative_corruption_error;
  double mce = 0.0;
  double relative_mce = 0.0;
};

// Severity-summed error ratios against a baseline model. The relative variant
// measures degradation beyond each model's own clean error.
CorruptionScores corruption_scores(
    const std::map<CorruptionKind, std::vector<double>>& model_errors,
    const std::map<CorruptionKind, std::vector<double>>& baseline_errors,
    double model_clean_error, double baseline_clean_error);

// Classification error per corruption kind and severity on a task test split.
std::map<CorruptionKind, std::vector<double>> corruption_error_table(
    const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task,
    std::uint64_t seed);

double clean_error(const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task);

// Mean softmax mass per task over a prediction set, renormalized to sum 1.
// class_to_task[c] names the task owning class c.
std::vector<double> task_bias(const Tensor& softmax_probs,
                              const std::vector<std::size_t>& class_to_task);

double mean_eval_accuracy(const MultiHeadNet& net, const Dataset& ds,
                          const std::vector<TaskSpec>& tasks);

struct FlatnessPoint {
  double sigma = 0.0;
  double mean_accuracy = 0.0;
};

// Accuracy under elementwise Gaussian parameter noise, averaged over trials.
// The probe works on a copy; the passed network is never modified. sigma = 0
// reports the unperturbed accuracy exactly.
std::vector<FlatnessPoint> flat_minima_probe(const MultiHeadNet& net,
                                             const Dataset& ds,
                                             const std::vector<TaskSpec>& tasks,
                                             const std::vector<double>& sigma_grid,
                                             std::size_t trials, std::uint64_t seed);

struct NoisyLabelPoint {
  double rate = 0.0;
  double accuracy = 0.0;
};

// Trains a fresh linear head on frozen backbone features under label noise and
// reports clean-test accuracy per rate. Uses the canonical per-class split of
// the dataset; the head trains for a fixed 20 epochs with the configured
// optimizer settings.
std::vector<NoisyLabelPoint> noisy_label_probe(const MultiHeadNet& net,
                                               const Dataset& ds,
                                               const std::vector<double>& rates,
                                               const TrainConfig& cfg);

}  // namespace clab
