#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "clab/buffer.hpp"
#include "clab/data.hpp"
#include "clab/model.hpp"
#include "clab/tape.hpp"
#include "clab/tensor.hpp"

namespace clab {

enum class BaseMethod { kSgd, kJoint, kEr, kOewc, kSi };

// Parsed method descriptor: "sgd", "joint", "er", "er+tarc", "oewc",
// "oewc+tarc", "si", "si+tarc", and the ablations "er+agnostic" (two-stage
// schedule without the auxiliary rotation loss) and "er+aux" (rotation loss
// throughout, no task-agnostic stage).
struct MethodSpec {
  BaseMethod base = BaseMethod::kSgd;
  bool two_stage = false;     // has a task-agnostic first stage
  bool aux_rotation = false;  // rotation prediction in the supervised stage

  static MethodSpec parse(const std::string& descriptor);
  std::string canonical() const;
  bool uses_buffer() const { return base == BaseMethod::kEr; }
  bool regularized() const {
    return base == BaseMethod::kOewc || base == BaseMethod::kSi;
  }
};

struct TrainConfig {
  std::size_t budget_epochs = 5;  // per task
  double gamma = 0.9;             // task-agnostic share of the step budget
  double alpha = 1.0;
  double beta = 1.0;
  double learning_rate = 3e-4;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 200;  // 0 disables replay
  double tau = 0.07;
  std::string optimizer = "adam";  // or "sgd"
  double ewc_lambda = 10.0;
  double ewc_decay = 0.9;
  double si_c = 0.5;
  double si_xi = 1.0;
  bool augment = true;
  bool allow_flip = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Bias-corrected adaptive-moment update on one tensor; t is the post-update
// step count (1 on the first call).
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Owns per-parameter optimizer state keyed by parameter name. Parameters
// outside the active group set (or absent from the gradient map) keep both
// their values and their optimizer state bit-identical.
class Optimizer {
 public:
  enum class Kind { kAdam, kSgd };
  static Kind kind_from_name(const std::string& name);

  Optimizer(Kind kind, double lr);

  void step(MultiHeadNet& net, const std::map<std::string, Tensor>& grads,
            const std::set<ParamGroup>& active_groups);

 private:
  struct Slot {
    Tensor m, v;
    long t = 0;
  };
  Kind kind_;
  double lr_;
  std::map<std::string, Slot> slots_;
};

// Importance-weighted quadratic anchor state, flattened in parameters() order.
struct RegularizerState {
  std::vector<double> anchors;     // theta*
  std::vector<double> importance;  // Fisher diagonal (oewc) or Omega (si)
  std::vector<double> omega;       // si per-task path integral
  std::vector<double> task_start;  // theta at task start (si)
  bool initialized = false;

  void init(const MultiHeadNet& net);
};

// Gradient map flattened in parameters() order; absent names contribute zeros.
std::vector<double> flatten_grads(MultiHeadNet& net,
                                  const std::map<std::string, Tensor>& grads);

// coefficient * sum(importance * (param - anchor)^2), as a tape node.
NodeId quadratic_penalty_node(Tape& t, NodeId param, const Tensor& anchor,
                              const Tensor& importance, double coefficient);

// Penalty over the supervised parameter groups (backbone, cls, rot):
// (lambda/2)*sum F(theta-theta*)^2 for oewc, c*sum Omega(theta-theta*)^2 for si.
NodeId regularizer_penalty(Tape& t, NetBinding& binding, MultiHeadNet& net,
                           const RegularizerState& state, BaseMethod kind,
                           const TrainConfig& cfg);

// Fisher refresh at a task boundary: importance <- decay*importance + mean of
// per-sample squared classification gradients; anchors move to the current
// parameters.
void oewc_end_task(RegularizerState& state, MultiHeadNet& net, const Dataset& ds,
                   const TaskSpec& task, const TrainConfig& cfg);

// Path-integral bookkeeping: omega_k += -grad_k * (after - before)_k.
void si_accumulate(RegularizerState& state, const std::vector<double>& params_before,
                   const std::vector<double>& params_after,
                   const std::vector<double>& grads);

// Omega_k += max(omega_k, 0) / ((theta_end - theta_start)_k^2 + xi); omega
// resets and anchors move.
void si_end_task(RegularizerState& state, MultiHeadNet& net, const TrainConfig& cfg);

struct ImageBatch {
  std::vector<Tensor> images;  // materialized task views, pre-augmentation
  std::vector<std::size_t> labels;
};

// One Eq.-2 step: classification loss on the current batch plus an equally
// sized replay batch, optimizer step, then reservoir insertion.
double er_step(MultiHeadNet& net, Optimizer& opt, const ImageBatch& current,
               ReplayBuffer* buffer, const TrainConfig& cfg, std::size_t task_id,
               std::size_t step_in_task);

struct StepInfo {
  std::size_t task_id = 0;
  std::size_t step_index = 0;  // within the task
  int phase = 2;               // 1 = task-agnostic, 2 = supervised
  double loss = 0.0;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TaskStats {
  std::size_t phase1_steps = 0;
  std::size_t phase2_steps = 0;
  std::vector<double> losses;  // one per optimizer step
};

std::size_t phase1_step_count(std::size_t total_steps, double gamma);

// Two-stage schedule for one task: floor(gamma*S) contrastive steps updating
// backbone+ssl with the buffer read-only, then supervised steps updating
// backbone+cls+rot with reservoir insertion (er base only).
TaskStats tarc_train_task(MultiHeadNet& net, Optimizer& opt, const Dataset& ds,
                          const TaskSpec& task, ReplayBuffer* buffer,
                          RegularizerState* reg, const MethodSpec& method,
                          const TrainConfig& cfg,
                          const StepObserver& observer = nullptr);

// Flattened, task-rotated inputs for a list of sample indices.
Tensor materialize_inputs(const Dataset& ds, const TaskSpec& task,
                          const std::vector<std::size_t>& indices);

double evaluate_task(const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task);

struct RunResult {
  std::vector<std::vector<double>> acc_matrix;  // T x T (1 x T for joint)
  std::vector<double> random_baseline;          // accuracy of the fresh net
  std::vector<TaskStats> task_stats;
  MultiHeadNet net;
  std::unique_ptr<ReplayBuffer> buffer;  // null when the method has none
};

RunResult run_experiment(const MethodSpec& method, const Dataset& ds,
                         const ScenarioStream& stream, const NetworkConfig& net_cfg,
                         const TrainConfig& cfg,
                         const StepObserver& observer = nullptr);

}  // namespace clab
