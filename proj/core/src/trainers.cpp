#include "clab/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "clab/losses.hpp"
#include "clab/rng.hpp"

namespace clab {

namespace {

constexpr std::uint64_t kTagShuffle = 0x534846u;
constexpr std::uint64_t kTagAug = 0x414747u;
constexpr std::uint64_t kTagRot = 0x524f54u;
constexpr std::uint64_t kTagReplay = 0x525045u;
constexpr std::uint64_t kTagBuffer = 0x425546u;

// One stamp per (task, step) so every stochastic draw is reproducible and
// method variants sharing a step index draw identical randomness.
constexpr std::size_t kTaskStride = std::size_t{1} << 20;

std::size_t stamp(std::size_t task_id, std::size_t step) {
  return task_id * kTaskStride + step;
}

struct StepEnv {
  MultiHeadNet& net;
  Optimizer& opt;
  ReplayBuffer* buffer;
  RegularizerState* reg;
  const MethodSpec& method;
  const TrainConfig& cfg;
  std::size_t task_id;
};

Tensor flatten_views(const std::vector<Tensor>& views) {
  const std::size_t dim = views.front().numel();
  Tensor x = Tensor::zeros({views.size(), dim});
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t p = 0; p < dim; ++p) x.at(i, p) = views[i].data[p];
  }
  return x;
}

ImageBatch materialize_batch(const Dataset& ds, const TaskSpec& task,
                             const std::vector<std::size_t>& indices) {
  ImageBatch batch;
  batch.images.reserve(indices.size());
  batch.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    batch.images.push_back(task_image(ds, task, idx));
    batch.labels.push_back(ds.samples[idx].label);
  }
  return batch;
}

std::vector<std::vector<std::size_t>> make_plan(const TaskSpec& task,
                                                const TrainConfig& cfg) {
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t epoch = 0; epoch < cfg.budget_epochs; ++epoch) {
    std::vector<std::size_t> order = task.train_indices;
    Rng rng(mix_seed(cfg.seed, kTagShuffle, stamp(task.task_id, epoch)));
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), i + cfg.batch_size);
      plan.emplace_back(order.begin() + long(i), order.begin() + long(end));
    }
  }
  return plan;
}

// Replay items for one step; empty when the method has no buffer to draw on.
ImageBatch draw_replay(const StepEnv& env, std::size_t k, std::size_t step) {
  ImageBatch replay;
  if (!env.method.uses_buffer() || env.buffer == nullptr || env.buffer->empty()) {
    return replay;
  }
  const auto items =
      env.buffer->sample_batch(k, mix_seed(env.cfg.seed, kTagReplay,
                                           stamp(env.task_id, step)));
  for (const ReplayItem& item : items) {
    replay.images.push_back(item.image);
    replay.labels.push_back(item.label);
  }
  return replay;
}

std::vector<Tensor> single_views(const ImageBatch& batch, const StepEnv& env,
                                 std::size_t step, std::size_t slot_offset) {
  std::vector<Tensor> views;
  views.reserve(batch.images.size());
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    if (env.cfg.augment) {
      views.push_back(augment_single(
          batch.images[i],
          mix_seed(env.cfg.seed, kTagAug, stamp(env.task_id, step), slot_offset + i),
          env.cfg.allow_flip));
    } else {
      views.push_back(batch.images[i]);
    }
  }
  return views;
}

double supervised_step(const StepEnv& env, const ImageBatch& current,
                       std::size_t step) {
  const TrainConfig& cfg = env.cfg;
  const std::vector<Tensor> cur_views = single_views(current, env, step, 0);
  const ImageBatch replay = draw_replay(env, current.images.size(), step);
  std::vector<Tensor> rep_views;
  if (!replay.images.empty()) {
    rep_views = single_views(replay, env, step, current.images.size());
  }

  Tape t;
  NetBinding bind(env.net, t);
  NodeId ce_cur = cross_entropy_node(
      t, bind.head_cls(bind.backbone(t.input("x_cur", flatten_views(cur_views)))),
      current.labels);
  NodeId cls_term = ce_cur;
  if (!rep_views.empty()) {
    NodeId ce_rep = cross_entropy_node(
        t, bind.head_cls(bind.backbone(t.input("x_rep", flatten_views(rep_views)))),
        replay.labels);
    cls_term = t.add(ce_cur, ce_rep);
  }

  NodeId loss;
  if (env.method.aux_rotation && cfg.beta > 0.0) {
    // The rotation batch reuses the augmented views of current and replay
    // samples; classification stays on the unrotated views.
    Rng rot_rng(mix_seed(cfg.seed, kTagRot, stamp(env.task_id, step)));
    std::vector<Tensor> rot_views;
    std::vector<std::size_t> rot_labels;
    for (const std::vector<Tensor>* group : {&cur_views, &std::as_const(rep_views)}) {
      for (const Tensor& view : *group) {
        auto [img, label] = rotate90(view, rot_rng.uniform_index(4));
        rot_views.push_back(std::move(img));
        rot_labels.push_back(label);
      }
    }
    NodeId ce_rot = cross_entropy_node(
        t, bind.head_rot(bind.backbone(t.input("x_rot", flatten_views(rot_views)))),
        rot_labels);
    loss = t.add(t.scale(cls_term, cfg.alpha), t.scale(ce_rot, cfg.beta));
  } else {
    loss = t.scale(cls_term, cfg.alpha);
  }

  if (env.method.regularized() && env.reg != nullptr && env.reg->initialized) {
    loss = t.add(loss, regularizer_penalty(t, bind, env.net, *env.reg,
                                           env.method.base, cfg));
  }

  const auto grads = t.backward(loss);
  const bool track_si = env.method.base == BaseMethod::kSi && env.reg != nullptr;
  std::vector<double> before, gflat;
  if (track_si) {
    before = env.net.flat_params();
    gflat = flatten_grads(env.net, grads);
  }
  env.opt.step(env.net, grads,
               {ParamGroup::kBackbone, ParamGroup::kCls, ParamGroup::kRot});
  if (track_si) si_accumulate(*env.reg, before, env.net.flat_params(), gflat);

  if (env.method.uses_buffer() && env.buffer != nullptr) {
    for (std::size_t i = 0; i < current.images.size(); ++i) {
      env.buffer->insert(current.images[i], current.labels[i]);
    }
  }
  return t.value(loss).scalar_value();
}

double contrastive_step(const StepEnv& env, const ImageBatch& current,
                        std::size_t step) {
  const TrainConfig& cfg = env.cfg;
  ImageBatch combined = current;
  const ImageBatch replay = draw_replay(env, current.images.size(), step);
  combined.images.insert(combined.images.end(), replay.images.begin(),
                         replay.images.end());
  combined.labels.insert(combined.labels.end(), replay.labels.begin(),
                         replay.labels.end());

  std::vector<Tensor> views;
  std::vector<std::size_t> labels;
  views.reserve(2 * combined.images.size());
  for (std::size_t i = 0; i < combined.images.size(); ++i) {
    if (cfg.augment) {
      auto [a, b] = augment_pair(
          combined.images[i],
          mix_seed(cfg.seed, kTagAug, stamp(env.task_id, step), i), cfg.allow_flip);
      views.push_back(std::move(a));
      views.push_back(std::move(b));
    } else {
      views.push_back(combined.images[i]);
      views.push_back(combined.images[i]);
    }
    labels.push_back(combined.labels[i]);
    labels.push_back(combined.labels[i]);
  }

  Tape t;
  NetBinding bind(env.net, t);
  NodeId z = bind.head_ssl(bind.backbone(t.input("x", flatten_views(views))), true);
  NodeId loss = supcon_node(t, z, labels, cfg.tau);

  const auto grads = t.backward(loss);
  const bool track_si = env.method.base == BaseMethod::kSi && env.reg != nullptr;
  std::vector<double> before, gflat;
  if (track_si) {
    before = env.net.flat_params();
    gflat = flatten_grads(env.net, grads);
  }
  env.opt.step(env.net, grads, {ParamGroup::kBackbone, ParamGroup::kSsl});
  if (track_si) si_accumulate(*env.reg, before, env.net.flat_params(), gflat);
  return t.value(loss).scalar_value();
}

Tensor slice_as(const std::vector<double>& flat, std::size_t offset,
                const Tensor& like) {
  Tensor out = Tensor::zeros(like.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = flat[offset + i];
  return out;
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& descriptor) {
  MethodSpec spec;
  if (descriptor == "sgd") {
    spec.base = BaseMethod::kSgd;
  } else if (descriptor == "joint") {
    spec.base = BaseMethod::kJoint;
  } else if (descriptor == "er") {
    spec.base = BaseMethod::kEr;
  } else if (descriptor == "er+tarc") {
    spec.base = BaseMethod::kEr;
    spec.two_stage = true;
    spec.aux_rotation = true;
  } else if (descriptor == "er+agnostic") {
    spec.base = BaseMethod::kEr;
    spec.two_stage = true;
  } else if (descriptor == "er+aux") {
    spec.base = BaseMethod::kEr;
    spec.aux_rotation = true;
  } else if (descriptor == "oewc") {
    spec.base = BaseMethod::kOewc;
  } else if (descriptor == "oewc+tarc") {
    spec.base = BaseMethod::kOewc;
    spec.two_stage = true;
    spec.aux_rotation = true;
  } else if (descriptor == "si") {
    spec.base = BaseMethod::kSi;
  } else if (descriptor == "si+tarc") {
    spec.base = BaseMethod::kSi;
    spec.two_stage = true;
    spec.aux_rotation = true;
  } else {
    throw std::invalid_argument("unknown method descriptor '" + descriptor + "'");
  }
  return spec;
}

std::string MethodSpec::canonical() const {
  std::string name;
  switch (base) {
    case BaseMethod::kSgd: name = "sgd"; break;
    case BaseMethod::kJoint: name = "joint"; break;
    case BaseMethod::kEr: name = "er"; break;
    case BaseMethod::kOewc: name = "oewc"; break;
    case BaseMethod::kSi: name = "si"; break;
  }
  if (two_stage && aux_rotation) return name + "+tarc";
  if (two_stage) return name + "+agnostic";
  if (aux_rotation) return name + "+aux";
  return name;
}

void TrainConfig::validate() const {
  if (budget_epochs == 0) throw std::invalid_argument("config: budget_epochs must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("config: gamma must lie strictly inside (0,1)");
  }
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("config: alpha and beta must be non-negative");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
  if (optimizer != "adam" && optimizer != "sgd") {
    throw std::invalid_argument("config: optimizer must be 'adam' or 'sgd'");
  }
  if (ewc_decay < 0.0 || ewc_decay > 1.0) {
    throw std::invalid_argument("config: ewc_decay must lie in [0,1]");
  }
  if (ewc_lambda < 0.0 || si_c < 0.0) {
    throw std::invalid_argument("config: regularizer strengths must be non-negative");
  }
  if (!(si_xi > 0.0)) throw std::invalid_argument("config: si_xi must be positive");
}

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t,
               double lr, double beta1, double beta2, double eps) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (t < 1) throw std::invalid_argument("adam_step: step count must be >= 1");
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * grad.data[i];
    v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * grad.data[i] * grad.data[i];
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

Optimizer::Kind Optimizer::kind_from_name(const std::string& name) {
  if (name == "adam") return Kind::kAdam;
  if (name == "sgd") return Kind::kSgd;
  throw std::invalid_argument("optimizer: unknown kind '" + name + "'");
}

Optimizer::Optimizer(Kind kind, double lr) : kind_(kind), lr_(lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
}

void Optimizer::step(MultiHeadNet& net, const std::map<std::string, Tensor>& grads,
                     const std::set<ParamGroup>& active_groups) {
  for (ParamRef ref : net.parameters()) {
    if (active_groups.count(ref.group) == 0) continue;
    const auto it = grads.find(ref.name);
    if (it == grads.end()) continue;
    if (kind_ == Kind::kSgd) {
      for (std::size_t i = 0; i < ref.tensor->numel(); ++i) {
        ref.tensor->data[i] -= lr_ * it->second.data[i];
      }
      continue;
    }
    Slot& slot = slots_[ref.name];
    if (slot.t == 0) {
      slot.m = Tensor::zeros(ref.tensor->shape);
      slot.v = Tensor::zeros(ref.tensor->shape);
    }
    ++slot.t;
    adam_step(*ref.tensor, it->second, slot.m, slot.v, slot.t, lr_);
  }
}

void RegularizerState::init(const MultiHeadNet& net) {
  anchors = net.flat_params();
  importance.assign(anchors.size(), 0.0);
  omega.assign(anchors.size(), 0.0);
  task_start = anchors;
  initialized = true;
}

std::vector<double> flatten_grads(MultiHeadNet& net,
                                  const std::map<std::string, Tensor>& grads) {
  std::vector<double> flat;
  for (ParamRef ref : net.parameters()) {
    const auto it = grads.find(ref.name);
    if (it == grads.end()) {
      flat.insert(flat.end(), ref.tensor->numel(), 0.0);
    } else {
      flat.insert(flat.end(), it->second.data.begin(), it->second.data.end());
    }
  }
  return flat;
}

NodeId quadratic_penalty_node(Tape& t, NodeId param, const Tensor& anchor,
                              const Tensor& importance, double coefficient) {
  NodeId diff = t.sub(param, t.constant(anchor));
  NodeId weighted = t.mul(t.mul(diff, diff), t.constant(importance));
  return t.scale(t.sum(weighted), coefficient);
}

NodeId regularizer_penalty(Tape& t, NetBinding& binding, MultiHeadNet& net,
                           const RegularizerState& state, BaseMethod kind,
                           const TrainConfig& cfg) {
  if (kind != BaseMethod::kOewc && kind != BaseMethod::kSi) {
    throw std::invalid_argument("regularizer_penalty: kind must be oewc or si");
  }
  const double coeff = kind == BaseMethod::kOewc ? 0.5 * cfg.ewc_lambda : cfg.si_c;
  NodeId total = 0;
  bool have_term = false;
  std::size_t offset = 0;
  for (ParamRef ref : net.parameters()) {
    const std::size_t n = ref.tensor->numel();
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i) any = state.importance[offset + i] != 0.0;
    if (any) {
      NodeId term = quadratic_penalty_node(
          t, binding.param(ref), slice_as(state.anchors, offset, *ref.tensor),
          slice_as(state.importance, offset, *ref.tensor), 1.0);
      total = have_term ? t.add(total, term) : term;
      have_term = true;
    }
    offset += n;
  }
  if (offset != state.importance.size()) {
    throw std::invalid_argument("regularizer_penalty: state does not match the network");
  }
  if (!have_term) return t.constant(Tensor::scalar(0.0));
  return t.scale(total, coeff);
}

void oewc_end_task(RegularizerState& state, MultiHeadNet& net, const Dataset& ds,
                   const TaskSpec& task, const TrainConfig& cfg) {
  if (!state.initialized) state.init(net);
  std::vector<double> f_new(state.importance.size(), 0.0);
  for (std::size_t idx : task.train_indices) {
    Tape t;
    NetBinding bind(net, t);
    Tensor x = materialize_inputs(ds, task, {idx});
    NodeId loss = cross_entropy_node(t, bind.head_cls(bind.backbone(t.input("x", x))),
                                     {ds.samples[idx].label});
    const auto flat = flatten_grads(net, t.backward(loss));
    for (std::size_t k = 0; k < f_new.size(); ++k) f_new[k] += flat[k] * flat[k];
  }
  if (!task.train_indices.empty()) {
    for (double& f : f_new) f /= double(task.train_indices.size());
  }
  for (std::size_t k = 0; k < state.importance.size(); ++k) {
    state.importance[k] = cfg.ewc_decay * state.importance[k] + f_new[k];
  }
  state.anchors = net.flat_params();
}

void si_accumulate(RegularizerState& state, const std::vector<double>& params_before,
                   const std::vector<double>& params_after,
                   const std::vector<double>& grads) {
  if (params_before.size() != state.omega.size() ||
      params_after.size() != state.omega.size() || grads.size() != state.omega.size()) {
    throw std::invalid_argument("si_accumulate: vector sizes do not match the state");
  }
  for (std::size_t k = 0; k < state.omega.size(); ++k) {
    state.omega[k] += -grads[k] * (params_after[k] - params_before[k]);
  }
}

void si_end_task(RegularizerState& state, MultiHeadNet& net, const TrainConfig& cfg) {
  const std::vector<double> end = net.flat_params();
  for (std::size_t k = 0; k < state.importance.size(); ++k) {
    const double delta = end[k] - state.task_start[k];
    state.importance[k] += std::max(state.omega[k], 0.0) / (delta * delta + cfg.si_xi);
  }
  std::fill(state.omega.begin(), state.omega.end(), 0.0);
  state.anchors = end;
  state.task_start = end;
}

double er_step(MultiHeadNet& net, Optimizer& opt, const ImageBatch& current,
               ReplayBuffer* buffer, const TrainConfig& cfg, std::size_t task_id,
               std::size_t step_in_task) {
  static const MethodSpec kPlainEr = MethodSpec::parse("er");
  StepEnv env{net, opt, buffer, nullptr, kPlainEr, cfg, task_id};
  return supervised_step(env, current, step_in_task);
}

std::size_t phase1_step_count(std::size_t total_steps, double gamma) {
  return std::size_t(std::floor(gamma * double(total_steps) + 1e-9));
}

TaskStats tarc_train_task(MultiHeadNet& net, Optimizer& opt, const Dataset& ds,
                          const TaskSpec& task, ReplayBuffer* buffer,
                          RegularizerState* reg, const MethodSpec& method,
                          const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  const auto plan = make_plan(task, cfg);
  const std::size_t total = plan.size();
  // gamma < 1 guarantees at least one supervised step on a non-empty task.
  const std::size_t agnostic =
      method.two_stage && total > 0
          ? std::min(phase1_step_count(total, cfg.gamma), total - 1)
          : 0;

  TaskStats stats;
  stats.phase1_steps = agnostic;
  stats.phase2_steps = total - agnostic;
  stats.losses.reserve(total);

  StepEnv env{net, opt, buffer, reg, method, cfg, task.task_id};
  for (std::size_t step = 0; step < total; ++step) {
    const ImageBatch batch = materialize_batch(ds, task, plan[step]);
    const bool agnostic_phase = step < agnostic;
    const double loss = agnostic_phase ? contrastive_step(env, batch, step)
                                       : supervised_step(env, batch, step);
    stats.losses.push_back(loss);
    if (observer) observer({task.task_id, step, agnostic_phase ? 1 : 2, loss});
  }
  return stats;
}

Tensor materialize_inputs(const Dataset& ds, const TaskSpec& task,
                          const std::vector<std::size_t>& indices) {
  const std::size_t dim = ds.image_rows() * ds.image_cols();
  Tensor x = Tensor::zeros({indices.size(), dim});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Tensor img = task_image(ds, task, indices[r]);
    for (std::size_t p = 0; p < dim; ++p) x.at(r, p) = img.data[p];
  }
  return x;
}

double evaluate_task(const MultiHeadNet& net, const Dataset& ds, const TaskSpec& task) {
  if (task.test_indices.empty()) return 0.0;
  const Tensor logits = net.class_logits(materialize_inputs(ds, task, task.test_indices));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < task.test_indices.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (best == ds.samples[task.test_indices[r]].label) ++hits;
  }
  return double(hits) / double(task.test_indices.size());
}

RunResult run_experiment(const MethodSpec& method, const Dataset& ds,
                         const ScenarioStream& stream, const NetworkConfig& net_cfg,
                         const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  net_cfg.validate();
  if (net_cfg.input_dim != ds.image_rows() * ds.image_cols()) {
    throw std::invalid_argument("run: network input_dim does not match the images");
  }
  if (net_cfg.num_classes != stream.num_classes) {
    throw std::invalid_argument("run: network class count does not match the stream");
  }
  if (method.regularized() && cfg.buffer_capacity != 0) {
    throw std::invalid_argument("run: " + method.canonical() +
                                " trains without replay; set buffer_capacity to 0");
  }

  MultiHeadNet net(net_cfg, cfg.seed);
  std::vector<double> baseline;
  baseline.reserve(stream.tasks.size());
  for (const TaskSpec& task : stream.tasks) {
    baseline.push_back(evaluate_task(net, ds, task));
  }

  Optimizer opt(Optimizer::kind_from_name(cfg.optimizer), cfg.learning_rate);
  std::unique_ptr<ReplayBuffer> buffer;
  if (method.uses_buffer() && cfg.buffer_capacity > 0) {
    buffer = std::make_unique<ReplayBuffer>(cfg.buffer_capacity,
                                            mix_seed(cfg.seed, kTagBuffer));
  }

  std::vector<std::vector<double>> matrix;
  std::vector<TaskStats> all_stats;

  if (method.base == BaseMethod::kJoint) {
    // Union of every task's materialized view, in a canonical order so the
    // result does not depend on how the stream enumerates its tasks.
    std::vector<std::pair<const TaskSpec*, std::size_t>> pool;
    for (const TaskSpec& task : stream.tasks) {
      for (std::size_t idx : task.train_indices) pool.emplace_back(&task, idx);
    }
    std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
      if (a.first->angle != b.first->angle) return a.first->angle < b.first->angle;
      return a.second < b.second;
    });

    StepEnv env{net, opt, nullptr, nullptr, method, cfg, 0};
    TaskStats stats;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.budget_epochs; ++epoch) {
      std::vector<std::size_t> order(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) order[i] = i;
      Rng rng(mix_seed(cfg.seed, kTagShuffle, stamp(0, epoch)));
      rng.shuffle(order);
      for (std::size_t i = 0; i < order.size(); i += cfg.batch_size, ++step) {
        const std::size_t end = std::min(order.size(), i + cfg.batch_size);
        ImageBatch batch;
        for (std::size_t n = i; n < end; ++n) {
          const auto& [task, idx] = pool[order[n]];
          batch.images.push_back(task_image(ds, *task, idx));
          batch.labels.push_back(ds.samples[idx].label);
        }
        const double loss = supervised_step(env, batch, step);
        stats.losses.push_back(loss);
        ++stats.phase2_steps;
        if (observer) observer({0, step, 2, loss});
      }
    }
    all_stats.push_back(std::move(stats));

    std::vector<double> row;
    for (const TaskSpec& task : stream.tasks) row.push_back(evaluate_task(net, ds, task));
    matrix.push_back(std::move(row));
  } else {
    RegularizerState reg;
    if (method.regularized()) reg.init(net);
    for (const TaskSpec& task : stream.tasks) {
      if (method.base == BaseMethod::kSi) reg.task_start = net.flat_params();
      all_stats.push_back(tarc_train_task(net, opt, ds, task, buffer.get(),
                                          method.regularized() ? &reg : nullptr,
                                          method, cfg, observer));
      if (method.base == BaseMethod::kOewc) oewc_end_task(reg, net, ds, task, cfg);
      if (method.base == BaseMethod::kSi) si_end_task(reg, net, cfg);

      std::vector<double> row;
      for (const TaskSpec& other : stream.tasks) {
        row.push_back(evaluate_task(net, ds, other));
      }
      matrix.push_back(std::move(row));
    }
  }

  return RunResult{std::move(matrix), std::move(baseline), std::move(all_stats),
                   std::move(net), std::move(buffer)};
}

}  // namespace clab
