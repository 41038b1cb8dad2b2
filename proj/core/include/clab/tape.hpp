#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "clab/tensor.hpp"

namespace clab {

// Reverse-mode autodiff over a flat list of recorded operations.
//
// Ops evaluate eagerly as they are recorded, so node values are always
// available. forward() re-executes the whole tape against new leaf values
// (used by finite-difference checks); backward() runs one reverse sweep and
// returns gradients keyed by leaf name. All reductions run in a fixed
// sequential row-major order so repeated runs are bit-identical.

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kMatMul,
  kAdd,
  kAddRow,
  kSub,
  kMul,
  kScale,
  kRelu,
  kExp,
  kLog,
  kSumAll,
  kSumAxis,
  kConcat,
  kL2NormalizeRows,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kPick,
  kBatchNorm,
};

struct TapeNode {
  OpKind op = OpKind::kLeaf;
  std::string name;  // non-empty only for named leaves
  std::vector<NodeId> inputs;
  Tensor value;
  Tensor grad;  // sized lazily by backward()
  bool requires_grad = false;

  double scalar = 0.0;                // kScale
  bool trans_a = false;               // kMatMul
  bool trans_b = false;               // kMatMul
  std::size_t axis = 0;               // kSumAxis, kConcat
  std::vector<std::size_t> index;     // kPick
  bool bn_training = false;           // kBatchNorm
  double bn_eps = 1e-5;               // kBatchNorm
  Tensor bn_mean;                     // kBatchNorm, eval mode stats
  Tensor bn_var;                      // kBatchNorm, eval mode stats
};

class Tape {
 public:
  // Leaves. Named leaves can be rebound by forward(); the name keys the
  // gradient map. Duplicate names are rejected.
  NodeId input(const std::string& name, Tensor value);  // not differentiated
  NodeId param(const std::string& name, Tensor value);  // differentiated
  NodeId constant(Tensor value);

  // Primitive ops. Each records a node and computes its value immediately.
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId x, NodeId bias);  // [n,d] + [d], broadcast over rows
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double c);
  NodeId relu(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId sum_axis(NodeId x, std::size_t axis);
  NodeId mean_axis(NodeId x, std::size_t axis);
  NodeId concat(const std::vector<NodeId>& parts, std::size_t axis);
  NodeId l2_normalize_rows(NodeId x);
  NodeId softmax_rows(NodeId x);
  NodeId log_softmax_rows(NodeId x);
  // out[i] = x[i, index[i]]
  NodeId pick(NodeId x, std::vector<std::size_t> index);
  // Training mode normalizes by per-batch column statistics; eval mode uses
  // the running statistics captured in running_mean/running_var. Running
  // stats are owned by the caller (the layer), never mutated here.
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, bool training,
                    const Tensor& running_mean, const Tensor& running_var,
                    double eps = 1e-5);

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(NodeId id) const;
  const Tensor& value(NodeId id) const;

  // Re-executes every node in insertion order. `bindings` replaces the values
  // of the named leaves it mentions (shapes must match); other leaves keep
  // their current values.
  void forward(const std::map<std::string, Tensor>& bindings);

  // Reverse sweep from a scalar output. Returns one gradient per named leaf
  // with requires_grad (zeros when the leaf does not reach the output).
  std::map<std::string, Tensor> backward(NodeId output);

 private:
  NodeId push(TapeNode node);
  void compute(NodeId id);
  void propagate(NodeId id);
  void accumulate(NodeId target, const Tensor& g);
  const Tensor& in_val(const TapeNode& n, std::size_t slot) const;
  void check_id(NodeId id, const char* op) const;

  std::vector<TapeNode> nodes_;
  std::map<std::string, NodeId> named_;
};

// Central finite differences of the scalar at `output` w.r.t. every
// differentiable named leaf, re-running the tape per coordinate. The tape's
// leaf values are restored afterwards.
std::map<std::string, Tensor> numeric_gradients(Tape& tape, NodeId output,
                                                double eps);

// Largest elementwise |a-b| / max(|a|,|b|,1e-8) across two gradient maps.
double max_relative_gap(const std::map<std::string, Tensor>& a,
                        const std::map<std::string, Tensor>& b);

// backward() vs numeric_gradients(); eps must lie in (0, 1e-2].
double gradient_check(Tape& tape, NodeId output, double eps = 1e-5);

}  // namespace clab
