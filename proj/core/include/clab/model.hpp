#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clab/tape.hpp"
#include "clab/tensor.hpp"

namespace clab {

struct NetworkConfig {
  std::size_t input_dim = 784;
  std::vector<std::size_t> hidden_dims{100, 100};
  std::size_t num_classes = 10;
  std::size_t ssl_proj_dim = 64;
  // The embedding head can swap its batch norm for identity so micro-batch
  // unit tests see per-row-independent outputs.
  bool ssl_batchnorm = true;
  double bn_momentum = 0.9;  // fraction of the old running stats kept
  double bn_eps = 1e-5;

  static constexpr std::size_t kRotClasses = 4;

  void validate() const;
  std::size_t feature_dim() const { return hidden_dims.back(); }
  std::size_t param_count() const;   // trainable scalars
  std::size_t buffer_count() const;  // batch-norm running stats
};

struct LinearLayer {
  Tensor w;  // [fan_in, fan_out]
  Tensor b;  // [fan_out]
};

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
};

enum class ParamGroup { kBackbone, kSsl, kCls, kRot };

struct ParamRef {
  std::string name;
  ParamGroup group;
  Tensor* tensor;
};

// MLP backbone with three heads: contrastive embeddings, class logits, and
// rotation logits. Weights start uniform in +-1/sqrt(fan_in), biases at zero;
// construction is deterministic in the seed.
class MultiHeadNet {
 public:
  MultiHeadNet(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  // Stable name -> tensor views over the trainable parameters, in the flat
  // serialization order: backbone layers, then embedding head, cls, rot.
  std::vector<ParamRef> parameters();
  std::vector<ParamRef> parameters(ParamGroup group);

  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& v);
  std::vector<double> flat_buffers() const;
  void set_flat_buffers(const std::vector<double>& v);

  // No-grad evaluation forwards (batch norm in running-stats mode).
  Tensor features(const Tensor& x) const;      // [n, feature_dim]
  Tensor class_logits(const Tensor& x) const;  // [n, num_classes]
  Tensor rot_logits(const Tensor& x) const;    // [n, 4]
  Tensor embeddings(const Tensor& x) const;    // [n, ssl_proj_dim], unit rows

 private:
  friend class NetBinding;

  NetworkConfig config_;
  std::vector<LinearLayer> backbone_;
  LinearLayer ssl_in_;      // linear layer ahead of the projection MLP
  LinearLayer ssl_hidden_;  // projection MLP, first layer (batch-normed)
  BatchNormState ssl_bn_;
  LinearLayer ssl_out_;     // projection MLP, second layer
  LinearLayer cls_;
  LinearLayer rot_;
};

// Registers one net's parameters on one tape (lazily, each exactly once) and
// records the forward graphs of the backbone and heads. Keep the binding
// alive for as long as the tape is used.
class NetBinding {
 public:
  NetBinding(MultiHeadNet& net, Tape& tape);

  NodeId backbone(NodeId x);
  // training=true normalizes by batch statistics and refreshes the net's
  // running stats as a side effect of recording.
  NodeId head_ssl(NodeId features, bool training);
  NodeId head_cls(NodeId features);
  NodeId head_rot(NodeId features);

  // Differentiable node for one named parameter (regularizer penalties).
  NodeId param(const ParamRef& ref);

 private:
  NodeId param_node(const std::string& name, const Tensor& value);
  NodeId affine(NodeId x, const std::string& prefix, const LinearLayer& layer);

  MultiHeadNet& net_;
  Tape& tape_;
  std::map<std::string, NodeId> bound_;
};

}  // namespace clab
