#include "clab/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "clab/rng.hpp"

namespace clab {

namespace {

LinearLayer make_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  LinearLayer l{Tensor::zeros({fan_in, fan_out}), Tensor::zeros({fan_out})};
  for (double& v : l.w.data) v = rng.uniform(-bound, bound);
  return l;
}

Tensor affine_val(const Tensor& x, const LinearLayer& l) {
  Tensor out = matmul(x, l.w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += l.b.data[j];
  return out;
}

Tensor relu_val(Tensor x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor bn_eval_val(const Tensor& x, const BatchNormState& bn, double eps) {
  Tensor out = x;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double m = bn.running_mean.data[j];
    const double inv = 1.0 / std::sqrt(bn.running_var.data[j] + eps);
    for (std::size_t i = 0; i < x.rows(); ++i)
      out.at(i, j) = bn.gamma.data[j] * ((x.at(i, j) - m) * inv) + bn.beta.data[j];
  }
  return out;
}

Tensor l2_normalize_rows_val(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) sq += x.at(i, j) * x.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm < std::numeric_limits<double>::min())
      throw std::domain_error("embeddings: zero-norm row");
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) /= norm;
  }
  return out;
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("NetworkConfig: input_dim must be positive");
  if (hidden_dims.empty())
    throw std::invalid_argument("NetworkConfig: at least one hidden layer required");
  for (std::size_t d : hidden_dims)
    if (d == 0) throw std::invalid_argument("NetworkConfig: zero hidden width");
  if (num_classes == 0) throw std::invalid_argument("NetworkConfig: num_classes must be positive");
  if (ssl_proj_dim == 0) throw std::invalid_argument("NetworkConfig: ssl_proj_dim must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
    throw std::invalid_argument("NetworkConfig: bn_momentum must lie in [0, 1)");
  if (!(bn_eps > 0.0)) throw std::invalid_argument("NetworkConfig: bn_eps must be positive");
}

std::size_t NetworkConfig::param_count() const {
  std::size_t n = 0;
  std::size_t in = input_dim;
  for (std::size_t h : hidden_dims) {
    n += in * h + h;
    in = h;
  }
  const std::size_t d = feature_dim();
  n += d * d + d;                          // ssl input linear
  n += d * d + d;                          // projection layer 1
  if (ssl_batchnorm) n += 2 * d;           // gamma, beta
  n += d * ssl_proj_dim + ssl_proj_dim;    // projection layer 2
  n += d * num_classes + num_classes;      // cls
  n += d * kRotClasses + kRotClasses;      // rot
  return n;
}

std::size_t NetworkConfig::buffer_count() const {
  return ssl_batchnorm ? 2 * feature_dim() : 0;
}

MultiHeadNet::MultiHeadNet(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = config_.input_dim;
  for (std::size_t h : config_.hidden_dims) {
    backbone_.push_back(make_linear(in, h, rng));
    in = h;
  }
  const std::size_t d = config_.feature_dim();
  ssl_in_ = make_linear(d, d, rng);
  ssl_hidden_ = make_linear(d, d, rng);
  ssl_bn_ = BatchNormState{Tensor::full({d}, 1.0), Tensor::zeros({d}),
                           Tensor::zeros({d}), Tensor::full({d}, 1.0)};
  ssl_out_ = make_linear(d, config_.ssl_proj_dim, rng);
  cls_ = make_linear(d, config_.num_classes, rng);
  rot_ = make_linear(d, NetworkConfig::kRotClasses, rng);
}

std::vector<ParamRef> MultiHeadNet::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    const std::string p = "backbone." + std::to_string(i);
    out.push_back({p + ".w", ParamGroup::kBackbone, &backbone_[i].w});
    out.push_back({p + ".b", ParamGroup::kBackbone, &backbone_[i].b});
  }
  out.push_back({"ssl.in.w", ParamGroup::kSsl, &ssl_in_.w});
  out.push_back({"ssl.in.b", ParamGroup::kSsl, &ssl_in_.b});
  out.push_back({"ssl.hidden.w", ParamGroup::kSsl, &ssl_hidden_.w});
  out.push_back({"ssl.hidden.b", ParamGroup::kSsl, &ssl_hidden_.b});
  if (config_.ssl_batchnorm) {
    out.push_back({"ssl.bn.gamma", ParamGroup::kSsl, &ssl_bn_.gamma});
    out.push_back({"ssl.bn.beta", ParamGroup::kSsl, &ssl_bn_.beta});
  }
  out.push_back({"ssl.out.w", ParamGroup::kSsl, &ssl_out_.w});
  out.push_back({"ssl.out.b", ParamGroup::kSsl, &ssl_out_.b});
  out.push_back({"cls.w", ParamGroup::kCls, &cls_.w});
  out.push_back({"cls.b", ParamGroup::kCls, &cls_.b});
  out.push_back({"rot.w", ParamGroup::kRot, &rot_.w});
  out.push_back({"rot.b", ParamGroup::kRot, &rot_.b});
  return out;
}

std::vector<ParamRef> MultiHeadNet::parameters(ParamGroup group) {
  std::vector<ParamRef> out;
  for (ParamRef& r : parameters())
    if (r.group == group) out.push_back(r);
  return out;
}

std::vector<double> MultiHeadNet::flat_params() const {
  auto refs = const_cast<MultiHeadNet*>(this)->parameters();
  std::vector<double> out;
  out.reserve(config_.param_count());
  for (const ParamRef& r : refs)
    out.insert(out.end(), r.tensor->data.begin(), r.tensor->data.end());
  return out;
}

void MultiHeadNet::set_flat_params(const std::vector<double>& v) {
  if (v.size() != config_.param_count())
    throw std::invalid_argument("set_flat_params: got " + std::to_string(v.size()) +
                                " values, expected " +
                                std::to_string(config_.param_count()));
  std::size_t off = 0;
  for (ParamRef& r : parameters()) {
    for (double& x : r.tensor->data) x = v[off++];
  }
}

std::vector<double> MultiHeadNet::flat_buffers() const {
  std::vector<double> out;
  if (config_.ssl_batchnorm) {
    out.insert(out.end(), ssl_bn_.running_mean.data.begin(), ssl_bn_.running_mean.data.end());
    out.insert(out.end(), ssl_bn_.running_var.data.begin(), ssl_bn_.running_var.data.end());
  }
  return out;
}

void MultiHeadNet::set_flat_buffers(const std::vector<double>& v) {
  if (v.size() != config_.buffer_count())
    throw std::invalid_argument("set_flat_buffers: got " + std::to_string(v.size()) +
                                " values, expected " +
                                std::to_string(config_.buffer_count()));
  std::size_t off = 0;
  for (double& x : ssl_bn_.running_mean.data) x = v[off++];
  for (double& x : ssl_bn_.running_var.data) x = v[off++];
}

Tensor MultiHeadNet::features(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.input_dim)
    throw std::invalid_argument("features: input shape " + shape_str(x.shape) +
                                " does not match input_dim " +
                                std::to_string(config_.input_dim));
  Tensor h = x;
  for (const LinearLayer& l : backbone_) h = relu_val(affine_val(h, l));
  return h;
}

Tensor MultiHeadNet::class_logits(const Tensor& x) const {
  return affine_val(features(x), cls_);
}

Tensor MultiHeadNet::rot_logits(const Tensor& x) const {
  return affine_val(features(x), rot_);
}

Tensor MultiHeadNet::embeddings(const Tensor& x) const {
  Tensor h = affine_val(features(x), ssl_in_);
  h = affine_val(h, ssl_hidden_);
  if (config_.ssl_batchnorm) h = bn_eval_val(h, ssl_bn_, config_.bn_eps);
  h = relu_val(std::move(h));
  h = affine_val(h, ssl_out_);
  return l2_normalize_rows_val(h);
}

NetBinding::NetBinding(MultiHeadNet& net, Tape& tape) : net_(net), tape_(tape) {}

NodeId NetBinding::param_node(const std::string& name, const Tensor& value) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  NodeId id = tape_.param(name, value);
  bound_[name] = id;
  return id;
}

NodeId NetBinding::param(const ParamRef& ref) {
  return param_node(ref.name, *ref.tensor);
}

NodeId NetBinding::affine(NodeId x, const std::string& prefix,
                          const LinearLayer& layer) {
  NodeId w = param_node(prefix + ".w", layer.w);
  NodeId b = param_node(prefix + ".b", layer.b);
  return tape_.add_row(tape_.matmul(x, w), b);
}

NodeId NetBinding::backbone(NodeId x) {
  NodeId h = x;
  for (std::size_t i = 0; i < net_.backbone_.size(); ++i)
    h = tape_.relu(affine(h, "backbone." + std::to_string(i), net_.backbone_[i]));
  return h;
}

NodeId NetBinding::head_ssl(NodeId features, bool training) {
  NodeId h = affine(features, "ssl.in", net_.ssl_in_);
  h = affine(h, "ssl.hidden", net_.ssl_hidden_);
  if (net_.config_.ssl_batchnorm) {
    BatchNormState& bn = net_.ssl_bn_;
    if (training) {
      // refresh running stats from the recorded batch, like any training pass
      const Tensor& pre = tape_.value(h);
      const double keep = net_.config_.bn_momentum;
      const double fn = static_cast<double>(pre.rows());
      for (std::size_t j = 0; j < pre.cols(); ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < pre.rows(); ++i) m += pre.at(i, j);
        m /= fn;
        double v = 0.0;
        for (std::size_t i = 0; i < pre.rows(); ++i) {
          const double c = pre.at(i, j) - m;
          v += c * c;
        }
        v /= fn;
        bn.running_mean.data[j] = keep * bn.running_mean.data[j] + (1.0 - keep) * m;
        bn.running_var.data[j] = keep * bn.running_var.data[j] + (1.0 - keep) * v;
      }
    }
    NodeId gm = param_node("ssl.bn.gamma", bn.gamma);
    NodeId bt = param_node("ssl.bn.beta", bn.beta);
    h = tape_.batch_norm(h, gm, bt, training, bn.running_mean, bn.running_var,
                         net_.config_.bn_eps);
  }
  h = tape_.relu(h);
  h = affine(h, "ssl.out", net_.ssl_out_);
  return tape_.l2_normalize_rows(h);
}

NodeId NetBinding::head_cls(NodeId features) { return affine(features, "cls", net_.cls_); }

NodeId NetBinding::head_rot(NodeId features) { return affine(features, "rot", net_.rot_); }

}  // namespace clab
