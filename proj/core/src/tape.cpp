#include "clab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace clab {

namespace {

[[noreturn]] void fail_shape(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    fail_shape(op, "expected a rank-2 tensor, got shape " + shape_str(t.shape));
}

// Row-wise ops accept a rank-1 tensor as a single row.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {std::size_t{1}, t.shape[0]};
  if (t.rank() == 2) return {t.shape[0], t.shape[1]};
  fail_shape(op, "expected rank-1 or rank-2, got shape " + shape_str(t.shape));
}

std::size_t view_rows(const Tensor& t, bool trans) {
  return trans ? t.shape[1] : t.shape[0];
}
std::size_t view_cols(const Tensor& t, bool trans) {
  return trans ? t.shape[0] : t.shape[1];
}

}  // namespace

void Tape::check_id(NodeId id, const char* op) const {
  if (id >= nodes_.size())
    throw std::invalid_argument(std::string(op) + ": node id " +
                                std::to_string(id) + " out of range");
}

const TapeNode& Tape::node(NodeId id) const {
  check_id(id, "Tape::node");
  return nodes_[id];
}

const Tensor& Tape::value(NodeId id) const {
  check_id(id, "Tape::value");
  return nodes_[id].value;
}

const Tensor& Tape::in_val(const TapeNode& n, std::size_t slot) const {
  return nodes_[n.inputs[slot]].value;
}

NodeId Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  NodeId id = nodes_.size() - 1;
  if (nodes_[id].op != OpKind::kLeaf) compute(id);
  return id;
}

NodeId Tape::input(const std::string& name, Tensor value) {
  if (name.empty()) throw std::invalid_argument("Tape::input: empty leaf name");
  if (named_.count(name))
    throw std::invalid_argument("Tape: duplicate leaf name '" + name + "'");
  TapeNode n;
  n.name = name;
  n.value = std::move(value);
  NodeId id = push(std::move(n));
  named_[name] = id;
  return id;
}

NodeId Tape::param(const std::string& name, Tensor value) {
  NodeId id = input(name, std::move(value));
  nodes_[id].requires_grad = true;
  return id;
}

NodeId Tape::constant(Tensor value) {
  TapeNode n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  if (view_cols(ta, trans_a) != view_rows(tb, trans_b))
    fail_shape("matmul", "inner dimensions disagree: " + shape_str(ta.shape) +
                             (trans_a ? "^T" : "") + " x " +
                             shape_str(tb.shape) + (trans_b ? "^T" : ""));
  TapeNode n;
  n.op = OpKind::kMatMul;
  n.inputs = {a, b};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_id(a, "add");
  check_id(b, "add");
  if (!nodes_[a].value.same_shape(nodes_[b].value))
    fail_shape("add", "shape " + shape_str(nodes_[a].value.shape) + " vs " +
                          shape_str(nodes_[b].value.shape));
  TapeNode n;
  n.op = OpKind::kAdd;
  n.inputs = {a, b};
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::add_row(NodeId x, NodeId bias) {
  check_id(x, "add_row");
  check_id(bias, "add_row");
  const Tensor& tx = nodes_[x].value;
  const Tensor& tb = nodes_[bias].value;
  require_rank2(tx, "add_row");
  if (tb.rank() != 1 || tb.shape[0] != tx.cols())
    fail_shape("add_row", "bias shape " + shape_str(tb.shape) +
                              " does not match row width of " +
                              shape_str(tx.shape));
  TapeNode n;
  n.op = OpKind::kAddRow;
  n.inputs = {x, bias};
  n.requires_grad = nodes_[x].requires_grad || nodes_[bias].requires_grad;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_id(a, "sub");
  check_id(b, "sub");
  if (!nodes_[a].value.same_shape(nodes_[b].value))
    fail_shape("sub", "shape " + shape_str(nodes_[a].value.shape) + " vs " +
                          shape_str(nodes_[b].value.shape));
  TapeNode n;
  n.op = OpKind::kSub;
  n.inputs = {a, b};
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_id(a, "mul");
  check_id(b, "mul");
  if (!nodes_[a].value.same_shape(nodes_[b].value))
    fail_shape("mul", "shape " + shape_str(nodes_[a].value.shape) + " vs " +
                          shape_str(nodes_[b].value.shape));
  TapeNode n;
  n.op = OpKind::kMul;
  n.inputs = {a, b};
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
  check_id(x, "scale");
  TapeNode n;
  n.op = OpKind::kScale;
  n.inputs = {x};
  n.scalar = c;
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  check_id(x, "relu");
  TapeNode n;
  n.op = OpKind::kRelu;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::exp(NodeId x) {
  check_id(x, "exp");
  TapeNode n;
  n.op = OpKind::kExp;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
  check_id(x, "log");
  TapeNode n;
  n.op = OpKind::kLog;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  check_id(x, "sum");
  TapeNode n;
  n.op = OpKind::kSumAll;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mean(NodeId x) {
  check_id(x, "mean");
  const double inv = 1.0 / static_cast<double>(nodes_[x].value.numel());
  return scale(sum(x), inv);
}

NodeId Tape::sum_axis(NodeId x, std::size_t axis) {
  check_id(x, "sum_axis");
  const Tensor& t = nodes_[x].value;
  require_rank2(t, "sum_axis");
  if (axis > 1) fail_shape("sum_axis", "axis must be 0 or 1");
  TapeNode n;
  n.op = OpKind::kSumAxis;
  n.inputs = {x};
  n.axis = axis;
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::mean_axis(NodeId x, std::size_t axis) {
  check_id(x, "mean_axis");
  const Tensor& t = nodes_[x].value;
  require_rank2(t, "mean_axis");
  if (axis > 1) fail_shape("mean_axis", "axis must be 0 or 1");
  const double inv = 1.0 / static_cast<double>(t.shape[axis]);
  return scale(sum_axis(x, axis), inv);
}

NodeId Tape::concat(const std::vector<NodeId>& parts, std::size_t axis) {
  if (parts.empty()) fail_shape("concat", "needs at least one input");
  for (NodeId p : parts) check_id(p, "concat");
  const Tensor& first = nodes_[parts[0]].value;
  const std::size_t rank = first.rank();
  if (rank > 2) fail_shape("concat", "rank-1 or rank-2 inputs only");
  if (axis >= rank) fail_shape("concat", "axis out of range for rank");
  bool grad = false;
  for (NodeId p : parts) {
    const Tensor& t = nodes_[p].value;
    if (t.rank() != rank) fail_shape("concat", "mixed ranks");
    if (rank == 2) {
      const std::size_t off = 1 - axis;
      if (t.shape[off] != first.shape[off])
        fail_shape("concat", "shape " + shape_str(t.shape) +
                                 " incompatible with " +
                                 shape_str(first.shape) + " along axis " +
                                 std::to_string(axis));
    }
    grad = grad || nodes_[p].requires_grad;
  }
  TapeNode n;
  n.op = OpKind::kConcat;
  n.inputs = parts;
  n.axis = axis;
  n.requires_grad = grad;
  return push(std::move(n));
}

NodeId Tape::l2_normalize_rows(NodeId x) {
  check_id(x, "l2_normalize_rows");
  rows_cols(nodes_[x].value, "l2_normalize_rows");
  TapeNode n;
  n.op = OpKind::kL2NormalizeRows;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId x) {
  check_id(x, "softmax_rows");
  rows_cols(nodes_[x].value, "softmax_rows");
  TapeNode n;
  n.op = OpKind::kSoftmaxRows;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::log_softmax_rows(NodeId x) {
  check_id(x, "log_softmax_rows");
  rows_cols(nodes_[x].value, "log_softmax_rows");
  TapeNode n;
  n.op = OpKind::kLogSoftmaxRows;
  n.inputs = {x};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::pick(NodeId x, std::vector<std::size_t> index) {
  check_id(x, "pick");
  const Tensor& t = nodes_[x].value;
  require_rank2(t, "pick");
  if (index.size() != t.rows())
    fail_shape("pick", "need one index per row: " +
                           std::to_string(index.size()) + " indices for " +
                           std::to_string(t.rows()) + " rows");
  for (std::size_t i : index)
    if (i >= t.cols())
      fail_shape("pick", "column index " + std::to_string(i) +
                             " out of range for " + shape_str(t.shape));
  TapeNode n;
  n.op = OpKind::kPick;
  n.inputs = {x};
  n.index = std::move(index);
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

NodeId Tape::batch_norm(NodeId x, NodeId gamma, NodeId beta, bool training,
                        const Tensor& running_mean, const Tensor& running_var,
                        double eps) {
  check_id(x, "batch_norm");
  check_id(gamma, "batch_norm");
  check_id(beta, "batch_norm");
  const Tensor& tx = nodes_[x].value;
  require_rank2(tx, "batch_norm");
  const std::size_t d = tx.cols();
  auto check_vec = [&](const Tensor& t, const char* what) {
    if (t.rank() != 1 || t.shape[0] != d)
      fail_shape("batch_norm", std::string(what) + " shape " +
                                   shape_str(t.shape) + " does not match " +
                                   std::to_string(d) + " features");
  };
  check_vec(nodes_[gamma].value, "gamma");
  check_vec(nodes_[beta].value, "beta");
  if (!training) {
    check_vec(running_mean, "running mean");
    check_vec(running_var, "running var");
  }
  if (!(eps > 0.0)) fail_shape("batch_norm", "eps must be positive");
  TapeNode n;
  n.op = OpKind::kBatchNorm;
  n.inputs = {x, gamma, beta};
  n.bn_training = training;
  n.bn_eps = eps;
  n.bn_mean = running_mean;
  n.bn_var = running_var;
  n.requires_grad = nodes_[x].requires_grad || nodes_[gamma].requires_grad ||
                    nodes_[beta].requires_grad;
  return push(std::move(n));
}

void Tape::compute(NodeId id) {
  TapeNode& n = nodes_[id];
  switch (n.op) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatMul:
      n.value = clab::matmul(in_val(n, 0), in_val(n, 1), n.trans_a, n.trans_b);
      break;
    case OpKind::kAdd: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor out = a;
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
      n.value = std::move(out);
      break;
    }
    case OpKind::kAddRow: {
      const Tensor& x = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor out = x;
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) += b.data[j];
      n.value = std::move(out);
      break;
    }
    case OpKind::kSub: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor out = a;
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
      n.value = std::move(out);
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor out = a;
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
      n.value = std::move(out);
      break;
    }
    case OpKind::kScale: {
      Tensor out = in_val(n, 0);
      for (double& v : out.data) v *= n.scalar;
      n.value = std::move(out);
      break;
    }
    case OpKind::kRelu: {
      Tensor out = in_val(n, 0);
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      n.value = std::move(out);
      break;
    }
    case OpKind::kExp: {
      Tensor out = in_val(n, 0);
      for (double& v : out.data) v = std::exp(v);
      n.value = std::move(out);
      break;
    }
    case OpKind::kLog: {
      Tensor out = in_val(n, 0);
      for (double& v : out.data) {
        if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
        v = std::log(v);
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kSumAll: {
      const Tensor& x = in_val(n, 0);
      double acc = 0.0;
      for (double v : x.data) acc += v;
      n.value = Tensor::scalar(acc);
      break;
    }
    case OpKind::kSumAxis: {
      const Tensor& x = in_val(n, 0);
      if (n.axis == 0) {
        Tensor out = Tensor::zeros({x.cols()});
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) out.data[j] += x.at(i, j);
        n.value = std::move(out);
      } else {
        Tensor out = Tensor::zeros({x.rows()});
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) acc += x.at(i, j);
          out.data[i] = acc;
        }
        n.value = std::move(out);
      }
      break;
    }
    case OpKind::kConcat: {
      if (nodes_[n.inputs[0]].value.rank() == 1 || n.axis == 0) {
        std::size_t total = 0;
        for (NodeId p : n.inputs) total += nodes_[p].value.numel();
        const Tensor& first = nodes_[n.inputs[0]].value;
        Tensor out = first.rank() == 1
                         ? Tensor::zeros({total})
                         : Tensor::zeros({total / first.cols(), first.cols()});
        std::size_t off = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = nodes_[p].value;
          for (std::size_t i = 0; i < t.numel(); ++i) out.data[off + i] = t.data[i];
          off += t.numel();
        }
        n.value = std::move(out);
      } else {
        std::size_t width = 0;
        for (NodeId p : n.inputs) width += nodes_[p].value.cols();
        const std::size_t rows = nodes_[n.inputs[0]].value.rows();
        Tensor out = Tensor::zeros({rows, width});
        std::size_t col0 = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = nodes_[p].value;
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < t.cols(); ++j)
              out.at(i, col0 + j) = t.at(i, j);
          col0 += t.cols();
        }
        n.value = std::move(out);
      }
      break;
    }
    case OpKind::kL2NormalizeRows: {
      const Tensor& x = in_val(n, 0);
      auto [rows, cols] = rows_cols(x, "l2_normalize_rows");
      Tensor out = x;
      for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          double v = x.data[i * cols + j];
          sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm < std::numeric_limits<double>::min())
          throw std::domain_error("l2_normalize_rows: zero-norm row");
        for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] /= norm;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kSoftmaxRows: {
      const Tensor& x = in_val(n, 0);
      auto [rows, cols] = rows_cols(x, "softmax_rows");
      Tensor out = x;
      for (std::size_t i = 0; i < rows; ++i) {
        double m = x.data[i * cols];
        for (std::size_t j = 1; j < cols; ++j)
          m = std::max(m, x.data[i * cols + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          double e = std::exp(x.data[i * cols + j] - m);
          out.data[i * cols + j] = e;
          z += e;
        }
        for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] /= z;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kLogSoftmaxRows: {
      const Tensor& x = in_val(n, 0);
      auto [rows, cols] = rows_cols(x, "log_softmax_rows");
      Tensor out = x;
      for (std::size_t i = 0; i < rows; ++i) {
        double m = x.data[i * cols];
        for (std::size_t j = 1; j < cols; ++j)
          m = std::max(m, x.data[i * cols + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          z += std::exp(x.data[i * cols + j] - m);
        const double lz = std::log(z);
        for (std::size_t j = 0; j < cols; ++j)
          out.data[i * cols + j] = x.data[i * cols + j] - m - lz;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kPick: {
      const Tensor& x = in_val(n, 0);
      Tensor out = Tensor::zeros({x.rows()});
      for (std::size_t i = 0; i < x.rows(); ++i) out.data[i] = x.at(i, n.index[i]);
      n.value = std::move(out);
      break;
    }
    case OpKind::kBatchNorm: {
      const Tensor& x = in_val(n, 0);
      const Tensor& gamma = in_val(n, 1);
      const Tensor& beta = in_val(n, 2);
      const std::size_t rows = x.rows();
      const std::size_t d = x.cols();
      Tensor out = x;
      for (std::size_t j = 0; j < d; ++j) {
        double m, v;
        if (n.bn_training) {
          double acc = 0.0;
          for (std::size_t i = 0; i < rows; ++i) acc += x.at(i, j);
          m = acc / static_cast<double>(rows);
          double sq = 0.0;
          for (std::size_t i = 0; i < rows; ++i) {
            double c = x.at(i, j) - m;
            sq += c * c;
          }
          v = sq / static_cast<double>(rows);
        } else {
          m = n.bn_mean.data[j];
          v = n.bn_var.data[j];
        }
        const double inv = 1.0 / std::sqrt(v + n.bn_eps);
        for (std::size_t i = 0; i < rows; ++i)
          out.at(i, j) = gamma.data[j] * ((x.at(i, j) - m) * inv) + beta.data[j];
      }
      n.value = std::move(out);
      break;
    }
  }
}

void Tape::forward(const std::map<std::string, Tensor>& bindings) {
  for (const auto& [name, t] : bindings) {
    auto it = named_.find(name);
    if (it == named_.end())
      throw std::invalid_argument("Tape::forward: unknown leaf '" + name + "'");
    Tensor& cur = nodes_[it->second].value;
    if (!cur.same_shape(t))
      throw std::invalid_argument("Tape::forward: leaf '" + name +
                                  "' bound with shape " + shape_str(t.shape) +
                                  ", expected " + shape_str(cur.shape));
    cur = t;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].op != OpKind::kLeaf) compute(id);
}

void Tape::accumulate(NodeId target, const Tensor& g) {
  TapeNode& t = nodes_[target];
  if (!t.requires_grad) return;
  for (std::size_t i = 0; i < g.numel(); ++i) t.grad.data[i] += g.data[i];
}

void Tape::propagate(NodeId id) {
  TapeNode& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatMul: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor da, db;
      if (!n.trans_a && !n.trans_b) {
        da = clab::matmul(g, b, false, true);
        db = clab::matmul(a, g, true, false);
      } else if (n.trans_a && !n.trans_b) {
        da = clab::matmul(b, g, false, true);
        db = clab::matmul(a, g, false, false);
      } else if (!n.trans_a && n.trans_b) {
        da = clab::matmul(g, b, false, false);
        db = clab::matmul(g, a, true, false);
      } else {
        da = clab::matmul(b, g, true, true);
        db = clab::matmul(g, a, true, true);
      }
      accumulate(n.inputs[0], da);
      accumulate(n.inputs[1], db);
      break;
    }
    case OpKind::kAdd:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], g);
      break;
    case OpKind::kAddRow: {
      accumulate(n.inputs[0], g);
      Tensor db = Tensor::zeros({g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db.data[j] += g.at(i, j);
      accumulate(n.inputs[1], db);
      break;
    }
    case OpKind::kSub: {
      accumulate(n.inputs[0], g);
      Tensor neg = g;
      for (double& v : neg.data) v = -v;
      accumulate(n.inputs[1], neg);
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor da = g;
      Tensor db = g;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        da.data[i] *= b.data[i];
        db.data[i] *= a.data[i];
      }
      accumulate(n.inputs[0], da);
      accumulate(n.inputs[1], db);
      break;
    }
    case OpKind::kScale: {
      Tensor dx = g;
      for (double& v : dx.data) v *= n.scalar;
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kRelu: {
      const Tensor& x = in_val(n, 0);
      Tensor dx = g;
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kExp: {
      Tensor dx = g;
      for (std::size_t i = 0; i < g.numel(); ++i) dx.data[i] *= n.value.data[i];
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kLog: {
      const Tensor& x = in_val(n, 0);
      Tensor dx = g;
      for (std::size_t i = 0; i < g.numel(); ++i) dx.data[i] /= x.data[i];
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kSumAll: {
      const Tensor& x = in_val(n, 0);
      accumulate(n.inputs[0], Tensor::full(x.shape, g.data[0]));
      break;
    }
    case OpKind::kSumAxis: {
      const Tensor& x = in_val(n, 0);
      Tensor dx = Tensor::zeros(x.shape);
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
          dx.at(i, j) = n.axis == 0 ? g.data[j] : g.data[i];
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kConcat: {
      if (nodes_[n.inputs[0]].value.rank() == 1 || n.axis == 0) {
        std::size_t off = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = nodes_[p].value;
          Tensor dp = Tensor::zeros(t.shape);
          for (std::size_t i = 0; i < t.numel(); ++i)
            dp.data[i] = g.data[off + i];
          off += t.numel();
          accumulate(p, dp);
        }
      } else {
        std::size_t col0 = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = nodes_[p].value;
          Tensor dp = Tensor::zeros(t.shape);
          for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < t.cols(); ++j)
              dp.at(i, j) = g.at(i, col0 + j);
          col0 += t.cols();
          accumulate(p, dp);
        }
      }
      break;
    }
    case OpKind::kL2NormalizeRows: {
      const Tensor& x = in_val(n, 0);
      auto [rows, cols] = rows_cols(x, "l2_normalize_rows");
      Tensor dx = Tensor::zeros(x.shape);
      for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          double v = x.data[i * cols + j];
          sq += v * v;
        }
        const double norm = std::sqrt(sq);
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          dot += g.data[i * cols + j] * n.value.data[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          dx.data[i * cols + j] =
              (g.data[i * cols + j] - dot * n.value.data[i * cols + j]) / norm;
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kSoftmaxRows: {
      auto [rows, cols] = rows_cols(n.value, "softmax_rows");
      Tensor dx = Tensor::zeros(n.value.shape);
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          dot += g.data[i * cols + j] * n.value.data[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          dx.data[i * cols + j] =
              n.value.data[i * cols + j] * (g.data[i * cols + j] - dot);
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kLogSoftmaxRows: {
      auto [rows, cols] = rows_cols(n.value, "log_softmax_rows");
      Tensor dx = Tensor::zeros(n.value.shape);
      for (std::size_t i = 0; i < rows; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gsum += g.data[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          dx.data[i * cols + j] =
              g.data[i * cols + j] - std::exp(n.value.data[i * cols + j]) * gsum;
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kPick: {
      const Tensor& x = in_val(n, 0);
      Tensor dx = Tensor::zeros(x.shape);
      for (std::size_t i = 0; i < x.rows(); ++i)
        dx.at(i, n.index[i]) += g.data[i];
      accumulate(n.inputs[0], dx);
      break;
    }
    case OpKind::kBatchNorm: {
      const Tensor& x = in_val(n, 0);
      const Tensor& gamma = in_val(n, 1);
      const std::size_t rows = x.rows();
      const std::size_t d = x.cols();
      const double fn = static_cast<double>(rows);
      Tensor dx = Tensor::zeros(x.shape);
      Tensor dgamma = Tensor::zeros({d});
      Tensor dbeta = Tensor::zeros({d});
      for (std::size_t j = 0; j < d; ++j) {
        double m, v;
        if (n.bn_training) {
          double acc = 0.0;
          for (std::size_t i = 0; i < rows; ++i) acc += x.at(i, j);
          m = acc / fn;
          double sq = 0.0;
          for (std::size_t i = 0; i < rows; ++i) {
            double c = x.at(i, j) - m;
            sq += c * c;
          }
          v = sq / fn;
        } else {
          m = n.bn_mean.data[j];
          v = n.bn_var.data[j];
        }
        const double inv = 1.0 / std::sqrt(v + n.bn_eps);
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          const double xhat = (x.at(i, j) - m) * inv;
          const double dxhat = g.at(i, j) * gamma.data[j];
          dgamma.data[j] += g.at(i, j) * xhat;
          dbeta.data[j] += g.at(i, j);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        for (std::size_t i = 0; i < rows; ++i) {
          const double xhat = (x.at(i, j) - m) * inv;
          const double dxhat = g.at(i, j) * gamma.data[j];
          if (n.bn_training) {
            dx.at(i, j) =
                (inv / fn) * (fn * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
          } else {
            dx.at(i, j) = dxhat * inv;
          }
        }
      }
      accumulate(n.inputs[0], dx);
      accumulate(n.inputs[1], dgamma);
      accumulate(n.inputs[2], dbeta);
      break;
    }
  }
}

std::map<std::string, Tensor> Tape::backward(NodeId output) {
  check_id(output, "Tape::backward");
  if (nodes_[output].value.numel() != 1)
    throw std::invalid_argument(
        "Tape::backward: output must be scalar, got shape " +
        shape_str(nodes_[output].value.shape));
  for (TapeNode& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
  nodes_[output].grad.data[0] = 1.0;
  for (NodeId id = output + 1; id-- > 0;) {
    if (nodes_[id].requires_grad || id == output) propagate(id);
  }
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : named_)
    if (nodes_[id].requires_grad) out[name] = nodes_[id].grad;
  return out;
}

std::map<std::string, Tensor> numeric_gradients(Tape& tape, NodeId output,
                                                double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("numeric_gradients: eps must be positive");
  if (tape.value(output).numel() != 1)
    throw std::invalid_argument("numeric_gradients: output must be scalar");
  std::map<std::string, Tensor> out;
  std::vector<std::pair<std::string, Tensor>> bases;
  for (NodeId id = 0; id < tape.size(); ++id) {
    const TapeNode& n = tape.node(id);
    if (n.op == OpKind::kLeaf && n.requires_grad && !n.name.empty())
      bases.emplace_back(n.name, n.value);
  }
  for (const auto& [name, base] : bases) {
    Tensor grad = Tensor::zeros(base.shape);
    Tensor probe = base;
    for (std::size_t i = 0; i < base.numel(); ++i) {
      probe.data[i] = base.data[i] + eps;
      tape.forward({{name, probe}});
      const double fp = tape.value(output).data[0];
      probe.data[i] = base.data[i] - eps;
      tape.forward({{name, probe}});
      const double fm = tape.value(output).data[0];
      grad.data[i] = (fp - fm) / (2.0 * eps);
      probe.data[i] = base.data[i];
    }
    tape.forward({{name, base}});
    out[name] = std::move(grad);
  }
  return out;
}

double max_relative_gap(const std::map<std::string, Tensor>& a,
                        const std::map<std::string, Tensor>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_relative_gap: key sets differ");
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end())
      throw std::invalid_argument("max_relative_gap: key sets differ on '" +
                                  name + "'");
    const Tensor& tb = it->second;
    if (!ta.same_shape(tb))
      throw std::invalid_argument("max_relative_gap: shape mismatch on '" +
                                  name + "'");
    for (std::size_t i = 0; i < ta.numel(); ++i) {
      const double x = ta.data[i];
      const double y = tb.data[i];
      const double denom = std::max({std::fabs(x), std::fabs(y), 1e-8});
      worst = std::max(worst, std::fabs(x - y) / denom);
    }
  }
  return worst;
}

double gradient_check(Tape& tape, NodeId output, double eps) {
  if (!(eps > 0.0) || eps > 1e-2)
    throw std::invalid_argument("gradient_check: eps must lie in (0, 1e-2]");
  auto analytic = tape.backward(output);
  auto numeric = numeric_gradients(tape, output, eps);
  return max_relative_gap(analytic, numeric);
}

}  // namespace clab
