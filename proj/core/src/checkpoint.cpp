#include "clab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

namespace clab {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= std::uint32_t(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

double get_f64(const std::string& buf, std::size_t off) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

ordered_json network_to_json(const NetworkConfig& c) {
  ordered_json j;
  j["input_dim"] = c.input_dim;
  j["hidden_dims"] = c.hidden_dims;
  j["num_classes"] = c.num_classes;
  j["ssl_proj_dim"] = c.ssl_proj_dim;
  j["ssl_batchnorm"] = c.ssl_batchnorm;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_eps"] = c.bn_eps;
  return j;
}

NetworkConfig network_from_json(const json& j) {
  NetworkConfig c;
  try {
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.ssl_proj_dim = j.at("ssl_proj_dim").get<std::size_t>();
    c.ssl_batchnorm = j.at("ssl_batchnorm").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad network header: ") +
                             e.what());
  }
  c.validate();
  return c;
}

[[noreturn]] void truncated() {
  throw std::runtime_error("checkpoint: file truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const MultiHeadNet& net,
                     std::uint64_t seed, const ReplayBuffer* buffer) {
  const NetworkConfig& cfg = net.config();
  std::vector<double> params = net.flat_params();
  std::vector<double> stats = net.flat_buffers();

  ordered_json header;
  header["format"] = "clab-checkpoint";
  header["version"] = 1;
  header["seed"] = seed;
  header["network"] = network_to_json(cfg);
  header["param_count"] = params.size();
  header["buffer_count"] = stats.size();
  if (buffer == nullptr) {
    header["replay"] = nullptr;
  } else {
    ordered_json r;
    r["capacity"] = buffer->capacity();
    r["seen"] = buffer->seen_count();
    r["count"] = buffer->size();
    std::vector<std::size_t> image_shape;
    std::vector<std::size_t> labels;
    for (const ReplayItem& item : buffer->entries()) {
      if (image_shape.empty())
        image_shape = item.image.shape;
      else if (item.image.shape != image_shape)
        throw std::invalid_argument(
            "checkpoint: replay entries have mixed image shapes");
      labels.push_back(item.label);
    }
    r["image_shape"] = image_shape;
    r["labels"] = labels;
    r["rng"] = buffer->rng_state();
    header["replay"] = std::move(r);
  }

  std::string header_text = header.dump();
  if (header_text.size() > 0xffffffffu)
    throw std::invalid_argument("checkpoint: header too large");

  std::string blob;
  std::size_t n_values = params.size() + stats.size();
  if (buffer != nullptr)
    for (const ReplayItem& item : buffer->entries())
      n_values += item.image.numel();
  blob.reserve(4 + header_text.size() + 8 * n_values);

  put_u32(blob, std::uint32_t(header_text.size()));
  blob += header_text;
  for (double v : params) put_f64(blob, v);
  for (double v : stats) put_f64(blob, v);
  if (buffer != nullptr)
    for (const ReplayItem& item : buffer->entries())
      for (double v : item.image.data) put_f64(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 4) truncated();
  std::size_t header_len = get_u32(buf, 0);
  if (buf.size() < 4 + header_len) truncated();

  json header;
  try {
    header = json::parse(buf.begin() + 4, buf.begin() + 4 + long(header_len));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") +
                             e.what());
  }

  NetworkConfig cfg;
  std::uint64_t seed = 0;
  std::size_t param_count = 0;
  std::size_t buffer_count = 0;
  struct Manifest {
    bool present = false;
    std::size_t capacity = 0;
    std::size_t seen = 0;
    std::size_t count = 0;
    std::vector<std::size_t> image_shape;
    std::vector<std::size_t> labels;
    std::string rng;
  } replay;
  try {
    if (!header.is_object() ||
        header.value("format", std::string()) != "clab-checkpoint")
      throw std::runtime_error("checkpoint: not a checkpoint file");
    if (header.value("version", 0) != 1)
      throw std::runtime_error("checkpoint: unsupported version");
    cfg = network_from_json(header.at("network"));
    seed = header.at("seed").get<std::uint64_t>();
    param_count = header.at("param_count").get<std::size_t>();
    buffer_count = header.at("buffer_count").get<std::size_t>();
    const json& r = header.at("replay");
    if (!r.is_null()) {
      replay.present = true;
      replay.capacity = r.at("capacity").get<std::size_t>();
      replay.seen = r.at("seen").get<std::size_t>();
      replay.count = r.at("count").get<std::size_t>();
      replay.image_shape = r.at("image_shape").get<std::vector<std::size_t>>();
      replay.labels = r.at("labels").get<std::vector<std::size_t>>();
      replay.rng = r.at("rng").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") +
                             e.what());
  }

  if (param_count != cfg.param_count() || buffer_count != cfg.buffer_count())
    throw std::runtime_error(
        "checkpoint: header counts disagree with the network config");
  if (replay.present && replay.labels.size() != replay.count)
    throw std::runtime_error("checkpoint: replay label count mismatch");
  if (replay.present && replay.count > 0 && replay.image_shape.empty())
    throw std::runtime_error("checkpoint: replay manifest lacks image shape");

  std::size_t image_values =
      replay.present ? replay.count * shape_numel(replay.image_shape) : 0;
  std::size_t total = param_count + buffer_count + image_values;
  if (buf.size() != 4 + header_len + 8 * total)
    throw std::runtime_error("checkpoint: payload size mismatch");

  std::size_t off = 4 + header_len;
  auto take = [&](std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i, off += 8) v[i] = get_f64(buf, off);
    return v;
  };

  Checkpoint ck{cfg, seed, MultiHeadNet(cfg, seed), nullptr};
  ck.net.set_flat_params(take(param_count));
  ck.net.set_flat_buffers(take(buffer_count));

  if (replay.present) {
    std::vector<ReplayItem> entries;
    entries.reserve(replay.count);
    std::size_t per_image = shape_numel(replay.image_shape);
    for (std::size_t i = 0; i < replay.count; ++i)
      entries.push_back({Tensor(replay.image_shape, take(per_image)),
                         replay.labels[i]});
    ck.buffer = std::make_unique<ReplayBuffer>(replay.capacity, 0);
    ck.buffer->restore(std::move(entries), replay.seen);
    ck.buffer->set_rng_state(replay.rng);
  }
  return ck;
}

}  // namespace clab
