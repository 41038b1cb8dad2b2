#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clab/checkpoint.hpp"
#include "clab/data.hpp"
#include "clab/trainers.hpp"

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_raw(const std::string& path, const std::string& header,
               const std::string& payload = "") {
  std::string blob;
  auto len = std::uint32_t(header.size());
  for (int i = 0; i < 4; ++i) blob.push_back(char((len >> (8 * i)) & 0xff));
  blob += header;
  blob += payload;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(blob.data(), std::streamsize(blob.size()));
}

// Small trained state with live batch-norm statistics and a non-empty buffer.
clab::RunResult trained_run() {
  clab::Dataset ds = clab::synthetic_digits(4, 10, 8, 7);
  clab::ScenarioStream stream = clab::build_class_il(ds, 2);
  clab::NetworkConfig net_cfg;
  net_cfg.input_dim = 64;
  net_cfg.hidden_dims = {16};
  net_cfg.num_classes = 4;
  net_cfg.ssl_proj_dim = 8;
  clab::TrainConfig tc;
  tc.budget_epochs = 2;
  tc.batch_size = 10;
  tc.buffer_capacity = 6;
  tc.seed = 21;
  return clab::run_experiment(clab::MethodSpec::parse("er+tarc"), ds, stream,
                              net_cfg, tc);
}

}  // namespace

TEST_CASE("round trip restores evaluation outputs bit for bit") {
  clab::RunResult run = trained_run();
  const std::string path = temp_path("clab_ckpt_roundtrip.bin");
  clab::save_checkpoint(path, run.net, 21, run.buffer.get());

  clab::Checkpoint ck = clab::load_checkpoint(path);
  CHECK(ck.seed == 21);
  CHECK(ck.network.input_dim == 64);
  CHECK(ck.network.hidden_dims == std::vector<std::size_t>{16});
  CHECK(ck.network.num_classes == 4);
  CHECK(ck.network.ssl_proj_dim == 8);

  CHECK(ck.net.flat_params() == run.net.flat_params());
  CHECK(ck.net.flat_buffers() == run.net.flat_buffers());

  clab::Dataset ds = clab::synthetic_digits(4, 10, 8, 7);
  clab::ScenarioStream stream = clab::build_class_il(ds, 2);
  for (const clab::TaskSpec& task : stream.tasks) {
    clab::Tensor x = clab::materialize_inputs(ds, task, task.test_indices);
    CHECK(ck.net.class_logits(x).data == run.net.class_logits(x).data);
    CHECK(ck.net.embeddings(x).data == run.net.embeddings(x).data);
    CHECK(ck.net.rot_logits(x).data == run.net.rot_logits(x).data);
    CHECK(ck.net.features(x).data == run.net.features(x).data);
  }
}

TEST_CASE("replay buffer round trip preserves contents and draw stream") {
  clab::RunResult run = trained_run();
  REQUIRE(run.buffer != nullptr);
  REQUIRE(run.buffer->size() > 0);
  const std::string path = temp_path("clab_ckpt_buffer.bin");
  clab::save_checkpoint(path, run.net, 21, run.buffer.get());

  clab::Checkpoint ck = clab::load_checkpoint(path);
  REQUIRE(ck.buffer != nullptr);
  CHECK(ck.buffer->capacity() == run.buffer->capacity());
  CHECK(ck.buffer->size() == run.buffer->size());
  CHECK(ck.buffer->seen_count() == run.buffer->seen_count());
  for (std::size_t i = 0; i < run.buffer->size(); ++i) {
    CHECK(ck.buffer->entries()[i].label == run.buffer->entries()[i].label);
    CHECK(ck.buffer->entries()[i].image.shape ==
          run.buffer->entries()[i].image.shape);
    CHECK(ck.buffer->entries()[i].image.data ==
          run.buffer->entries()[i].image.data);
  }

  // The reservoir stream must continue identically after the restore.
  clab::Tensor probe = clab::Tensor::full({8, 8}, 0.25);
  for (std::size_t i = 0; i < 40; ++i) {
    run.buffer->insert(probe, i % 4);
    ck.buffer->insert(probe, i % 4);
  }
  CHECK(ck.buffer->size() == run.buffer->size());
  for (std::size_t i = 0; i < run.buffer->size(); ++i)
    CHECK(ck.buffer->entries()[i].image.data ==
          run.buffer->entries()[i].image.data);
}

TEST_CASE("saving a loaded checkpoint reproduces the file byte for byte") {
  clab::RunResult run = trained_run();
  const std::string a = temp_path("clab_ckpt_stable_a.bin");
  const std::string b = temp_path("clab_ckpt_stable_b.bin");
  clab::save_checkpoint(a, run.net, 21, run.buffer.get());
  clab::Checkpoint ck = clab::load_checkpoint(a);
  clab::save_checkpoint(b, ck.net, ck.seed, ck.buffer.get());
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("checkpoint without a buffer loads with a null buffer") {
  clab::NetworkConfig cfg;
  cfg.input_dim = 9;
  cfg.hidden_dims = {5};
  cfg.num_classes = 3;
  cfg.ssl_proj_dim = 4;
  clab::MultiHeadNet net(cfg, 5);
  const std::string path = temp_path("clab_ckpt_nobuf.bin");
  clab::save_checkpoint(path, net, 5);

  clab::Checkpoint ck = clab::load_checkpoint(path);
  CHECK(ck.buffer == nullptr);
  CHECK(ck.net.flat_params() == net.flat_params());
}

TEST_CASE("malformed checkpoint files are rejected") {
  const std::string path = temp_path("clab_ckpt_bad.bin");

  SUBCASE("missing file") {
    CHECK_THROWS_AS(clab::load_checkpoint(temp_path("clab_ckpt_absent.bin")),
                    std::runtime_error);
  }
  SUBCASE("shorter than the length prefix") {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << "ab";
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("header is not json") {
    write_raw(path, "not json at all");
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("wrong format tag") {
    write_raw(path, R"({"format":"something-else","version":1})");
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("unsupported version") {
    write_raw(path, R"({"format":"clab-checkpoint","version":2})");
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("header fields missing") {
    write_raw(path, R"({"format":"clab-checkpoint","version":1})");
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    clab::NetworkConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {3};
    cfg.num_classes = 2;
    cfg.ssl_proj_dim = 2;
    clab::MultiHeadNet net(cfg, 1);
    clab::save_checkpoint(path, net, 1);
    std::string blob = slurp(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), std::streamsize(blob.size() - 5));
    out.close();
    CHECK_THROWS_AS(clab::load_checkpoint(path), std::runtime_error);
  }
}
