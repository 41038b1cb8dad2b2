#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "clab/data.hpp"
#include "clab/metrics.hpp"
#include "clab/model.hpp"
#include "clab/rng.hpp"
#include "clab/trainers.hpp"

using namespace clab;

namespace {

NetworkConfig net_for(const Dataset& ds, std::vector<std::size_t> hidden = {24},
                      std::size_t proj = 8) {
  NetworkConfig nc;
  nc.input_dim = ds.image_rows() * ds.image_cols();
  nc.hidden_dims = std::move(hidden);
  nc.num_classes = ds.num_classes;
  nc.ssl_proj_dim = proj;
  return nc;
}

}  // namespace

TEST_CASE("average accuracy is the mean of the final row") {
  AccuracyMatrix single{{{0.9}}, {0.1}};
  CHECK(average_accuracy(single) == 0.9);

  AccuracyMatrix two{{{0.5, 0.6}, {0.7, 0.8}}, {0.1, 0.1}};
  CHECK(average_accuracy(two) == 0.75);

  // Only the last row matters.
  AccuracyMatrix permuted{{{0.2, 0.1}, {0.7, 0.8}}, {0.1, 0.1}};
  CHECK(average_accuracy(permuted) == average_accuracy(two));
}

TEST_CASE("accuracy matrix validation") {
  CHECK_THROWS_AS(average_accuracy(AccuracyMatrix{{{1.2}}, {0.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(average_accuracy(AccuracyMatrix{{{0.5, 0.5}}, {0.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(average_accuracy(AccuracyMatrix{{}, {0.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(average_accuracy(AccuracyMatrix{{{0.5}}, {}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(average_accuracy(AccuracyMatrix{{{0.5}}, {-0.1}}),
                  std::invalid_argument);
}

TEST_CASE("forward transfer measures pre-training gain over the baseline") {
  AccuracyMatrix m{{{0.9, 0.15}, {0.6, 0.8}}, {0.5, 0.10}};
  CHECK(forward_transfer(m) == doctest::Approx(0.05).epsilon(1e-12));

  // Pre-task accuracy equal to the baseline everywhere cancels exactly.
  AccuracyMatrix flat{{{0.9, 0.10}, {0.6, 0.8}}, {0.5, 0.10}};
  CHECK(forward_transfer(flat) == 0.0);

  AccuracyMatrix three{{{0.9, 0.2, 0.1}, {0.6, 0.8, 0.3}, {0.4, 0.5, 0.9}},
                       {0.1, 0.1, 0.1}};
  // (0.2 - 0.1) + (0.3 - 0.1) over two transitions
  CHECK(forward_transfer(three) == doctest::Approx(0.15).epsilon(1e-12));

  CHECK_THROWS_AS(forward_transfer(AccuracyMatrix{{{0.9}}, {0.1}}),
                  std::invalid_argument);
  // Joint-style 1 x T matrix has no transition structure.
  CHECK_THROWS_AS(forward_transfer(AccuracyMatrix{{{0.9, 0.8}}, {0.1, 0.1}}),
                  std::invalid_argument);
}

TEST_CASE("backward transfer measures final drop below the historical best") {
  AccuracyMatrix m{{{0.9, 0.1}, {0.7, 0.8}}, {0.1, 0.1}};
  CHECK(backward_transfer(m) == doctest::Approx(-0.2).epsilon(1e-12));

  AccuracyMatrix stable{{{0.9, 0.1}, {0.9, 0.8}}, {0.1, 0.1}};
  CHECK(backward_transfer(stable) == 0.0);

  CHECK_THROWS_AS(backward_transfer(AccuracyMatrix{{{0.9}}, {0.1}}),
                  std::invalid_argument);
}

TEST_CASE("backward transfer is never positive") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t t = 2 + rng.uniform_index(5);
    AccuracyMatrix m;
    m.random_baseline.assign(t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> row;
      for (std::size_t j = 0; j < t; ++j) row.push_back(rng.uniform());
      m.rows.push_back(std::move(row));
    }
    REQUIRE(backward_transfer(m) <= 0.0);
  }
}

TEST_CASE("calibration error on hand-worked bins") {
  {
    std::vector<double> conf(10, 0.8);
    std::vector<bool> correct(10, false);
    for (int i = 0; i < 6; ++i) correct[i] = true;
    auto [value, bins] = ece(conf, correct);
    CHECK(value == doctest::Approx(0.2).epsilon(1e-12));
    std::size_t total = 0;
    for (std::size_t c : bins.counts) total += c;
    CHECK(total == 10);
  }
  {
    std::vector<double> conf;
    std::vector<bool> correct;
    for (int i = 0; i < 5; ++i) {
      conf.push_back(0.6);
      correct.push_back(i < 3);
    }
    for (int i = 0; i < 5; ++i) {
      conf.push_back(0.9);
      correct.push_back(true);
    }
    auto [value, bins] = ece(conf, correct);
    CHECK(value == doctest::Approx(0.05).epsilon(1e-12));
  }
  {
    std::vector<double> conf(4, 1.0);
    std::vector<bool> correct(4, true);
    auto [value, bins] = ece(conf, correct);
    CHECK(value == 0.0);
    CHECK(bins.counts[14] == 4);
  }
}

TEST_CASE("calibration bins are left-open on their lower edge") {
  // Exactly 1/15 belongs to the first bin, the next representable value above
  // it to the second.
  const double edge = 1.0 / 15.0;
  auto [v1, bins1] = ece({edge}, {true});
  CHECK(bins1.counts[0] == 1);
  auto [v2, bins2] = ece({std::nextafter(edge, 1.0)}, {true});
  CHECK(bins2.counts[1] == 1);
}

TEST_CASE("well-calibrated predictions have near-zero calibration error") {
  Rng rng(777);
  std::vector<double> conf;
  std::vector<bool> correct;
  for (int i = 0; i < 100000; ++i) {
    const double c = rng.uniform(0.05, 0.95);
    conf.push_back(c);
    correct.push_back(rng.bernoulli(c));
  }
  auto [value, bins] = ece(conf, correct);
  CHECK(value >= 0.0);
  CHECK(value <= 0.01);
}

TEST_CASE("calibration input contract") {
  CHECK_THROWS_AS(ece({0.0}, {true}), std::invalid_argument);
  CHECK_THROWS_AS(ece({1.1}, {true}), std::invalid_argument);
  CHECK_THROWS_AS(ece({0.5, 0.6}, {true}), std::invalid_argument);
  CHECK_THROWS_AS(ece({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(ece({0.5}, {true}, 0), std::invalid_argument);
}

TEST_CASE("softmax probabilities are stable and normalized") {
  Tensor logits = Tensor::matrix(2, 3, {1000.0, 999.0, 998.0, -5.0, 0.0, 5.0});
  const Tensor p = softmax_probabilities(logits);
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      REQUIRE(p.at(r, c) > 0.0);
      REQUIRE(p.at(r, c) <= 1.0);
      sum += p.at(r, c);
    }
    REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Shift invariance: both rows share the same gap pattern.
  CHECK(p.at(0, 0) == doctest::Approx(std::exp(0.0) / (1 + std::exp(-1.0) + std::exp(-2.0)))
                          .epsilon(1e-12));
  CHECK_THROWS_AS(softmax_probabilities(Tensor::vector({1.0, 2.0})),
                  std::invalid_argument);
}

TEST_CASE("prediction stats agree with task evaluation") {
  Dataset ds = synthetic_digits(3, 12, 6, 61);
  const auto stream = build_class_il(ds, 3);
  MultiHeadNet net(net_for(ds), 8);

  std::vector<double> conf;
  std::vector<bool> correct;
  prediction_stats(net, ds, stream.tasks[0], conf, correct);
  REQUIRE(conf.size() == stream.tasks[0].test_indices.size());
  REQUIRE(correct.size() == conf.size());

  double hits = 0.0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    REQUIRE(conf[i] > 0.0);
    REQUIRE(conf[i] <= 1.0);
    if (correct[i]) hits += 1.0;
  }
  CHECK(hits / double(conf.size()) == evaluate_task(net, ds, stream.tasks[0]));
}

TEST_CASE("corruption scores against a baseline") {
  const CorruptionKind a = all_corruption_kinds()[0];
  const CorruptionKind b = all_corruption_kinds()[3];

  SUBCASE("a model identical to the baseline scores exactly 100") {
    std::map<CorruptionKind, std::vector<double>> errs{
        {a, {0.2, 0.3, 0.4, 0.5, 0.6}}, {b, {0.1, 0.1, 0.2, 0.2, 0.3}}};
    const auto scores = corruption_scores(errs, errs, 0.05, 0.05);
    CHECK(scores.mce == 100.0);
    CHECK(scores.relative_mce == 100.0);
    CHECK(scores.corruption_error.at(a) == 1.0);
    CHECK(scores.relative_corruption_error.at(b) == 1.0);
  }

  SUBCASE("halving every error halves the score") {
    std::map<CorruptionKind, std::vector<double>> base{
        {a, {0.2, 0.3, 0.4, 0.5, 0.6}}, {b, {0.1, 0.1, 0.2, 0.2, 0.3}}};
    std::map<CorruptionKind, std::vector<double>> model = base;
    for (auto& [kind, errors] : model) {
      for (double& e : errors) e /= 2.0;
    }
    CHECK(corruption_scores(model, base, 0.0, 0.0).mce == 50.0);
  }

  SUBCASE("hand-worked two-kind table") {
    std::map<CorruptionKind, std::vector<double>> model{{a, {0.2, 0.4}},
                                                        {b, {0.1, 0.1}}};
    std::map<CorruptionKind, std::vector<double>> base{{a, {0.4, 0.4}},
                                                       {b, {0.2, 0.3}}};
    const auto scores = corruption_scores(model, base, 0.1, 0.2);
    CHECK(scores.corruption_error.at(a) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(scores.corruption_error.at(b) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(scores.mce == doctest::Approx(57.5).epsilon(1e-12));
    // relative: a -> (0.1+0.3)/(0.2+0.2)=1, b -> (0.0+0.0)/(0.0+0.1)=0
    CHECK(scores.relative_corruption_error.at(a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(scores.relative_corruption_error.at(b) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(scores.relative_mce == doctest::Approx(50.0).epsilon(1e-12));
  }

  SUBCASE("contract violations") {
    std::map<CorruptionKind, std::vector<double>> model{{a, {0.2, 0.4}}};
    std::map<CorruptionKind, std::vector<double>> base{{b, {0.4, 0.4}}};
    CHECK_THROWS_AS(corruption_scores(model, base, 0.0, 0.0), std::invalid_argument);

    std::map<CorruptionKind, std::vector<double>> short_base{{a, {0.4}}};
    CHECK_THROWS_AS(corruption_scores(model, short_base, 0.0, 0.0),
                    std::invalid_argument);

    std::map<CorruptionKind, std::vector<double>> zero{{a, {0.0, 0.0}}};
    CHECK_THROWS_AS(corruption_scores(model, zero, 0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(corruption_scores({}, {}, 0.0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("corruption error table covers every kind and severity") {
  Dataset ds = synthetic_digits(2, 12, 6, 67);
  const auto stream = build_class_il(ds, 2);
  MultiHeadNet net(net_for(ds), 9);

  const auto table = corruption_error_table(net, ds, stream.tasks[0], 31);
  REQUIRE(table.size() == all_corruption_kinds().size());
  for (const auto& [kind, errors] : table) {
    REQUIRE(errors.size() == 5);
    for (double e : errors) {
      REQUIRE(e >= 0.0);
      REQUIRE(e <= 1.0);
    }
  }
  CHECK(corruption_error_table(net, ds, stream.tasks[0], 31) == table);

  const double clean = clean_error(net, ds, stream.tasks[0]);
  CHECK(clean == 1.0 - evaluate_task(net, ds, stream.tasks[0]));
}

TEST_CASE("task bias distributes softmax mass across tasks") {
  const std::vector<std::size_t> map{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};

  SUBCASE("uniform predictions spread evenly") {
    Tensor probs = Tensor::full({7, 10}, 0.1);
    const auto bias = task_bias(probs, map);
    REQUIRE(bias.size() == 5);
    for (double b : bias) REQUIRE(b == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("all mass on the last task's classes") {
    Tensor probs = Tensor::zeros({3, 10});
    for (std::size_t r = 0; r < 3; ++r) probs.at(r, 8) = 1.0;
    const auto bias = task_bias(probs, map);
    CHECK(bias == std::vector<double>{0.0, 0.0, 0.0, 0.0, 1.0});
  }

  SUBCASE("contract") {
    Tensor probs = Tensor::full({2, 10}, 0.1);
    CHECK_THROWS_AS(task_bias(probs, {0, 1}), std::invalid_argument);
    Tensor neg = Tensor::full({2, 10}, 0.1);
    neg.at(0, 0) = -0.2;
    CHECK_THROWS_AS(task_bias(neg, map), std::invalid_argument);
    CHECK_THROWS_AS(task_bias(Tensor::zeros({2, 10}), map), std::domain_error);
    CHECK_THROWS_AS(task_bias(Tensor::vector({0.1}), {0}), std::invalid_argument);
  }
}

TEST_CASE("flatness probe reproduces the clean accuracy at zero noise") {
  Dataset ds = synthetic_digits(2, 12, 6, 71);
  const auto stream = build_class_il(ds, 2);
  MultiHeadNet net(net_for(ds), 11);

  const double base = mean_eval_accuracy(net, ds, stream.tasks);
  const auto curve = flat_minima_probe(net, ds, stream.tasks, {0.0, 0.05, 0.3}, 3, 7);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].sigma == 0.0);
  CHECK(curve[0].mean_accuracy == base);  // bit-exact by contract
  for (const auto& point : curve) {
    REQUIRE(point.mean_accuracy >= 0.0);
    REQUIRE(point.mean_accuracy <= 1.0);
  }

  // The probe works on a copy: the original parameters never move.
  const auto params_before = net.flat_params();
  flat_minima_probe(net, ds, stream.tasks, {1.0}, 2, 7);
  CHECK(net.flat_params() == params_before);

  const auto again = flat_minima_probe(net, ds, stream.tasks, {0.0, 0.05, 0.3}, 3, 7);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    REQUIRE(curve[i].mean_accuracy == again[i].mean_accuracy);
  }

  CHECK_THROWS_AS(flat_minima_probe(net, ds, stream.tasks, {0.1}, 0, 7),
                  std::invalid_argument);
  CHECK_THROWS_AS(flat_minima_probe(net, ds, stream.tasks, {-0.1}, 1, 7),
                  std::invalid_argument);
  CHECK_THROWS_AS(mean_eval_accuracy(net, ds, {}), std::invalid_argument);
}

TEST_CASE("heavy parameter noise pushes a trained model toward chance") {
  Dataset ds = synthetic_digits(2, 24, 6, 73);
  const auto stream = build_class_il(ds, 2);
  const NetworkConfig nc = net_for(ds);

  TrainConfig cfg;
  cfg.budget_epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 5e-3;
  cfg.augment = false;
  cfg.seed = 3;

  auto res = run_experiment(MethodSpec::parse("joint"), ds, stream, nc, cfg);
  const double trained = mean_eval_accuracy(res.net, ds, stream.tasks);
  CHECK(trained > 0.8);

  const auto curve = flat_minima_probe(res.net, ds, stream.tasks, {0.0, 8.0}, 4, 11);
  CHECK(curve[0].mean_accuracy == trained);
  CHECK(curve[1].mean_accuracy < trained - 0.2);
}

TEST_CASE("noisy-label probe trains a fresh head on frozen features") {
  Dataset ds = synthetic_digits(4, 30, 6, 79);
  const auto stream = build_class_il(ds, 4);
  const NetworkConfig nc = net_for(ds);

  TrainConfig cfg;
  cfg.budget_epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 5e-3;
  cfg.augment = false;
  cfg.seed = 5;
  auto res = run_experiment(MethodSpec::parse("joint"), ds, stream, nc, cfg);

  TrainConfig probe_cfg;
  probe_cfg.learning_rate = 0.05;
  probe_cfg.batch_size = 16;
  probe_cfg.seed = 9;

  const auto params_before = res.net.flat_params();
  const auto curve = noisy_label_probe(res.net, ds, {0.0, 1.0}, probe_cfg);
  CHECK(res.net.flat_params() == params_before);

  REQUIRE(curve.size() == 2);
  CHECK(curve[0].rate == 0.0);
  for (const auto& point : curve) {
    REQUIRE(point.accuracy >= 0.0);
    REQUIRE(point.accuracy <= 1.0);
  }
  // Clean labels beat fully resampled ones on a trained backbone.
  CHECK(curve[0].accuracy > 0.7);
  CHECK(curve[0].accuracy > curve[1].accuracy + 0.2);

  const auto again = noisy_label_probe(res.net, ds, {0.0, 1.0}, probe_cfg);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    REQUIRE(curve[i].accuracy == again[i].accuracy);
  }

  CHECK_THROWS_AS(noisy_label_probe(res.net, ds, {-0.1}, probe_cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(noisy_label_probe(res.net, ds, {1.2}, probe_cfg),
                  std::invalid_argument);
}
