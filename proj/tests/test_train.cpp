#include "hccr/train.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "hccr/gnt.hpp"

using namespace hccr;

namespace {

class TempDir {
 public:
  TempDir() {
    dir_ = std::filesystem::temp_directory_path() /
           ("hccr_train_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path dir_;
};

/// Thin-channel stand-in for the full trunk: same depth, same 128 input, far
/// fewer filters, so unit runs stay fast.
ModelConfig thin_model(std::int64_t classes) {
  ModelConfig cfg;
  cfg.conv_channels = {2, 2, 4, 4, 4, 8};
  cfg.fc_widths = {16, 16};
  cfg.num_classes = classes;
  return cfg;
}

ModelParams zero_params(const ModelConfig& cfg) {
  RngStream rng(0);
  ModelParams params = build_model(cfg, rng);
  for (auto& [name, t] : params.named) {
    std::fill(t.data().begin(), t.data().end(), 0.0);
  }
  return params;
}

DatasetPack labeled_pack(const std::vector<std::int64_t>& labels, std::int64_t classes) {
  std::vector<PreprocessedSample> samples;
  RngStream rng(17);
  for (const std::int64_t label : labels) {
    PreprocessedSample s;
    s.label = label;
    s.image.resize(kCanvasPixels);
    for (double& v : s.image) v = rng.uniform();
    samples.push_back(std::move(s));
  }
  std::vector<std::uint16_t> table(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = static_cast<std::uint16_t>(i + 1);
  return pack_from_samples(samples, table);
}

}  // namespace

TEST(SgdStep, ZeroRateLeavesParamsUnchanged) {
  ModelParams params;
  Tensor w({2}, {1.0, -2.0});
  w.set_requires_grad(true);
  w.grad()[0] = 3.0;
  w.grad()[1] = -1.0;
  params.named.emplace_back("w", w);
  sgd_step(params, 0.0);
  EXPECT_DOUBLE_EQ(params.at("w").data()[0], 1.0);
  EXPECT_DOUBLE_EQ(params.at("w").data()[1], -2.0);
}

TEST(SgdStep, UpdateRuleArithmetic) {
  ModelParams params;
  Tensor w({1}, {1.0});
  w.set_requires_grad(true);
  w.grad()[0] = 2.0;
  params.named.emplace_back("w", w);
  sgd_step(params, 0.1);
  EXPECT_DOUBLE_EQ(params.at("w").data()[0], 0.8);  // 1 - 0.1*2
}

TEST(SgdStep, QuadraticDescends) {
  // f(w) = w^2, w0 = 1, lr = 0.1: one step lands on 0.8 and f decreases
  ModelParams params;
  Tensor w({1}, {1.0});
  w.set_requires_grad(true);
  params.named.emplace_back("w", w);
  Tape tape;
  Tensor loss = reduce_sum(tape, square(tape, params.at("w")));
  const double f0 = loss.item();
  backward(loss, tape);
  sgd_step(params, 0.1);
  EXPECT_DOUBLE_EQ(params.at("w").data()[0], 0.8);
  Tape tape2;
  EXPECT_LT(reduce_sum(tape2, square(tape2, params.at("w"))).item(), f0);
}

TEST(Evaluate, CountingAndTieBreak) {
  // all-zero params give all-zero logits; the argmax tie-break picks class 0
  const ModelConfig cfg = thin_model(2);
  const ModelParams params = zero_params(cfg);

  const DatasetPack all_zero = labeled_pack({0, 0, 0, 0}, 2);
  EXPECT_DOUBLE_EQ(evaluate(params, all_zero), 1.0);

  const DatasetPack three_of_four = labeled_pack({0, 0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(evaluate(params, three_of_four), 0.75);

  const DatasetPack half = labeled_pack({0, 1, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(evaluate(params, half), 0.5);
}

TEST(Evaluate, OrderPermutationInvariant) {
  const ModelConfig cfg = thin_model(3);
  RngStream rng(21);
  const ModelParams params = build_model(cfg, rng);
  const DatasetPack pack = labeled_pack({0, 1, 2, 0, 1, 2, 1}, 3);
  // same multiset of (image, label) pairs in a different order
  std::vector<PreprocessedSample> samples;
  for (const std::int64_t i : {std::int64_t{6}, std::int64_t{2}, std::int64_t{0}, std::int64_t{4},
                               std::int64_t{5}, std::int64_t{1}, std::int64_t{3}}) {
    PreprocessedSample s;
    s.label = pack.label(i);
    s.image.resize(kCanvasPixels);
    pack.decode_image(i, s.image.data());
    samples.push_back(std::move(s));
  }
  const DatasetPack permuted = pack_from_samples(samples, pack.label_table());
  EXPECT_DOUBLE_EQ(evaluate(params, pack), evaluate(params, permuted));
}

TEST(Evaluate, ClassCountMismatchThrows) {
  const ModelParams params = zero_params(thin_model(3));
  const DatasetPack pack = labeled_pack({0, 1}, 2);
  EXPECT_THROW(evaluate(params, pack), ConfigError);
}

TEST(Train, ZeroStepsCheckpointEqualsInitialization) {
  TempDir tmp;
  const DatasetPack pack = synth_dataset(3, 2, 5);
  TrainConfig tc;
  tc.variant.kind = LossKind::kSoftmaxOnly;
  tc.model = thin_model(3);
  tc.steps = 0;
  tc.seed = 11;
  tc.checkpoint_out = tmp.path("init.ckpt");
  const TrainResult result = train_on(tc, pack, nullptr);
  EXPECT_EQ(result.steps_run, 0);
  EXPECT_TRUE(result.history.empty());

  RngStream init = RngStream(11).fork(1);
  const ModelParams expected = build_model(tc.model, init);
  const ModelParams loaded = load_checkpoint(tmp.path("init.ckpt"), tc.model);
  for (std::size_t i = 0; i < expected.named.size(); ++i) {
    for (std::int64_t j = 0; j < expected.named[i].second.size(); ++j) {
      ASSERT_EQ(loaded.named[i].second.data()[j], expected.named[i].second.data()[j]);
    }
  }
}

TEST(Train, ConfigErrorsBeforeStepZero) {
  const DatasetPack pack = synth_dataset(3, 3, 6);
  TrainConfig tc;
  tc.model = thin_model(3);

  // pairs sampler wants 90 classes by default; the pack has 3
  tc.variant.kind = LossKind::kSoftmaxPlusEuclidean;
  try {
    train_on(tc, pack, nullptr);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("90"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("classes-per-batch"), std::string::npos);
  }

  // head/classes mismatch
  TrainConfig tc2;
  tc2.variant.kind = LossKind::kSoftmaxOnly;
  tc2.model = thin_model(5);
  EXPECT_THROW(train_on(tc2, pack, nullptr), ConfigError);

  // missing pack file
  TrainConfig tc3;
  tc3.model = thin_model(3);
  tc3.pack_path = "/nonexistent/p.pack";
  EXPECT_THROW(train(tc3), ConfigError);
}

TEST(Train, DeterministicMetricsAndCheckpointBytes) {
  TempDir tmp;
  synth_dataset(3, 4, 9).write(tmp.path("train.pack"));

  auto run = [&](const std::string& suffix) {
    TrainConfig tc;
    tc.variant.kind = LossKind::kSoftmaxPlusEuclidean;
    tc.variant.lambda = 0.5;
    tc.sampler.classes_per_batch = 3;
    tc.model = thin_model(3);
    tc.steps = 4;
    tc.seed = 77;
    tc.eval_every = 2;
    tc.pack_path = tmp.path("train.pack");
    tc.checkpoint_out = tmp.path("ckpt" + suffix);
    tc.metrics_out = tmp.path("metrics" + suffix);
    return train(tc);
  };
  run("_a");
  run("_b");
  EXPECT_EQ(read_file_bytes(tmp.path("metrics_a")), read_file_bytes(tmp.path("metrics_b")));
  EXPECT_EQ(read_file_bytes(tmp.path("ckpt_a")), read_file_bytes(tmp.path("ckpt_b")));
}

TEST(Train, MetricsFileShapeAndComponentSum) {
  TempDir tmp;
  synth_dataset(3, 4, 10).write(tmp.path("t.pack"));
  TrainConfig tc;
  tc.variant.kind = LossKind::kSoftmaxPlusVariance;
  tc.variant.lambda = 1.25;
  tc.sampler.classes_per_batch = 2;
  tc.sampler.samples_per_class = 3;
  tc.model = thin_model(3);
  tc.steps = 3;
  tc.eval_every = 3;
  tc.pack_path = tmp.path("t.pack");
  tc.metrics_out = tmp.path("m.jsonl");
  train(tc);

  const auto bytes = read_file_bytes(tmp.path("m.jsonl"));
  const std::string text(bytes.begin(), bytes.end());
  std::size_t lines = 0, eval_lines = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    ASSERT_NE(end, std::string::npos);
    const auto j = nlohmann::json::parse(text.substr(pos, end - pos));
    ASSERT_TRUE(j.contains("step"));
    ASSERT_TRUE(j.contains("total_loss"));
    ASSERT_TRUE(j.contains("ce_loss"));
    ASSERT_TRUE(j.contains("sim_loss"));
    EXPECT_NEAR(j["ce_loss"].get<double>() + tc.variant.lambda * j["sim_loss"].get<double>(),
                j["total_loss"].get<double>(), 1e-9);
    if (j.contains("recognition_rate")) {
      ++eval_lines;
      const double r = j["recognition_rate"].get<double>();
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
    ++lines;
    pos = end + 1;
  }
  EXPECT_EQ(lines, 3u);
  EXPECT_EQ(eval_lines, 1u);
}

TEST(Train, LossDecreasesOnThinModel) {
  // smoke-sized version of the loss-decrease property; the acceptance suite
  // runs the full-width network
  const DatasetPack pack = synth_dataset(4, 10, 7);
  for (const LossKind kind : {LossKind::kSoftmaxOnly, LossKind::kSoftmaxPlusEuclidean,
                              LossKind::kSoftmaxPlusVariance}) {
    TrainConfig tc;
    tc.variant.kind = kind;
    tc.sampler.batch_size = 8;
    tc.sampler.classes_per_batch = kind == LossKind::kSoftmaxPlusVariance ? 2 : 4;
    tc.sampler.samples_per_class = 4;
    tc.model = thin_model(4);
    tc.steps = 120;
    tc.seed = 3;
    tc.eval_every = 0;
    tc.learning_rate = 0.05;
    const TrainResult result = train_on(tc, pack, nullptr);
    auto window_mean = [&](std::int64_t center_end) {
      double mean = 0.0;
      for (std::int64_t s = center_end - 20; s < center_end; ++s) {
        mean += result.history[static_cast<std::size_t>(s)].total_loss;
      }
      return mean / 20.0;
    };
    EXPECT_LT(window_mean(120), window_mean(30)) << "variant " << static_cast<int>(kind);
  }
}

TEST(Train, EarlyStopRespectsThreshold) {
  const DatasetPack pack = synth_dataset(3, 6, 4);
  TrainConfig tc;
  tc.variant.kind = LossKind::kSoftmaxOnly;
  tc.sampler.batch_size = 6;
  tc.model = thin_model(3);
  tc.steps = 400;
  tc.seed = 5;
  tc.eval_every = 0;
  tc.learning_rate = 0.05;
  tc.early_stop_loss = 1.5;  // generous threshold so the stop triggers quickly
  const TrainResult result = train_on(tc, pack, nullptr);
  EXPECT_LT(result.steps_run, 400);
  // the final record carries an evaluation
  ASSERT_FALSE(result.history.empty());
  EXPECT_TRUE(result.history.back().recognition_rate.has_value());
}
