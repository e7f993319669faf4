#include "hccr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "hccr/gnt.hpp"  // file io helpers

namespace hccr {

namespace {

constexpr std::int64_t kEvalBatch = 16;
constexpr double kComponentSumTol = 1e-9;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::int64_t argmax_row(const double* row, std::int64_t k) {
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;  // ties keep the lowest index
  }
  return best;
}

struct ResolvedSampler {
  std::int64_t batch_size = 0;
  std::int64_t classes_per_batch = 0;
  std::int64_t samples_per_class = 0;
};

ResolvedSampler resolve_sampler(const TrainConfig& config, const DatasetPack& pack) {
  ResolvedSampler r;
  switch (config.variant.kind) {
    case LossKind::kSoftmaxOnly:
      r.batch_size = config.sampler.batch_size > 0 ? config.sampler.batch_size : 200;
      break;
    case LossKind::kSoftmaxPlusEuclidean:
      r.classes_per_batch =
          config.sampler.classes_per_batch > 0 ? config.sampler.classes_per_batch : 90;
      if (pack.num_classes() < r.classes_per_batch) {
        throw ConfigError("pairs sampler needs " + std::to_string(r.classes_per_batch) +
                          " classes but the pack has " + std::to_string(pack.num_classes()) +
                          " (short by " +
                          std::to_string(r.classes_per_batch - pack.num_classes()) +
                          "); lower --classes-per-batch");
      }
      break;
    case LossKind::kSoftmaxPlusVariance:
      r.classes_per_batch =
          config.sampler.classes_per_batch > 0 ? config.sampler.classes_per_batch : 5;
      r.samples_per_class =
          config.sampler.samples_per_class > 0 ? config.sampler.samples_per_class : 40;
      if (pack.num_classes() < r.classes_per_batch) {
        throw ConfigError("groups sampler needs " + std::to_string(r.classes_per_batch) +
                          " classes but the pack has " + std::to_string(pack.num_classes()) +
                          " (short by " +
                          std::to_string(r.classes_per_batch - pack.num_classes()) +
                          "); lower --classes-per-batch");
      }
      break;
  }
  return r;
}

}  // namespace

void sgd_step(ModelParams& params, double learning_rate) {
  for (auto& [name, t] : params.named) {
    if (t.grad().size() != static_cast<std::size_t>(t.size())) {
      throw ShapeError("sgd_step: gradient shape mismatch for " + name);
    }
    double* w = t.data().data();
    const auto g = t.grad();
    for (std::int64_t i = 0; i < t.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

Tensor assemble_images(const DatasetPack& pack, std::span<const std::int64_t> indices) {
  const auto n = static_cast<std::int64_t>(indices.size());
  std::vector<double> data = detail::take_buffer(static_cast<std::size_t>(n) * kCanvasPixels);
  for (std::int64_t i = 0; i < n; ++i) {
    pack.decode_image(indices[i], data.data() + static_cast<std::size_t>(i) * kCanvasPixels);
  }
  return Tensor({n, 1, kCanvas, kCanvas}, std::move(data));
}

double evaluate(const ModelParams& params, const DatasetPack& pack) {
  if (pack.num_classes() != params.config.num_classes) {
    throw ConfigError("evaluate: pack has " + std::to_string(pack.num_classes()) +
                      " classes but the model head has " +
                      std::to_string(params.config.num_classes));
  }
  if (pack.size() == 0) throw DataError("evaluate: pack is empty");
  RngStream unused(0);
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < pack.size(); start += kEvalBatch) {
    const std::int64_t n = std::min(kEvalBatch, pack.size() - start);
    std::vector<std::int64_t> indices(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) indices[i] = start + i;
    Tape tape(false);
    const ForwardResult out =
        forward(tape, params, assemble_images(pack, indices), ForwardMode::kEval, unused);
    const std::int64_t k = out.logits.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t pred = argmax_row(out.logits.data().data() + i * k, k);
      if (pred == pack.label(start + i)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pack.size());
}

TrainResult train_on(const TrainConfig& config, const DatasetPack& pack,
                     const DatasetPack* heldout) {
  if (config.steps < 0) throw ConfigError("train: steps must be >= 0");
  if (config.learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");
  config.model.validate();
  if (config.model.input_size != kCanvas || config.model.in_channels != 1) {
    throw ConfigError("train: pack samples are 1 x 128 x 128; model input must match");
  }
  if (pack.size() == 0) throw ConfigError("train: pack is empty");
  if (config.model.num_classes != pack.num_classes()) {
    throw ConfigError("train: model head has " + std::to_string(config.model.num_classes) +
                      " classes but the pack has " + std::to_string(pack.num_classes()));
  }
  if (heldout && heldout->num_classes() != pack.num_classes()) {
    throw ConfigError("train: held-out pack class count differs from the training pack");
  }
  const ResolvedSampler sampler = resolve_sampler(config, pack);

  const RngStream root(config.seed);
  RngStream init_rng = root.fork(1);
  RngStream sample_rng = root.fork(2);
  RngStream dropout_rng = root.fork(3);

  TrainResult result;
  result.params = build_model(config.model, init_rng);

  const double t0 = now_seconds();
  std::vector<double> recent;  // trailing window for early stop
  for (std::int64_t step = 1; step <= config.steps; ++step) {
    Batch batch;
    switch (config.variant.kind) {
      case LossKind::kSoftmaxOnly:
        batch = sample_uniform(pack, sampler.batch_size, sample_rng);
        break;
      case LossKind::kSoftmaxPlusEuclidean:
        batch = sample_class_pairs(pack, sampler.classes_per_batch, sample_rng);
        break;
      case LossKind::kSoftmaxPlusVariance:
        batch = sample_class_groups(pack, sampler.classes_per_batch, sampler.samples_per_class,
                                    sample_rng);
        break;
    }

    Tape tape;
    const ForwardResult out = forward(tape, result.params, assemble_images(pack, batch.sample_indices),
                                      ForwardMode::kTrain, dropout_rng);
    const LossBreakdown loss = combined_loss(tape, config.variant, out.logits, out.features,
                                             batch.labels, batch.structure);
    backward(loss.total, tape);
    sgd_step(result.params, config.learning_rate);
    result.params.zero_grad();

    StepRecord rec;
    rec.step = step;
    rec.total_loss = loss.total.item();
    rec.ce_loss = loss.ce;
    rec.sim_loss = loss.similarity;
    rec.wall_seconds = now_seconds() - t0;
    if (std::abs(rec.ce_loss + config.variant.lambda * rec.sim_loss - rec.total_loss) >
        kComponentSumTol) {
      throw Error("metrics invariant violated: ce + lambda*sim != total");
    }

    bool stop = false;
    if (config.early_stop_loss > 0.0) {
      recent.push_back(rec.ce_loss);
      if (recent.size() > 20) recent.erase(recent.begin());
      if (recent.size() == 20) {
        double mean = 0.0;
        for (double v : recent) mean += v;
        mean /= 20.0;
        stop = mean < config.early_stop_loss;
      }
    }
    const bool last = stop || step == config.steps;
    if ((config.eval_every > 0 && step % config.eval_every == 0) || last) {
      rec.recognition_rate = evaluate(result.params, heldout ? *heldout : pack);
    }
    result.history.push_back(rec);
    result.steps_run = step;
    if (stop) break;
  }

  if (!config.checkpoint_out.empty()) save_checkpoint(result.params, config.checkpoint_out);
  if (!config.metrics_out.empty()) {
    const std::string text = metrics_to_jsonl(result.history);
    write_file_bytes(config.metrics_out,
                     {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }
  return result;
}

TrainResult train(const TrainConfig& config) {
  if (!std::filesystem::exists(config.pack_path)) {
    throw ConfigError("train: pack not found: " + config.pack_path);
  }
  const DatasetPack pack = pack_read(config.pack_path);
  std::optional<DatasetPack> heldout;
  if (!config.heldout_path.empty()) {
    if (!std::filesystem::exists(config.heldout_path)) {
      throw ConfigError("train: held-out pack not found: " + config.heldout_path);
    }
    heldout = pack_read(config.heldout_path);
  }
  return train_on(config, pack, heldout ? &*heldout : nullptr);
}

std::string metrics_to_jsonl(const std::vector<StepRecord>& history) {
  std::string out;
  for (const StepRecord& rec : history) {
    nlohmann::json j;
    j["step"] = rec.step;
    j["total_loss"] = rec.total_loss;
    j["ce_loss"] = rec.ce_loss;
    j["sim_loss"] = rec.sim_loss;
    if (rec.recognition_rate) j["recognition_rate"] = *rec.recognition_rate;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace hccr
