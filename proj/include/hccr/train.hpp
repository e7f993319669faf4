#ifndef HCCR_TRAIN_HPP
#define HCCR_TRAIN_HPP

#include <optional>
#include <string>
#include <vector>

#include "hccr/losses.hpp"
#include "hccr/model.hpp"
#include "hccr/pack.hpp"
#include "hccr/sampler.hpp"

namespace hccr {

/// Batch-construction parameters. Zero means "the variant's full-scale
/// default": uniform 200 / pairs 90x2 / groups 5x40.
struct SamplerConfig {
  std::int64_t batch_size = 0;         // uniform (variant A)
  std::int64_t classes_per_batch = 0;  // pairs (B) / groups (C)
  std::int64_t samples_per_class = 0;  // groups (C)
};

struct TrainConfig {
  LossVariant variant;
  SamplerConfig sampler;
  ModelConfig model;  // num_classes must equal the pack's class count
  double learning_rate = 0.01;
  std::int64_t steps = 500;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 50;  // 0 disables in-loop evaluation
  /// When > 0, stop once the trailing-20-step mean of the cross-entropy
  /// component drops below this value (never later than `steps`). The CE
  /// component tracks classification convergence for every variant; the
  /// similarity terms have their own floor.
  double early_stop_loss = 0.0;
  std::string pack_path;
  std::string heldout_path;    // optional; eval lines switch to it when set
  std::string checkpoint_out;  // optional
  std::string metrics_out;     // optional
};

struct StepRecord {
  std::int64_t step = 0;
  double total_loss = 0.0;
  double ce_loss = 0.0;
  double sim_loss = 0.0;
  double wall_seconds = 0.0;  // in-memory only, not part of the metrics file
  std::optional<double> recognition_rate;
};

struct TrainResult {
  std::vector<StepRecord> history;
  ModelParams params;
  std::int64_t steps_run = 0;
};

/// w <- w - lr * w.grad for every parameter tensor. Plain SGD, no momentum.
void sgd_step(ModelParams& params, double learning_rate);

/// Pack samples -> N x 1 x 128 x 128 input tensor.
Tensor assemble_images(const DatasetPack& pack, std::span<const std::int64_t> indices);

/// Fraction of pack samples whose argmax logit (eval-mode forward, ties to
/// the lowest class index) equals the true label.
double evaluate(const ModelParams& params, const DatasetPack& pack);

/// Sample -> forward -> combined loss -> backward -> SGD, single-threaded and
/// fully deterministic given the seed. Configuration problems (missing pack,
/// variant/sampler mismatch, undersized pack) surface before step 0.
TrainResult train_on(const TrainConfig& config, const DatasetPack& pack,
                     const DatasetPack* heldout);

/// Same, loading the pack(s) from config paths and writing the metrics file
/// and checkpoint when paths are set.
TrainResult train(const TrainConfig& config);

/// The five fixed metrics fields as one JSON line per record.
std::string metrics_to_jsonl(const std::vector<StepRecord>& history);

}  // namespace hccr

#endif
