#ifndef HCCR_MODEL_HPP
#define HCCR_MODEL_HPP

#include <string>
#include <utility>
#include <vector>

#include "hccr/ops.hpp"
#include "hccr/rng.hpp"
#include "hccr/tensor.hpp"

namespace hccr {

/// Geometry and hyperparameters of the conv/pool trunk, the FC stack, and the
/// classifier head. One 2x2/stride-2 pool follows every conv, so input_size
/// must be divisible by 2^len(conv_channels).
struct ModelConfig {
  std::int64_t input_size = 128;
  std::int64_t in_channels = 1;
  std::vector<std::int64_t> conv_channels = {32, 64, 128, 256, 256, 512};
  std::int64_t kernel_size = 3;
  std::int64_t conv_stride = 1;
  std::int64_t conv_padding = 1;
  std::vector<std::int64_t> fc_widths = {1024, 1024};
  double dropout_prob = 0.25;
  std::int64_t num_classes = 300;
  double leaky_slope = 0.01;

  void validate() const;  // throws ConfigError
  std::int64_t final_spatial() const;  // side length after all pools
  std::int64_t flatten_width() const;
  std::uint64_t digest() const;
};

/// All learnable tensors, in a fixed order: convN.kernel/convN.bias (1-based),
/// fcN.weight/fcN.bias, head.weight/head.bias. Every tensor requires grad.
struct ModelParams {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> named;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void zero_grad();
  std::int64_t total_size() const;
};

/// He-normal initialization (sd = sqrt(2/fan_in)), zero biases, deterministic
/// draw order given the stream.
ModelParams build_model(const ModelConfig& config, RngStream& rng);

std::int64_t param_count(const ModelConfig& config);

enum class ForwardMode { kTrain, kEval };

struct ForwardResult {
  Tensor logits;    // N x num_classes
  Tensor features;  // N x fc_widths.back(), pre-dropout, pre-head
};

/// Per stage: conv(3x3, stride 1, pad 1) -> leaky_relu -> maxpool(2x2); then
/// flatten and for each FC width: linear -> leaky_relu -> dropout. Features
/// are the last activation before that final dropout; the head is a plain
/// linear layer on the dropped-out activations. Eval mode makes dropout the
/// identity (rng untouched).
ForwardResult forward(Tape& tape, const ModelParams& params, const Tensor& images,
                      ForwardMode mode, RngStream& rng);

/// Named-tensor checkpoint: magic "HZCK" | version u16 | config digest u64 |
/// tensor count u32 | per tensor: name (u16 length + bytes), rank u16,
/// extents i64 each, then f64 data. Little-endian.
void save_checkpoint(const ModelParams& params, const std::string& path);

/// Rebuilds params for `config`; throws ConfigError when the stored digest
/// does not match and FormatError on a malformed file.
ModelParams load_checkpoint(const std::string& path, const ModelConfig& config);

}  // namespace hccr

#endif
