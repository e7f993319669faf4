#include "hccr/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "hccr/gnt.hpp"  // file io helpers

namespace hccr {

namespace {

constexpr char kMagic[4] = {'H', 'Z', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 1 || in_channels < 1) throw ConfigError("model: bad input geometry");
  if (conv_channels.empty()) throw ConfigError("model: need at least one conv stage");
  if (fc_widths.empty()) throw ConfigError("model: need at least one FC layer");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (kernel_size < 1 || conv_stride != 1 || conv_padding < 0) {
    throw ConfigError("model: conv stages are stride-1 with non-negative padding");
  }
  if (dropout_prob < 0.0 || dropout_prob >= 1.0) throw ConfigError("model: dropout_prob in [0,1)");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0) throw ConfigError("model: leaky_slope in [0,1)");
  std::int64_t side = input_size;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (conv_channels[i] < 1) throw ConfigError("model: conv channel count must be >= 1");
    const std::int64_t conv_out = side + 2 * conv_padding - kernel_size + 1;
    if (conv_out < 1) throw ConfigError("model: kernel larger than stage input");
    if (conv_out % 2 != 0) {
      throw ConfigError("model: stage " + std::to_string(i + 1) + " spatial size " +
                        std::to_string(conv_out) + " is not poolable; input_size must be "
                        "divisible by 2^" + std::to_string(conv_channels.size()));
    }
    side = conv_out / 2;
  }
  for (std::int64_t wdt : fc_widths) {
    if (wdt < 1) throw ConfigError("model: FC width must be >= 1");
  }
}

std::int64_t ModelConfig::final_spatial() const {
  std::int64_t side = input_size;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    side = (side + 2 * conv_padding - kernel_size + 1) / 2;
  }
  return side;
}

std::int64_t ModelConfig::flatten_width() const {
  const std::int64_t side = final_spatial();
  return conv_channels.back() * side * side;
}

std::uint64_t ModelConfig::digest() const {
  std::ostringstream os;
  os << "input=" << input_size << ";in_ch=" << in_channels << ";conv=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i) os << (i ? "," : "") << conv_channels[i];
  os << ";k=" << kernel_size << ";s=" << conv_stride << ";p=" << conv_padding << ";fc=";
  for (std::size_t i = 0; i < fc_widths.size(); ++i) os << (i ? "," : "") << fc_widths[i];
  os << ";drop=" << fmt_double(dropout_prob) << ";classes=" << num_classes
     << ";slope=" << fmt_double(leaky_slope);
  return fnv1a(os.str());
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : named) {
    if (n == name) return t;
  }
  throw ConfigError("model has no parameter named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : named) {
    if (n == name) return t;
  }
  throw ConfigError("model has no parameter named " + name);
}

void ModelParams::zero_grad() {
  for (auto& [n, t] : named) t.zero_grad();
}

std::int64_t ModelParams::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : named) n += t.size();
  return n;
}

namespace {

Tensor he_normal(const Shape& shape, std::int64_t fan_in, RngStream& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> data(static_cast<std::size_t>(shape_size(shape)));
  for (double& v : data) v = rng.normal(0.0, sd);
  Tensor t(shape, std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor zero_param(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ModelParams build_model(const ModelConfig& config, RngStream& rng) {
  config.validate();
  ModelParams params;
  params.config = config;
  std::int64_t in_ch = config.in_channels;
  const std::int64_t k = config.kernel_size;
  for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
    const std::int64_t out_ch = config.conv_channels[i];
    const std::string stem = "conv" + std::to_string(i + 1);
    params.named.emplace_back(stem + ".kernel",
                              he_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng));
    params.named.emplace_back(stem + ".bias", zero_param({out_ch}));
    in_ch = out_ch;
  }
  std::int64_t in_w = config.flatten_width();
  for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
    const std::int64_t out_w = config.fc_widths[i];
    const std::string stem = "fc" + std::to_string(i + 1);
    params.named.emplace_back(stem + ".weight", he_normal({in_w, out_w}, in_w, rng));
    params.named.emplace_back(stem + ".bias", zero_param({out_w}));
    in_w = out_w;
  }
  params.named.emplace_back("head.weight", he_normal({in_w, config.num_classes}, in_w, rng));
  params.named.emplace_back("head.bias", zero_param({config.num_classes}));
  return params;
}

std::int64_t param_count(const ModelConfig& config) {
  config.validate();
  std::int64_t count = 0;
  std::int64_t in_ch = config.in_channels;
  const std::int64_t k = config.kernel_size;
  for (const std::int64_t out_ch : config.conv_channels) {
    count += out_ch * in_ch * k * k + out_ch;
    in_ch = out_ch;
  }
  std::int64_t in_w = config.flatten_width();
  for (const std::int64_t out_w : config.fc_widths) {
    count += in_w * out_w + out_w;
    in_w = out_w;
  }
  count += in_w * config.num_classes + config.num_classes;
  return count;
}

ForwardResult forward(Tape& tape, const ModelParams& params, const Tensor& images,
                      ForwardMode mode, RngStream& rng) {
  const ModelConfig& cfg = params.config;
  if (images.rank() != 4 || images.dim(1) != cfg.in_channels ||
      images.dim(2) != cfg.input_size || images.dim(3) != cfg.input_size) {
    throw ShapeError("forward: images must be N x " + std::to_string(cfg.in_channels) + " x " +
                     std::to_string(cfg.input_size) + " x " + std::to_string(cfg.input_size) +
                     ", got " + shape_str(images.shape()));
  }
  const std::int64_t batch = images.dim(0);
  const DropoutMode drop_mode =
      mode == ForwardMode::kTrain ? DropoutMode::kTrain : DropoutMode::kEval;

  Tensor x = images;
  std::int64_t side = cfg.input_size;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::string stem = "conv" + std::to_string(i + 1);
    x = conv2d(tape, x, params.at(stem + ".kernel"), params.at(stem + ".bias"), cfg.conv_stride,
               cfg.conv_padding);
    x = leaky_relu(tape, x, cfg.leaky_slope);
    x = maxpool2d(tape, x);
    side = (side + 2 * cfg.conv_padding - cfg.kernel_size + 1) / 2;
    if (x.dim(2) != side || x.dim(3) != side) {
      throw ShapeError("forward: stage " + std::to_string(i + 1) + " produced " +
                       shape_str(x.shape()) + ", expected side " + std::to_string(side));
    }
  }
  x = reshape(tape, x, {batch, cfg.flatten_width()});

  Tensor features;
  for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    const std::string stem = "fc" + std::to_string(i + 1);
    x = add_row_bias(tape, matmul(tape, x, params.at(stem + ".weight")),
                     params.at(stem + ".bias"));
    x = leaky_relu(tape, x, cfg.leaky_slope);
    if (i + 1 == cfg.fc_widths.size()) features = x;  // pre-dropout, pre-head
    x = dropout(tape, x, cfg.dropout_prob, drop_mode, rng);
  }
  Tensor logits =
      add_row_bias(tape, matmul(tape, x, params.at("head.weight")), params.at("head.bias"));
  return {logits, features};
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::vector<std::uint8_t> out;
  auto put_u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  };
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  };
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(kVersion);
  put_u64(params.config.digest());
  put_u32(static_cast<std::uint32_t>(params.named.size()));
  for (const auto& [name, t] : params.named) {
    put_u16(static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u16(static_cast<std::uint16_t>(t.rank()));
    for (const std::int64_t extent : t.shape()) put_u64(static_cast<std::uint64_t>(extent));
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, t.data().data(), bytes);
  }
  write_file_bytes(path, out);
}

ModelParams load_checkpoint(const std::string& path, const ModelConfig& config) {
  config.validate();
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - off < n) {
      throw FormatError(std::string("checkpoint truncated in ") + what);
    }
  };
  auto get_u16 = [&] {
    need(2, "u16");
    const std::uint16_t v = static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    off += 2;
    return v;
  };
  auto get_u32 = [&] {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[off + i];
    off += 4;
    return v;
  };
  auto get_u64 = [&] {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[off + i];
    off += 8;
    return v;
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  off = 4;
  if (get_u16() != kVersion) throw FormatError("unsupported checkpoint version");
  const std::uint64_t digest = get_u64();
  if (digest != config.digest()) {
    throw ConfigError("checkpoint was written for a different model configuration");
  }
  const std::uint32_t count = get_u32();

  ModelParams params;
  params.config = config;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16();
    need(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
    off += name_len;
    const std::uint16_t rank = get_u16();
    Shape shape(rank);
    for (std::uint16_t r = 0; r < rank; ++r) shape[r] = static_cast<std::int64_t>(get_u64());
    const std::int64_t n = shape_size(shape);
    need(static_cast<std::size_t>(n) * sizeof(double), "tensor data");
    std::vector<double> data(static_cast<std::size_t>(n));
    std::memcpy(data.data(), bytes.data() + off, data.size() * sizeof(double));
    off += data.size() * sizeof(double);
    Tensor t(std::move(shape), std::move(data));
    t.set_requires_grad(true);
    params.named.emplace_back(std::move(name), std::move(t));
  }
  if (off != bytes.size()) throw FormatError("checkpoint has trailing bytes");

  // cross-check against what the config implies
  RngStream probe(0);
  const ModelParams expect = build_model(config, probe);
  if (expect.named.size() != params.named.size()) {
    throw FormatError("checkpoint tensor count does not match the model");
  }
  for (std::size_t i = 0; i < expect.named.size(); ++i) {
    if (expect.named[i].first != params.named[i].first ||
        expect.named[i].second.shape() != params.named[i].second.shape()) {
      throw FormatError("checkpoint tensor " + params.named[i].first +
                        " does not match the model layout");
    }
  }
  return params;
}

}  // namespace hccr
