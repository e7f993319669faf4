#include "hccr/pack.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hccr/gnt.hpp"  // file io helpers

namespace hccr {

namespace {

constexpr char kMagic[4] = {'H', 'Z', 'P', 'K'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kStride = 4 + static_cast<std::size_t>(kCanvasPixels);

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::uint8_t quantize_pixel(double v) {
  return static_cast<std::uint8_t>(std::llround(std::clamp(v, 0.0, 1.0) * 255.0));
}

DatasetPack::DatasetPack(std::vector<std::uint16_t> label_table,
                         std::vector<std::uint32_t> labels, std::vector<std::uint8_t> pixels)
    : label_table_(std::move(label_table)),
      labels_(std::move(labels)),
      pixels_(std::move(pixels)) {
  if (pixels_.size() != labels_.size() * static_cast<std::size_t>(kCanvasPixels)) {
    throw ValueError("pack pixel buffer does not match sample count");
  }
  class_index_.resize(label_table_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= label_table_.size()) {
      throw ValueError("sample label " + std::to_string(labels_[i]) + " >= class count " +
                       std::to_string(label_table_.size()));
    }
    class_index_[labels_[i]].push_back(static_cast<std::int64_t>(i));
  }
}

std::span<const std::uint8_t> DatasetPack::pixels(std::int64_t sample) const {
  if (sample < 0 || sample >= size()) {
    throw ValueError("sample index " + std::to_string(sample) + " out of range");
  }
  return {pixels_.data() + static_cast<std::size_t>(sample) * kCanvasPixels,
          static_cast<std::size_t>(kCanvasPixels)};
}

void DatasetPack::decode_image(std::int64_t sample, double* out) const {
  const auto q = pixels(sample);
  for (int i = 0; i < kCanvasPixels; ++i) out[i] = q[i] / 255.0;
}

void DatasetPack::write(const std::string& path) const {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 + 4 + 2 * label_table_.size() + 8 + labels_.size() * kStride);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(label_table_.size()));
  for (std::uint16_t tag : label_table_) put_u16(out, tag);
  put_u64(out, labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    put_u32(out, labels_[i]);
    const std::uint8_t* px = pixels_.data() + i * kCanvasPixels;
    out.insert(out.end(), px, px + kCanvasPixels);
  }
  write_file_bytes(path, out);
}

DatasetPack DatasetPack::read(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - off < n) throw FormatError(std::string("pack truncated in ") + what);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad pack magic");
  off = 4;
  need(2, "version");
  const std::uint16_t version = get_u16(bytes.data() + off);
  off += 2;
  if (version != kVersion) {
    throw FormatError("unsupported pack version " + std::to_string(version));
  }
  need(4, "class count");
  const std::uint32_t classes = get_u32(bytes.data() + off);
  off += 4;
  need(2 * static_cast<std::size_t>(classes), "label table");
  std::vector<std::uint16_t> table(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    table[c] = get_u16(bytes.data() + off);
    off += 2;
  }
  need(8, "sample count");
  const std::uint64_t count = get_u64(bytes.data() + off);
  off += 8;
  if (bytes.size() - off != count * kStride) {
    throw FormatError("pack body has " + std::to_string(bytes.size() - off) +
                      " bytes, expected " + std::to_string(count * kStride));
  }
  std::vector<std::uint32_t> labels(count);
  std::vector<std::uint8_t> pixels(count * static_cast<std::size_t>(kCanvasPixels));
  for (std::uint64_t i = 0; i < count; ++i) {
    labels[i] = get_u32(bytes.data() + off);
    off += 4;
    std::memcpy(pixels.data() + i * kCanvasPixels, bytes.data() + off, kCanvasPixels);
    off += kCanvasPixels;
  }
  try {
    return DatasetPack(std::move(table), std::move(labels), std::move(pixels));
  } catch (const ValueError& e) {
    throw FormatError(std::string("invalid pack: ") + e.what());
  }
}

DatasetPack pack_from_samples(std::span<const PreprocessedSample> samples,
                              const std::vector<std::uint16_t>& label_table) {
  std::vector<std::uint32_t> labels;
  labels.reserve(samples.size());
  std::vector<std::uint8_t> pixels;
  pixels.reserve(samples.size() * static_cast<std::size_t>(kCanvasPixels));
  for (const PreprocessedSample& s : samples) {
    if (s.image.size() != static_cast<std::size_t>(kCanvasPixels)) {
      throw ValueError("sample image must have " + std::to_string(kCanvasPixels) + " pixels");
    }
    if (s.label < 0 || s.label >= static_cast<std::int64_t>(label_table.size())) {
      throw ValueError("sample label " + std::to_string(s.label) + " outside label table");
    }
    labels.push_back(static_cast<std::uint32_t>(s.label));
    for (double v : s.image) pixels.push_back(quantize_pixel(v));
  }
  return DatasetPack(label_table, std::move(labels), std::move(pixels));
}

void pack_write(std::span<const PreprocessedSample> samples,
                const std::vector<std::uint16_t>& label_table, const std::string& path) {
  pack_from_samples(samples, label_table).write(path);
}

DatasetPack pack_read(const std::string& path) { return DatasetPack::read(path); }

PackStats dataset_stats(const DatasetPack& pack) {
  PackStats st;
  st.classes = pack.num_classes();
  st.total = pack.size();
  if (st.classes == 0) return st;
  st.min_per_class = pack.size();
  for (const auto& members : pack.class_index()) {
    const auto n = static_cast<std::int64_t>(members.size());
    st.min_per_class = std::min(st.min_per_class, n);
    st.max_per_class = std::max(st.max_per_class, n);
  }
  st.mean_per_class = static_cast<double>(st.total) / static_cast<double>(st.classes);
  return st;
}

}  // namespace hccr
