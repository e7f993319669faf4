#ifndef HCCR_PACK_HPP
#define HCCR_PACK_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hccr/error.hpp"
#include "hccr/preprocess.hpp"

namespace hccr {

/// One preprocessed sample: 0-based class index plus a 128x128 ink-high image.
struct PreprocessedSample {
  std::int64_t label = 0;
  std::vector<double> image;  // kCanvasPixels values in [0,1]
};

/// Indexed in-memory collection of preprocessed samples, grouped by class.
/// Pixels are stored quantized to 1/255 steps, exactly as on disk, and
/// dequantized on access.
///
/// File layout (little-endian):
///   magic "HZPK" | version u16 | class_count u32 | tag codes u16 x classes
///   | sample_count u64 | records (label u32 + 16384 pixel bytes each)
class DatasetPack {
 public:
  DatasetPack() = default;
  DatasetPack(std::vector<std::uint16_t> label_table, std::vector<std::uint32_t> labels,
              std::vector<std::uint8_t> pixels);

  std::int64_t num_classes() const { return static_cast<std::int64_t>(label_table_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }
  std::uint16_t tag_code(std::int64_t class_index) const {
    return label_table_.at(static_cast<std::size_t>(class_index));
  }
  const std::vector<std::uint16_t>& label_table() const { return label_table_; }

  std::int64_t label(std::int64_t sample) const {
    return labels_.at(static_cast<std::size_t>(sample));
  }

  /// Quantized pixel bytes of one sample (kCanvasPixels of them).
  std::span<const std::uint8_t> pixels(std::int64_t sample) const;

  /// Dequantized image; out must hold kCanvasPixels doubles.
  void decode_image(std::int64_t sample, double* out) const;

  /// Sample indices per class, ascending.
  const std::vector<std::vector<std::int64_t>>& class_index() const { return class_index_; }

  void write(const std::string& path) const;
  static DatasetPack read(const std::string& path);

  bool operator==(const DatasetPack&) const = default;

 private:
  std::vector<std::uint16_t> label_table_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint8_t> pixels_;  // size() * kCanvasPixels bytes
  std::vector<std::vector<std::int64_t>> class_index_;
};

std::uint8_t quantize_pixel(double v);

/// Quantizes samples and writes them as a pack file.
void pack_write(std::span<const PreprocessedSample> samples,
                const std::vector<std::uint16_t>& label_table, const std::string& path);

DatasetPack pack_read(const std::string& path);

/// Builds a pack in memory from already-preprocessed samples.
DatasetPack pack_from_samples(std::span<const PreprocessedSample> samples,
                              const std::vector<std::uint16_t>& label_table);

struct PackStats {
  std::int64_t classes = 0;
  std::int64_t total = 0;
  std::int64_t min_per_class = 0;
  std::int64_t max_per_class = 0;
  double mean_per_class = 0.0;
};

PackStats dataset_stats(const DatasetPack& pack);

/// Deterministic desk-scale dataset: each class is a fixed arrangement of 3-6
/// straight strokes (a function of the class index only, so packs generated
/// with different seeds share class identities); the seed drives per-sample
/// translation, rotation, thickness jitter, and pixel noise.
DatasetPack synth_dataset(std::int64_t num_classes, std::int64_t samples_per_class,
                          std::uint64_t seed);

}  // namespace hccr

#endif
