#ifndef HCCR_BATCH_HPP
#define HCCR_BATCH_HPP

#include <cstdint>
#include <vector>

namespace hccr {

enum class BatchKind { kUniform, kPairs, kGroups };

/// Which samples of a batch share a class, by position:
///  - uniform: no structure, any labels anywhere
///  - pairs:   positions 2k and 2k+1 share a class, classes distinct across k
///  - groups:  contiguous blocks of samples_per_class, one class per block
struct BatchStructure {
  BatchKind kind = BatchKind::kUniform;
  std::int64_t classes_per_batch = 0;
  std::int64_t samples_per_class = 0;

  static BatchStructure uniform() { return {}; }
  static BatchStructure pairs(std::int64_t classes) {
    return {BatchKind::kPairs, classes, 2};
  }
  static BatchStructure groups(std::int64_t classes, std::int64_t per_class) {
    return {BatchKind::kGroups, classes, per_class};
  }
};

struct Batch {
  std::vector<std::int64_t> sample_indices;
  std::vector<std::int64_t> labels;  // parallel to sample_indices
  BatchStructure structure;

  std::int64_t size() const { return static_cast<std::int64_t>(sample_indices.size()); }
};

}  // namespace hccr

#endif
