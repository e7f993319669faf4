#ifndef HCCR_SAMPLER_HPP
#define HCCR_SAMPLER_HPP

#include <string>
#include <vector>

#include "hccr/batch.hpp"
#include "hccr/pack.hpp"
#include "hccr/rng.hpp"

namespace hccr {

// Batch construction. All three samplers are pure functions of
// (pack, parameters, rng state); fallbacks for undersized classes draw with
// replacement and report a warning. Warnings append to *warnings when given,
// otherwise go to stderr.

/// batch_size indices drawn uniformly with replacement from the whole pack.
Batch sample_uniform(const DatasetPack& pack, std::int64_t batch_size, RngStream& rng);

/// classes_per_batch distinct classes, two samples each (without replacement
/// when the class has >= 2 samples), pairs adjacent: positions 2k, 2k+1.
Batch sample_class_pairs(const DatasetPack& pack, std::int64_t classes_per_batch, RngStream& rng,
                         std::vector<std::string>* warnings = nullptr);

/// classes_per_batch distinct classes, samples_per_class draws each (without
/// replacement when the class is big enough), contiguous per-class blocks.
Batch sample_class_groups(const DatasetPack& pack, std::int64_t classes_per_batch,
                          std::int64_t samples_per_class, RngStream& rng,
                          std::vector<std::string>* warnings = nullptr);

}  // namespace hccr

#endif
