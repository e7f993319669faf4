#include "hccr/sampler.hpp"

#include <cstdio>
#include <numeric>

namespace hccr {

namespace {

void warn(std::vector<std::string>* warnings, std::string message) {
  if (warnings) {
    warnings->push_back(std::move(message));
  } else {
    std::fprintf(stderr, "warning: %s\n", message.c_str());
  }
}

/// First `take` entries of a Fisher-Yates partial shuffle of [0, n).
std::vector<std::int64_t> draw_without_replacement(std::int64_t n, std::int64_t take,
                                                   RngStream& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  for (std::int64_t i = 0; i < take; ++i) {
    const std::int64_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(take));
  return idx;
}

std::vector<std::int64_t> pick_classes(const DatasetPack& pack, std::int64_t classes_per_batch,
                                       const char* op, RngStream& rng) {
  if (classes_per_batch < 1) throw ValueError(std::string(op) + ": classes_per_batch must be >= 1");
  if (pack.num_classes() < classes_per_batch) {
    throw DataError(std::string(op) + ": pack has " + std::to_string(pack.num_classes()) +
                    " classes, need " + std::to_string(classes_per_batch) +
                    " (short by " + std::to_string(classes_per_batch - pack.num_classes()) + ")");
  }
  return draw_without_replacement(pack.num_classes(), classes_per_batch, rng);
}

}  // namespace

Batch sample_uniform(const DatasetPack& pack, std::int64_t batch_size, RngStream& rng) {
  if (pack.size() == 0) throw DataError("sample_uniform: pack is empty");
  if (batch_size < 1) throw ValueError("sample_uniform: batch_size must be >= 1");
  Batch batch;
  batch.structure = BatchStructure::uniform();
  batch.sample_indices.reserve(static_cast<std::size_t>(batch_size));
  batch.labels.reserve(static_cast<std::size_t>(batch_size));
  for (std::int64_t i = 0; i < batch_size; ++i) {
    const std::int64_t s = rng.uniform_int(pack.size());
    batch.sample_indices.push_back(s);
    batch.labels.push_back(pack.label(s));
  }
  return batch;
}

Batch sample_class_pairs(const DatasetPack& pack, std::int64_t classes_per_batch, RngStream& rng,
                         std::vector<std::string>* warnings) {
  const auto classes = pick_classes(pack, classes_per_batch, "sample_class_pairs", rng);
  Batch batch;
  batch.structure = BatchStructure::pairs(classes_per_batch);
  batch.sample_indices.reserve(static_cast<std::size_t>(2 * classes_per_batch));
  batch.labels.reserve(batch.sample_indices.capacity());
  for (const std::int64_t cls : classes) {
    const auto& members = pack.class_index()[static_cast<std::size_t>(cls)];
    const auto n = static_cast<std::int64_t>(members.size());
    std::int64_t a, b;
    if (n >= 2) {
      a = rng.uniform_int(n);
      b = rng.uniform_int(n - 1);
      if (b >= a) ++b;
    } else if (n == 1) {
      a = b = 0;
      warn(warnings, "class " + std::to_string(cls) +
                         " has a single sample; pairing it with itself");
    } else {
      throw DataError("sample_class_pairs: class " + std::to_string(cls) + " is empty");
    }
    for (const std::int64_t pick : {a, b}) {
      batch.sample_indices.push_back(members[static_cast<std::size_t>(pick)]);
      batch.labels.push_back(cls);
    }
  }
  return batch;
}

Batch sample_class_groups(const DatasetPack& pack, std::int64_t classes_per_batch,
                          std::int64_t samples_per_class, RngStream& rng,
                          std::vector<std::string>* warnings) {
  if (samples_per_class < 1) {
    throw ValueError("sample_class_groups: samples_per_class must be >= 1");
  }
  const auto classes = pick_classes(pack, classes_per_batch, "sample_class_groups", rng);
  Batch batch;
  batch.structure = BatchStructure::groups(classes_per_batch, samples_per_class);
  batch.sample_indices.reserve(static_cast<std::size_t>(classes_per_batch * samples_per_class));
  batch.labels.reserve(batch.sample_indices.capacity());
  for (const std::int64_t cls : classes) {
    const auto& members = pack.class_index()[static_cast<std::size_t>(cls)];
    const auto n = static_cast<std::int64_t>(members.size());
    if (n == 0) throw DataError("sample_class_groups: class " + std::to_string(cls) + " is empty");
    if (n >= samples_per_class) {
      for (const std::int64_t pick : draw_without_replacement(n, samples_per_class, rng)) {
        batch.sample_indices.push_back(members[static_cast<std::size_t>(pick)]);
        batch.labels.push_back(cls);
      }
    } else {
      warn(warnings, "class " + std::to_string(cls) + " has " + std::to_string(n) +
                         " samples, drawing " + std::to_string(samples_per_class) +
                         " with replacement");
      for (std::int64_t i = 0; i < samples_per_class; ++i) {
        batch.sample_indices.push_back(members[static_cast<std::size_t>(rng.uniform_int(n))]);
        batch.labels.push_back(cls);
      }
    }
  }
  return batch;
}

}  // namespace hccr
