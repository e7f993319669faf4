#include "hccr/losses.hpp"

#include "hccr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace hccr {

namespace {

constexpr double kProbSumTol = 1e-9;
constexpr double kPredClamp = 1e-12;
constexpr double kZeroDistance = 1e-12;

Tensor tracked_scalar(Tape& tape, double value, bool tracked) {
  Tensor t = Tensor::scalar(value);
  if (tracked) t.set_requires_grad(true);
  return t;
}

}  // namespace

ProbabilityVector::ProbabilityVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValueError("probability vector must be non-empty");
  double sum = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("probability entry " + std::to_string(v) + " outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTol) {
    throw ValueError("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

double entropy(const ProbabilityVector& p, double log_base) {
  if (!(log_base > 0.0) || log_base == 1.0) throw ValueError("entropy: invalid log base");
  const double inv_log_base = 1.0 / std::log(log_base);
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v) * inv_log_base;
  }
  return h;
}

double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.values()[i], qi = q.values()[i];
    if (pi > 0.0) {
      if (qi <= 0.0) {
        throw DomainError("kl_divergence: q is zero on p's support (index " + std::to_string(i) +
                          ")");
      }
      d += pi * std::log(pi / qi);
    }
  }
  return d;
}

double binary_cross_entropy(std::span<const double> labels, std::span<const double> predictions) {
  if (labels.size() != predictions.size()) {
    throw ShapeError("binary_cross_entropy: length mismatch");
  }
  if (labels.empty()) throw ValueError("binary_cross_entropy: empty input");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) {
      throw ValueError("binary_cross_entropy: label must be 0 or 1, got " + std::to_string(y));
    }
    const double yhat = std::clamp(predictions[i], kPredClamp, 1.0 - kPredClamp);
    loss -= y * std::log(yhat) + (1.0 - y) * std::log(1.0 - yhat);
  }
  return loss / static_cast<double>(labels.size());
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             std::span<const std::int64_t> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be m x k, got " +
                     shape_str(logits.shape()));
  }
  const std::int64_t m = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(m) + " rows");
  }
  for (std::int64_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ValueError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range [0," + std::to_string(k) + ")");
    }
  }

  // softmax probabilities, saved for backward
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * k));
  const double* z = logits.data().data();
  double loss = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = z + i * k;
    double zmax = row[0];
    for (std::int64_t j = 1; j < k; ++j) zmax = std::max(zmax, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - zmax);
    const double lse = zmax + std::log(sum);
    loss += lse - row[labels[i]];
    double* prow = probs->data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) prow[j] = std::exp(row[j] - zmax) / sum;
  }
  loss /= static_cast<double>(m);

  const bool tracked = tape.recording() && logits.requires_grad();
  Tensor out = tracked_scalar(tape, loss, tracked);
  if (tracked) {
    auto li = logits.handle();
    auto oi = out.handle();
    std::vector<std::int64_t> y(labels.begin(), labels.end());
    tape.record([li, oi, probs, y, m, k] {
      li->ensure_grad();
      const double g = oi->grad[0] / static_cast<double>(m);
      for (std::int64_t i = 0; i < m; ++i) {
        const double* prow = probs->data() + i * k;
        double* grow = li->grad.data() + i * k;
        for (std::int64_t j = 0; j < k; ++j) grow[j] += g * prow[j];
        grow[y[i]] -= g;
      }
    });
  }
  return out;
}

Tensor euclidean_pair_loss(Tape& tape, const Tensor& features, const BatchStructure& structure) {
  if (structure.kind != BatchKind::kPairs) {
    throw StructureError("euclidean_pair_loss: batch structure must be pairs");
  }
  if (features.rank() != 2) {
    throw ShapeError("euclidean_pair_loss: features must be m x d, got " +
                     shape_str(features.shape()));
  }
  const std::int64_t m = features.dim(0), d = features.dim(1);
  if (m % 2 != 0) throw StructureError("euclidean_pair_loss: odd batch size " + std::to_string(m));
  if (m != 2 * structure.classes_per_batch) {
    throw StructureError("euclidean_pair_loss: batch of " + std::to_string(m) +
                         " rows does not match pairs(" +
                         std::to_string(structure.classes_per_batch) + ")");
  }
  const std::int64_t pairs = m / 2;
  auto dist = std::make_shared<std::vector<double>>(static_cast<std::size_t>(pairs));
  const double* x = features.data().data();
  double loss = 0.0;
  for (std::int64_t p = 0; p < pairs; ++p) {
    const double* a = x + (2 * p) * d;
    const double* b = x + (2 * p + 1) * d;
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double diff = a[j] - b[j];
      s += diff * diff;
    }
    const double dd = std::sqrt(s);
    if (dd <= std::max(tape.kink_tolerance(), kZeroDistance)) {
      tape.note_nonsmooth();  // sqrt singularity; backward uses the zero subgradient
    }
    (*dist)[p] = dd;
    loss += dd;
  }
  loss /= static_cast<double>(pairs);

  const bool tracked = tape.recording() && features.requires_grad();
  Tensor out = tracked_scalar(tape, loss, tracked);
  if (tracked) {
    auto fi = features.handle();
    auto oi = out.handle();
    tape.record([fi, oi, dist, pairs, d] {
      fi->ensure_grad();
      const double g = oi->grad[0] / static_cast<double>(pairs);
      for (std::int64_t p = 0; p < pairs; ++p) {
        const double dd = (*dist)[p];
        if (dd < kZeroDistance) continue;  // defined zero subgradient at d=0
        const double* a = fi->data.data() + (2 * p) * d;
        const double* b = fi->data.data() + (2 * p + 1) * d;
        double* ga = fi->grad.data() + (2 * p) * d;
        double* gb = fi->grad.data() + (2 * p + 1) * d;
        const double c = g / dd;
        for (std::int64_t j = 0; j < d; ++j) {
          const double diff = c * (a[j] - b[j]);
          ga[j] += diff;
          gb[j] -= diff;
        }
      }
    });
  }
  return out;
}

Tensor variance_loss(Tape& tape, const Tensor& features, const BatchStructure& structure) {
  if (structure.kind != BatchKind::kGroups) {
    throw StructureError("variance_loss: batch structure must be groups");
  }
  if (features.rank() != 2) {
    throw ShapeError("variance_loss: features must be m x d, got " +
                     shape_str(features.shape()));
  }
  const std::int64_t m = features.dim(0), d = features.dim(1);
  const std::int64_t blocks = structure.classes_per_batch, s = structure.samples_per_class;
  if (blocks < 1 || s < 1 || m != blocks * s) {
    throw StructureError("variance_loss: batch of " + std::to_string(m) +
                         " rows does not match groups(" + std::to_string(blocks) + "," +
                         std::to_string(s) + ")");
  }

  // per-block per-dimension means, saved for backward
  auto means = std::make_shared<std::vector<double>>(static_cast<std::size_t>(blocks * d), 0.0);
  const double* x = features.data().data();
  for (std::int64_t b = 0; b < blocks; ++b) {
    double* mu = means->data() + b * d;
    for (std::int64_t i = 0; i < s; ++i) {
      const double* row = x + (b * s + i) * d;
      for (std::int64_t j = 0; j < d; ++j) mu[j] += row[j];
    }
    for (std::int64_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(s);
  }
  double loss = 0.0;
  for (std::int64_t b = 0; b < blocks; ++b) {
    const double* mu = means->data() + b * d;
    for (std::int64_t i = 0; i < s; ++i) {
      const double* row = x + (b * s + i) * d;
      for (std::int64_t j = 0; j < d; ++j) {
        const double diff = row[j] - mu[j];
        loss += diff * diff;
      }
    }
  }
  loss /= static_cast<double>(s) * static_cast<double>(blocks) * static_cast<double>(d);

  const bool tracked = tape.recording() && features.requires_grad();
  Tensor out = tracked_scalar(tape, loss, tracked);
  if (tracked) {
    auto fi = features.handle();
    auto oi = out.handle();
    tape.record([fi, oi, means, blocks, s, d] {
      fi->ensure_grad();
      const double g = 2.0 * oi->grad[0] /
                       (static_cast<double>(s) * static_cast<double>(blocks) *
                        static_cast<double>(d));
      for (std::int64_t b = 0; b < blocks; ++b) {
        const double* mu = means->data() + b * d;
        for (std::int64_t i = 0; i < s; ++i) {
          const double* row = fi->data.data() + (b * s + i) * d;
          double* grow = fi->grad.data() + (b * s + i) * d;
          for (std::int64_t j = 0; j < d; ++j) grow[j] += g * (row[j] - mu[j]);
        }
      }
    });
  }
  return out;
}

LossBreakdown combined_loss(Tape& tape, const LossVariant& variant, const Tensor& logits,
                            const Tensor& features, std::span<const std::int64_t> labels,
                            const BatchStructure& structure) {
  if (variant.lambda < 0.0) throw ValueError("combined_loss: lambda must be >= 0");
  LossBreakdown result;
  Tensor ce = softmax_cross_entropy(tape, logits, labels);
  result.ce = ce.item();

  switch (variant.kind) {
    case LossKind::kSoftmaxOnly:
      result.total = ce;
      result.similarity = 0.0;
      return result;
    case LossKind::kSoftmaxPlusEuclidean: {
      if (structure.kind != BatchKind::kPairs) {
        throw StructureError("combined_loss: Euclidean variant needs a pairs batch");
      }
      Tensor sim = euclidean_pair_loss(tape, features, structure);
      result.similarity = sim.item();
      result.total = add(tape, ce, scale(tape, sim, variant.lambda));
      return result;
    }
    case LossKind::kSoftmaxPlusVariance: {
      if (structure.kind != BatchKind::kGroups) {
        throw StructureError("combined_loss: variance variant needs a groups batch");
      }
      Tensor sim = variance_loss(tape, features, structure);
      result.similarity = sim.item();
      result.total = add(tape, ce, scale(tape, sim, variant.lambda));
      return result;
    }
  }
  throw ValueError("combined_loss: unknown variant");
}

}  // namespace hccr
