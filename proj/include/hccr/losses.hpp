#ifndef HCCR_LOSSES_HPP
#define HCCR_LOSSES_HPP

#include <span>
#include <vector>

#include "hccr/batch.hpp"
#include "hccr/tensor.hpp"

namespace hccr {

/// Non-negative entries summing to 1 within 1e-9.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(std::vector<double> values);
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

/// -sum p_i log(p_i) in the requested base; 0 log 0 := 0.
double entropy(const ProbabilityVector& p, double log_base = 2.718281828459045);

/// sum p_i ln(p_i / q_i). Requires q_i > 0 wherever p_i > 0.
double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q);

/// -(1/m) sum[y ln yhat + (1-y) ln(1-yhat)], predictions clamped to
/// [1e-12, 1-1e-12]. Labels must be exactly 0 or 1.
double binary_cross_entropy(std::span<const double> labels, std::span<const double> predictions);

/// Mean over rows of log-sum-exp(logits) - logit[label], computed with max
/// subtraction. Gradient w.r.t. logits is (softmax - one_hot)/m.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             std::span<const std::int64_t> labels);

/// Mean over pairs (2k, 2k+1) of the Euclidean distance between the two
/// feature rows. Structure must be pairs. The d -> 0 singularity gets a zero
/// subgradient, so d(x,x) contributes exactly 0 to the gradient.
Tensor euclidean_pair_loss(Tape& tape, const Tensor& features, const BatchStructure& structure);

/// Mean over class blocks and feature dimensions of the within-block
/// population variance (divisor = block size). Structure must be groups.
Tensor variance_loss(Tape& tape, const Tensor& features, const BatchStructure& structure);

enum class LossKind { kSoftmaxOnly, kSoftmaxPlusEuclidean, kSoftmaxPlusVariance };

struct LossVariant {
  LossKind kind = LossKind::kSoftmaxOnly;
  double lambda = 1.0;  // weight on the similarity term; 0 reduces to softmax only
};

struct LossBreakdown {
  Tensor total;            // scalar, differentiable
  double ce = 0.0;         // cross-entropy component value
  double similarity = 0.0; // unweighted similarity component value
};

/// Cross-entropy plus lambda times the variant's similarity term, composed on
/// the tape so one backward pass covers logits and features.
LossBreakdown combined_loss(Tape& tape, const LossVariant& variant, const Tensor& logits,
                            const Tensor& features, std::span<const std::int64_t> labels,
                            const BatchStructure& structure);

}  // namespace hccr

#endif
