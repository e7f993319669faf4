#ifndef HCCR_GRADCHECK_HPP
#define HCCR_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "hccr/tensor.hpp"

namespace hccr {

/// A deterministic tensor-to-scalar function under test. Called with a fresh
/// tape for every evaluation; stochastic pieces (dropout) must re-seed
/// internally so repeated calls agree.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  /// Non-smooth forward events (leaky_relu at 0, maxpool ties) seen across all
  /// evaluations; when nonzero the finite-difference comparison may be
  /// meaningless near the kink.
  std::size_t kink_events = 0;
  bool kink_warning() const { return kink_events > 0; }
};

/// Compares the reverse-mode gradient of f at x against central finite
/// differences with step h, coordinate by coordinate. Relative error is
/// |a-b| / max(|a|,|b|,1e-8). kink_tolerance widens kink detection on the
/// tapes used for the evaluations (0 = exact hits only). Coordinates whose
/// absolute disagreement is within abs_tol score zero: central differences on
/// a loss of magnitude L carry ~L*eps/h of roundoff, so gradients far below
/// that floor cannot be scored by a relative test (deep-model checks pass a
/// small abs_tol; 0 keeps the strict formula).
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                           double kink_tolerance = 0.0, double abs_tol = 0.0);

struct OpGradReport {
  std::string op;
  double max_rel_err = 0.0;
  int trials = 0;
  std::size_t kink_events = 0;
};

/// Finite-difference sweep over every differentiable op and the three
/// loss-variant heads of a tiny end-to-end model, trials_per_op random
/// configurations each, inputs drawn away from kinks.
std::vector<OpGradReport> gradient_suite(int trials_per_op, std::uint64_t seed);

/// All-parameter gradient check of combined_loss(forward(...)) on a tiny
/// 16x16 model, one entry per loss variant. Included in gradient_suite.
std::vector<OpGradReport> end_to_end_suite(int trials, std::uint64_t seed);

}  // namespace hccr

#endif
