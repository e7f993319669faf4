#include "hccr/gradcheck.hpp"

#include <gtest/gtest.h>

#include "hccr/ops.hpp"
#include "hccr/rng.hpp"

using namespace hccr;

namespace {

Tensor rand_tensor(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(shape_size(shape)));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor(shape, std::move(data));
}

}  // namespace

TEST(GradCheck, SumOfSquaresIsAccurate) {
  RngStream rng(1);
  auto f = [](Tape& t, const Tensor& x) { return reduce_sum(t, square(t, x)); };
  for (int trial = 0; trial < 20; ++trial) {
    const GradCheckResult r = grad_check(f, rand_tensor({5, 3}, rng));
    EXPECT_LE(r.max_rel_err, 1e-6);
    EXPECT_FALSE(r.kink_warning());
  }
}

TEST(GradCheck, LinearFunctionNearExact) {
  RngStream rng(2);
  auto f = [](Tape& t, const Tensor& x) { return reduce_sum(t, x); };
  const GradCheckResult r = grad_check(f, rand_tensor({7}, rng));
  EXPECT_LE(r.max_rel_err, 1e-10);
}

TEST(GradCheck, LeakyReluAtZeroWarnsKink) {
  auto f = [](Tape& t, const Tensor& x) { return reduce_sum(t, leaky_relu(t, x, 0.1)); };
  const GradCheckResult r = grad_check(f, Tensor({3}, {1.0, 0.0, -2.0}));
  EXPECT_TRUE(r.kink_warning());
}

TEST(GradCheck, NonScalarOutputThrows) {
  auto f = [](Tape& t, const Tensor& x) { return square(t, x); };
  EXPECT_THROW(grad_check(f, Tensor({2}, {1.0, 2.0})), ShapeError);
}

TEST(GradientSuite, EveryOpWithinTolerance) {
  // the acceptance suite runs >= 100 trials; a smaller sweep here keeps the
  // unit run quick
  for (const OpGradReport& rep : gradient_suite(8, 99)) {
    EXPECT_LE(rep.max_rel_err, 1e-4) << rep.op;
  }
}
