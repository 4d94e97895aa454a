#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dsvb/adam.hpp"
#include "dsvb/ops.hpp"
#include "dsvb/rng.hpp"

using namespace dsvb;

namespace {

// Plain-double Adam, kept deliberately separate from the library path.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  double update(double param, double grad, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return param - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST(Adam, MissingGradientLeavesParameterUnchanged) {
  std::vector<Tensor> params{Tensor::from_values({2}, {1.0, -2.0}, true)};
  AdamState state;
  adam_step(params, state, 0.1);
  EXPECT_DOUBLE_EQ(params[0][0], 1.0);
  EXPECT_DOUBLE_EQ(params[0][1], -2.0);
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  Tensor p = Tensor::from_values({2}, {1.0, -2.0}, true);
  Tensor loss = sum(mul(p, Tensor::zeros({2})));
  loss.backward();
  std::vector<Tensor> params{p};
  AdamState state;
  adam_step(params, state, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.0);
}

TEST(Adam, ConstantGradientUpdateApproachesLrSign) {
  // Under a constant gradient g, the Adam step magnitude converges to
  // lr * sign(g).
  Tensor p = Tensor::scalar(0.0, true);
  std::vector<Tensor> params{p};
  AdamState state;
  const double lr = 0.01, g = -3.7;
  double prev = p[0];
  double last_step = 0.0;
  for (int i = 0; i < 500; ++i) {
    p.zero_grad();
    Tensor loss = scale(p, g);
    loss.backward();
    adam_step(params, state, lr);
    last_step = p[0] - prev;
    prev = p[0];
  }
  EXPECT_NEAR(last_step, lr, 1e-5);  // sign(g) = -1, descent moves +lr
}

TEST(Adam, MatchesScalarOracleOverHundredSteps) {
  Rng rng(17);
  Tensor p = Tensor::scalar(0.4, true);
  std::vector<Tensor> params{p};
  AdamState state;
  ScalarAdam oracle;
  double oracle_param = 0.4;
  const double lr = 0.003;
  for (int i = 0; i < 100; ++i) {
    const double g = rng.normal();
    p.zero_grad();
    Tensor loss = scale(p, g);
    loss.backward();
    adam_step(params, state, lr);
    oracle_param = oracle.update(oracle_param, g, lr);
    ASSERT_NEAR(p[0], oracle_param, 1e-12) << "step " << i;
  }
}

TEST(Adam, NonFiniteUpdateThrows) {
  Tensor p = Tensor::scalar(1.0, true);
  Tensor loss = scale(p, std::numeric_limits<double>::infinity());
  loss.backward();
  std::vector<Tensor> params{p};
  AdamState state;
  EXPECT_THROW(adam_step(params, state, 0.1), NumericalDivergence);
}

TEST(AdamOptimizer, StepAndZeroGradRoundTrip) {
  Tensor p = Tensor::scalar(2.0, true);
  AdamOptimizer opt({p}, 0.05);
  Tensor loss = square(p);
  loss.backward();
  EXPECT_TRUE(p.has_grad());
  opt.step();
  EXPECT_LT(p[0], 2.0);
  opt.zero_grad();
  EXPECT_FALSE(p.has_grad());
}
