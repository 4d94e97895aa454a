#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dsvb/cells.hpp"
#include "dsvb/grad_check.hpp"
#include "dsvb/rng.hpp"

using namespace dsvb;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent scalar re-implementation of the GRU step: plain double loops
// over the packed [z | r | c] gate layout.
std::vector<double> gru_step_scalar(const std::vector<double>& x, const std::vector<double>& h,
                                    const GruCell& cell) {
  const Index in = cell.input_size, H = cell.hidden_size;
  auto w = [&](Index i, Index j) { return cell.w.values()(i * 3 * H + j); };
  auto uzr = [&](Index i, Index j) { return cell.u_zr.values()(i * 2 * H + j); };
  auto uc = [&](Index i, Index j) { return cell.u_c.values()(i * H + j); };
  auto b = [&](Index j) { return cell.b.values()(j); };
  std::vector<double> out(H);
  for (Index j = 0; j < H; ++j) {
    double zp = b(j), rp = b(H + j), cp = b(2 * H + j);
    for (Index i = 0; i < in; ++i) {
      zp += x[i] * w(i, j);
      rp += x[i] * w(i, H + j);
      cp += x[i] * w(i, 2 * H + j);
    }
    for (Index i = 0; i < H; ++i) {
      zp += h[i] * uzr(i, j);
      rp += h[i] * uzr(i, H + j);
    }
    const double z = sigmoid_ref(zp);
    const double r_j = sigmoid_ref(rp);
    (void)r_j;
    // candidate needs the full reset vector; compute it first
    double cand_pre = cp;
    for (Index i = 0; i < H; ++i) {
      double rp_i = b(H + i);
      for (Index k = 0; k < in; ++k) rp_i += x[k] * w(k, H + i);
      for (Index k = 0; k < H; ++k) rp_i += h[k] * uzr(k, H + i);
      cand_pre += sigmoid_ref(rp_i) * h[i] * uc(i, j);
    }
    const double cand = std::tanh(cand_pre);
    out[j] = z * h[j] + (1.0 - z) * cand;
  }
  return out;
}

// Scalar LSTM oracle over the packed [i | f | g | o] layout.
void lstm_step_scalar(const std::vector<double>& x, std::vector<double>& h,
                      std::vector<double>& c, const LstmCell& cell) {
  const Index in = cell.input_size, H = cell.hidden_size;
  auto w = [&](Index i, Index j) { return cell.w.values()(i * 4 * H + j); };
  auto u = [&](Index i, Index j) { return cell.u.values()(i * 4 * H + j); };
  auto b = [&](Index j) { return cell.b.values()(j); };
  std::vector<double> hn(H), cn(H);
  for (Index j = 0; j < H; ++j) {
    double pi = b(j), pf = b(H + j), pg = b(2 * H + j), po = b(3 * H + j);
    for (Index i = 0; i < in; ++i) {
      pi += x[i] * w(i, j);
      pf += x[i] * w(i, H + j);
      pg += x[i] * w(i, 2 * H + j);
      po += x[i] * w(i, 3 * H + j);
    }
    for (Index i = 0; i < H; ++i) {
      pi += h[i] * u(i, j);
      pf += h[i] * u(i, H + j);
      pg += h[i] * u(i, 2 * H + j);
      po += h[i] * u(i, 3 * H + j);
    }
    const double gi = sigmoid_ref(pi), gf = sigmoid_ref(pf), gg = std::tanh(pg),
                 go = sigmoid_ref(po);
    cn[j] = gf * c[j] + gi * gg;
    hn[j] = go * std::tanh(cn[j]);
  }
  h = hn;
  c = cn;
}

GruCell zero_gru(Index in, Index H) {
  GruCell cell;
  cell.input_size = in;
  cell.hidden_size = H;
  cell.w = Tensor::zeros({in, 3 * H});
  cell.u_zr = Tensor::zeros({H, 2 * H});
  cell.u_c = Tensor::zeros({H, H});
  cell.b = Tensor::zeros({1, 3 * H});
  return cell;
}

LstmCell zero_lstm(Index in, Index H) {
  LstmCell cell;
  cell.input_size = in;
  cell.hidden_size = H;
  cell.w = Tensor::zeros({in, 4 * H});
  cell.u = Tensor::zeros({H, 4 * H});
  cell.b = Tensor::zeros({1, 4 * H});
  return cell;
}

}  // namespace

TEST(Gru, ZeroWeightsHalveHidden) {
  // All gates sit at sigmoid(0)=0.5 and the candidate at tanh(0)=0, so the
  // new hidden state is exactly half the old one.
  GruCell cell = zero_gru(3, 4);
  Tensor x = Tensor::from_values({1, 3}, {0.2, -0.4, 1.0});
  Tensor h = Tensor::from_values({1, 4}, {1.0, -2.0, 0.5, 4.0});
  Tensor out = gru_step(x, h, cell);
  for (Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(out[j], 0.5 * h[j]);
}

TEST(Gru, ZeroEverythingIsFixedPoint) {
  GruCell cell = zero_gru(2, 3);
  Tensor out = gru_step(Tensor::zeros({1, 2}), Tensor::zeros({1, 3}), cell);
  for (Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out[j], 0.0);
}

TEST(Gru, MatchesScalarOracle) {
  Rng rng(31);
  GruCell cell = make_gru_cell(4, 6, rng, "cell");
  std::vector<double> x(4), h(6);
  Rng data(32);
  for (auto& v : x) v = data.normal();
  for (auto& v : h) v = data.normal();
  Tensor xt = Tensor::from_values({1, 4}, std::vector<double>(x));
  Tensor ht = Tensor::from_values({1, 6}, std::vector<double>(h));
  Tensor out = gru_step(xt, ht, cell);
  const std::vector<double> expected = gru_step_scalar(x, h, cell);
  for (Index j = 0; j < 6; ++j) EXPECT_NEAR(out[j], expected[j], 1e-12);
}

TEST(Gru, ShapeMismatchThrows) {
  Rng rng(1);
  GruCell cell = make_gru_cell(4, 6, rng, "cell");
  EXPECT_THROW(gru_step(Tensor::zeros({1, 3}), Tensor::zeros({1, 6}), cell), ShapeMismatch);
  EXPECT_THROW(gru_step(Tensor::zeros({1, 4}), Tensor::zeros({1, 5}), cell), ShapeMismatch);
}

TEST(Gru, Deterministic) {
  Rng rng(77);
  GruCell cell = make_gru_cell(3, 5, rng, "cell");
  Tensor x = Rng(5).normal_tensor({2, 3});
  Tensor h = Rng(6).normal_tensor({2, 5});
  Tensor a = gru_step(x, h, cell);
  Tensor b = gru_step(x, h, cell);
  for (Index i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Lstm, ZeroWeightsHalfGates) {
  // Gates at 0.5, candidate 0: c' = 0.5 c, h' = 0.5 tanh(0.5 c). The default
  // forget-gate bias is overridden to zero by the explicit zero cell.
  LstmCell cell = zero_lstm(2, 3);
  Tensor x = Tensor::zeros({1, 2});
  Tensor h = Tensor::zeros({1, 3});
  Tensor c = Tensor::from_values({1, 3}, {1.0, -0.8, 2.0});
  auto [hn, cn] = lstm_step(x, h, c, cell);
  for (Index j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(cn[j], 0.5 * c[j]);
    EXPECT_DOUBLE_EQ(hn[j], 0.5 * std::tanh(0.5 * c[j]));
  }
}

TEST(Lstm, ZeroStateFixedPoint) {
  LstmCell cell = zero_lstm(2, 3);
  auto [hn, cn] = lstm_step(Tensor::zeros({1, 2}), Tensor::zeros({1, 3}), Tensor::zeros({1, 3}),
                            cell);
  for (Index j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(hn[j], 0.0);
    EXPECT_DOUBLE_EQ(cn[j], 0.0);
  }
}

TEST(Lstm, MatchesScalarOracle) {
  Rng rng(41);
  LstmCell cell = make_lstm_cell(3, 5, rng, "cell");
  std::vector<double> x(3), h(5, 0.0), c(5, 0.0);
  Rng data(42);
  for (auto& v : x) v = data.normal();
  Tensor ht = Tensor::zeros({1, 5});
  Tensor ct = Tensor::zeros({1, 5});
  // chain three steps so the oracle exercises state feedback
  for (int step = 0; step < 3; ++step) {
    Tensor xt = Tensor::from_values({1, 3}, std::vector<double>(x));
    auto [hn, cn] = lstm_step(xt, ht, ct, cell);
    lstm_step_scalar(x, h, c, cell);
    for (Index j = 0; j < 5; ++j) {
      EXPECT_NEAR(hn[j], h[j], 1e-12);
      EXPECT_NEAR(cn[j], c[j], 1e-12);
    }
    ht = hn;
    ct = cn;
    for (auto& v : x) v = data.normal();
  }
}

TEST(Lstm, ForgetBiasInitialisedToOne) {
  Rng rng(8);
  LstmCell cell = make_lstm_cell(2, 4, rng, "cell");
  for (Index j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(cell.b.values()(4 + j), 1.0);
    EXPECT_DOUBLE_EQ(cell.b.values()(j), 0.0);
  }
}

TEST(Gru, BackpropThroughChainedSteps) {
  Rng rng(55);
  GruCell cell = make_gru_cell(2, 3, rng, "cell");
  const int steps = 10;
  std::vector<Tensor> inputs;
  Rng data(56);
  for (int t = 0; t < steps; ++t) inputs.push_back(data.normal_tensor({1, 2}));

  auto rollout = [&](const Tensor& w_probe) {
    GruCell probe = cell;
    probe.w = w_probe;
    Tensor h = Tensor::zeros({1, 3});
    for (int t = 0; t < steps; ++t) h = gru_step(inputs[t], h, probe);
    return sum(square(h));
  };
  const double err = grad_check(rollout, cell.w, 1e-4);
  EXPECT_LT(err, 1e-5);
}

TEST(Lstm, BackpropThroughChainedSteps) {
  Rng rng(65);
  LstmCell cell = make_lstm_cell(2, 3, rng, "cell");
  const int steps = 10;
  std::vector<Tensor> inputs;
  Rng data(66);
  for (int t = 0; t < steps; ++t) inputs.push_back(data.normal_tensor({1, 2}));

  auto rollout = [&](const Tensor& u_probe) {
    LstmCell probe = cell;
    probe.u = u_probe;
    Tensor h = Tensor::zeros({1, 3});
    Tensor c = Tensor::zeros({1, 3});
    for (int t = 0; t < steps; ++t) {
      auto [hn, cn] = lstm_step(inputs[t], h, c, probe);
      h = hn;
      c = cn;
    }
    return sum(square(h));
  };
  const double err = grad_check(rollout, cell.u, 1e-4);
  EXPECT_LT(err, 1e-5);
}

TEST(Gru, BackpropTwentyStepsVsFiniteDifferences) {
  Rng rng(75);
  GruCell cell = make_gru_cell(2, 2, rng, "cell");
  const int steps = 20;
  std::vector<Tensor> inputs;
  Rng data(76);
  for (int t = 0; t < steps; ++t) inputs.push_back(data.normal_tensor({1, 2}));
  auto rollout = [&](const Tensor& uc_probe) {
    GruCell probe = cell;
    probe.u_c = uc_probe;
    Tensor h = Tensor::zeros({1, 2});
    for (int t = 0; t < steps; ++t) h = gru_step(inputs[t], h, probe);
    return mean(square(h));
  };
  EXPECT_LT(grad_check(rollout, cell.u_c, 1e-4), 1e-5);
}
