#include <gtest/gtest.h>

#include <cmath>

#include "dsvb/dat.hpp"
#include "dsvb/loss.hpp"
#include "dsvb/rng.hpp"
#include "dsvb/vrnn.hpp"

using namespace dsvb;

namespace {

VrnnConfig tiny_config() {
  VrnnConfig cfg;
  cfg.n_y = 2;
  cfg.n_x = 3;
  cfg.hidden = 4;
  cfg.feat_y_dim = 3;
  cfg.feat_x_dim = 3;
  cfg.prior_hidden = {5};
  cfg.encoder_hidden = {5};
  cfg.decoder_hidden = {5};
  return cfg;
}

// Hand-built rollout with decoder forced to (mean=y, std=1) and
// posterior == prior.
Rollout forced_rollout(const std::vector<Tensor>& y_steps, Index n_x) {
  Rollout r;
  r.batch = y_steps.front().rows();
  r.particles = 1;
  for (const Tensor& y : y_steps) {
    RolloutStep step;
    const Index rows = y.rows();
    step.decoded.mean = y.detach();
    step.decoded.std = Tensor::full({rows, y.cols()}, 1.0);
    step.prior.mean = Tensor::full({rows, n_x}, 0.25);
    step.prior.std = Tensor::full({rows, n_x}, 1.0);
    step.posterior.mean = step.prior.mean.detach();
    step.posterior.std = step.prior.std.detach();
    step.latent = step.posterior.mean.detach();
    r.y_tiled.push_back(y.detach());
    r.steps.push_back(step);
  }
  return r;
}

}  // namespace

TEST(SelboLoss, ForcedDecoderAndMatchedPriorSpotValue) {
  Rng rng(1);
  const Index L_plus_1 = 4, n_y = 2, n_x = 3;
  std::vector<Tensor> y_steps;
  for (Index n = 0; n < L_plus_1; ++n) y_steps.push_back(rng.normal_tensor({1, n_y}));
  Rollout r = forced_rollout(y_steps, n_x);
  auto [recon, kld] = selbo_loss(r, y_steps);
  EXPECT_NEAR(recon.item(), L_plus_1 * n_y * 0.9189385332046727, 1e-9);
  EXPECT_NEAR(kld.item(), 0.0, 1e-12);
}

TEST(SelboLoss, DuplicatedParticlesLeaveLossUnchanged) {
  Rng rng(2);
  VrnnModel m = make_vrnn(tiny_config(), rng);
  std::vector<Tensor> y_steps{Rng(3).normal_tensor({2, 2}), Rng(4).normal_tensor({2, 2})};
  std::vector<Tensor> noise1, noise2;
  Rng noise_rng(5);
  for (int n = 0; n < 2; ++n) {
    Tensor eps = noise_rng.normal_tensor({2, 3});
    noise1.push_back(eps);
    // duplicate the same noise for both particles
    Tensor doubled = Tensor::uninitialized({4, 3});
    doubled.values().head(6) = eps.values();
    doubled.values().tail(6) = eps.values();
    noise2.push_back(doubled);
  }
  Rollout r1 = filter_sequence(m, y_steps, 1, nullptr, &noise1);
  Rollout r2 = filter_sequence(m, y_steps, 2, nullptr, &noise2);
  auto [recon1, kld1] = selbo_loss(r1, y_steps);
  auto [recon2, kld2] = selbo_loss(r2, y_steps);
  EXPECT_NEAR(recon1.item(), recon2.item(), 1e-12);
  EXPECT_NEAR(kld1.item(), kld2.item(), 1e-12);
}

TEST(SelboLoss, MatchesHandAssembledSingleStep) {
  Rng rng(6);
  VrnnModel m = make_vrnn(tiny_config(), rng);
  std::vector<Tensor> y_steps{Rng(7).normal_tensor({1, 2})};
  Rollout r = filter_sequence(m, y_steps, 1, nullptr);
  auto [recon, kld] = selbo_loss(r, y_steps);
  const double expected_recon = gaussian_nll(r.y_tiled[0], r.steps[0].decoded).item();
  const double expected_kld = gaussian_kl(r.steps[0].posterior, r.steps[0].prior).item();
  EXPECT_NEAR(recon.item(), expected_recon, 1e-12);
  EXPECT_NEAR(kld.item(), expected_kld, 1e-12);
}

TEST(SsLoss, AllClearMaskGivesExactZero) {
  Rng rng(8);
  std::vector<Tensor> y_steps{rng.normal_tensor({2, 2}), rng.normal_tensor({2, 2})};
  Rollout r = forced_rollout(y_steps, 3);
  std::vector<bool> mask(2, false);
  Tensor out = ss_loss(r, {}, mask, 0);
  EXPECT_EQ(out.item(), 0.0);
}

TEST(SsLoss, LabelAtPriorMeanSpotValue) {
  Rng rng(9);
  const Index n_x = 3;
  std::vector<Tensor> y_steps{rng.normal_tensor({1, 2}), rng.normal_tensor({1, 2})};
  Rollout r = forced_rollout(y_steps, n_x);
  std::vector<Tensor> labels{Tensor::full({1, n_x}, 0.25), Tensor::full({1, n_x}, 0.25)};
  std::vector<bool> mask{true, false};  // one labeled step
  Tensor out = ss_loss(r, labels, mask, 1);
  EXPECT_NEAR(out.item(), n_x * 0.9189385332046727, 1e-9);
}

TEST(SsLoss, OneSigmaShiftAddsHalf) {
  Rng rng(10);
  const Index n_x = 3;
  std::vector<Tensor> y_steps{rng.normal_tensor({1, 2})};
  Rollout r = forced_rollout(y_steps, n_x);
  std::vector<bool> mask{true};
  std::vector<Tensor> at_mean{Tensor::full({1, n_x}, 0.25)};
  Tensor shifted = Tensor::full({1, n_x}, 0.25);
  shifted.values()(1) += 1.0;  // one prior std in one dim
  std::vector<Tensor> off{shifted};
  const double base = ss_loss(r, at_mean, mask, 1).item();
  const double moved = ss_loss(r, off, mask, 1).item();
  EXPECT_NEAR(moved - base, 0.5, 1e-9);
}

TEST(BceLoss, SpotValues) {
  Tensor half = Tensor::full({4, 1}, 0.5);
  Tensor labels = Tensor::from_values({4, 1}, {1.0, 0.0, 1.0, 0.0});
  EXPECT_NEAR(bce_loss(half, labels).item(), 0.6931471805599453, 1e-9);

  Tensor confident = Tensor::full({1, 1}, 1.0 - 1e-9);
  Tensor one = Tensor::full({1, 1}, 1.0);
  EXPECT_NEAR(bce_loss(confident, one).item(), 0.0, 1e-6);

  Tensor p09 = Tensor::full({1, 1}, 0.9);
  Tensor zero = Tensor::zeros({1, 1});
  EXPECT_NEAR(bce_loss(p09, zero).item(), 2.302585, 1e-6);
}

TEST(BceLoss, DomainErrorOutsideOpenInterval) {
  Tensor labels = Tensor::full({1, 1}, 1.0);
  EXPECT_THROW(bce_loss(Tensor::full({1, 1}, 0.0), labels), DomainError);
  EXPECT_THROW(bce_loss(Tensor::full({1, 1}, 1.0), labels), DomainError);
}

TEST(DsvbTotal, DisabledAdversaryDropsOut) {
  LossWeights w;
  w.lambda = 0.0;
  LossBreakdown a = dsvb_total(1.3, 0.4, 0.2, 0.9, w, 10, 1);
  LossBreakdown b = dsvb_total(1.3, 0.4, 0.2, 123.0, w, 10, 1);
  EXPECT_DOUBLE_EQ(a.total, b.total);
}

TEST(DsvbTotal, UnitPartsArithmetic) {
  LossWeights w;  // all weights 1
  LossBreakdown b = dsvb_total(1.0, 1.0, 1.0, 1.0, w, 1, 1);
  EXPECT_NEAR(b.total, 2.0, 1e-12);
}

TEST(DsvbTotal, BookkeepingIdentity) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    LossWeights w{rng.uniform(), rng.uniform(), rng.uniform()};
    const double recon = rng.normal(), kld = std::abs(rng.normal()), ss = rng.normal(),
                 bce = std::abs(rng.normal());
    LossBreakdown b = dsvb_total(recon, kld, ss, bce, w, 3, 2);
    EXPECT_NEAR(b.total,
                b.reconstruction_nll + w.kld_weight * b.kld + w.ss_weight * b.supervised_state_nll -
                    w.lambda * b.adversarial_bce,
                1e-12);
  }
}

TEST(Loss, KldComponentNonNegative) {
  Rng rng(12);
  VrnnModel m = make_vrnn(tiny_config(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> y_steps{rng.normal_tensor({2, 2}), rng.normal_tensor({2, 2})};
    Rng noise(100 + trial);
    Rollout r = filter_sequence(m, y_steps, 1, &noise);
    auto [recon, kld] = selbo_loss(r, y_steps);
    EXPECT_GE(kld.item(), 0.0);
  }
}

TEST(Loss, GeneratorObjectiveDecreasesUnderSmallStep) {
  // Ten random initialisations; a plain gradient step with lr 1e-4 on a
  // fixed batch must reduce the generator objective.
  for (int init = 0; init < 10; ++init) {
    Rng rng(200 + init);
    VrnnModel m = make_vrnn(tiny_config(), rng);
    std::vector<Tensor> y_steps{Rng(300 + init).normal_tensor({3, 2}),
                                Rng(400 + init).normal_tensor({3, 2})};
    std::vector<Tensor> noise{Rng(500 + init).normal_tensor({3, 3}),
                              Rng(600 + init).normal_tensor({3, 3})};
    std::vector<Tensor> labels{Rng(700 + init).normal_tensor({3, 3}),
                               Rng(800 + init).normal_tensor({3, 3})};
    std::vector<bool> mask{true, true};

    auto objective = [&]() {
      Rollout r = filter_sequence(m, y_steps, 1, nullptr, &noise);
      auto [recon, kld] = selbo_loss(r, y_steps);
      Tensor ss = ss_loss(r, labels, mask, 3);
      return add(add(recon, kld), ss);
    };

    Tensor before = objective();
    before.backward();
    for (auto& p : m.params()) {
      if (!p.has_grad()) continue;
      p.values() -= 1e-4 * p.grad();
      p.zero_grad();
    }
    NoGradGuard guard;
    EXPECT_LT(objective().item(), before.item()) << "init " << init;
  }
}

TEST(Loss, InvariantToBatchOrdering) {
  Rng rng(13);
  VrnnModel m = make_vrnn(tiny_config(), rng);
  Tensor y0 = Rng(14).normal_tensor({4, 2});
  Tensor y1 = Rng(15).normal_tensor({4, 2});
  // swap rows and recompute: permute sequences 0..3 -> 2,3,0,1
  auto permute = [](const Tensor& t) {
    Tensor out = Tensor::uninitialized(t.shape());
    const Index half = t.rows() / 2;
    out.matrix().topRows(half) = t.matrix().bottomRows(half);
    out.matrix().bottomRows(half) = t.matrix().topRows(half);
    return out;
  };
  std::vector<Tensor> batch_a{y0, y1};
  std::vector<Tensor> batch_b{permute(y0), permute(y1)};
  Rollout ra = filter_sequence(m, batch_a, 1, nullptr);
  Rollout rb = filter_sequence(m, batch_b, 1, nullptr);
  auto [recon_a, kld_a] = selbo_loss(ra, batch_a);
  auto [recon_b, kld_b] = selbo_loss(rb, batch_b);
  EXPECT_NEAR(recon_a.item(), recon_b.item(), 1e-9);
  EXPECT_NEAR(kld_a.item(), kld_b.item(), 1e-9);
}
