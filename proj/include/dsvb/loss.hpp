#pragma once

#include <cmath>
#include <vector>

#include "dsvb/gaussian.hpp"
#include "dsvb/ops.hpp"
#include "dsvb/vrnn.hpp"

namespace dsvb {

struct LossWeights {
  double kld_weight = 1.0;
  double ss_weight = 1.0;
  double lambda = 1.0;  // adversarial coupling
};

/// Scalar record of one objective evaluation. The generator view combines
/// the parts as recon + kw*kld + sw*ss - lambda*bce; the discriminator's own
/// objective is the bce part alone.
struct LossBreakdown {
  double reconstruction_nll = 0.0;
  double kld = 0.0;
  double supervised_state_nll = 0.0;
  double adversarial_bce = 0.0;
  double total = 0.0;
  int steps = 0;
  int particles = 1;
};

/// Reconstruction NLL and analytic KLD of a rollout: sums over steps and
/// dims, means over particles and over the sequences in the batch.
inline std::pair<Tensor, Tensor> selbo_loss(const Rollout& rollout,
                                            const std::vector<Tensor>& y_steps) {
  if (static_cast<Index>(y_steps.size()) != rollout.length())
    throw ShapeMismatch("selbo_loss: rollout length " + std::to_string(rollout.length()) +
                        " vs " + std::to_string(y_steps.size()) + " targets");
  const double inv_rows = 1.0 / static_cast<double>(rollout.rows());
  Tensor recon = Tensor::scalar(0.0);
  Tensor kld = Tensor::scalar(0.0);
  for (Index n = 0; n < rollout.length(); ++n) {
    Tensor y = detail::tile_rows(y_steps[n], rollout.particles);
    const RolloutStep& step = rollout.steps[n];
    recon = add(recon, scale(gaussian_nll(y, step.decoded), inv_rows));
    kld = add(kld, scale(gaussian_kl(step.posterior, step.prior), inv_rows));
  }
  if (!recon.all_finite() || !kld.all_finite())
    throw NumericalDivergence("selbo_loss: non-finite objective");
  return {recon, kld};
}

/// Semi-supervised state term: NLL of the partial state labels under the
/// conditional latent prior, active only where the per-step indicator is
/// set. Labels cover the first `labeled_rows` sequences of the batch (the
/// source half); target sequences contribute exactly nothing.
inline Tensor ss_loss(const Rollout& rollout, const std::vector<Tensor>& x_star_steps,
                      const std::vector<bool>& available, Index labeled_rows) {
  if (static_cast<Index>(available.size()) != rollout.length())
    throw ShapeMismatch("ss_loss: mask length mismatch");
  bool any = false;
  for (bool b : available) any = any || b;
  if (!any || labeled_rows == 0) return Tensor::scalar(0.0);
  if (static_cast<Index>(x_star_steps.size()) != rollout.length())
    throw ShapeMismatch("ss_loss: label steps mismatch");
  if (labeled_rows > rollout.batch)
    throw ShapeMismatch("ss_loss: labeled_rows exceeds batch");

  const Index rows = labeled_rows * rollout.particles;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  Tensor total = Tensor::scalar(0.0);
  for (Index n = 0; n < rollout.length(); ++n) {
    if (!available[n]) continue;
    const RolloutStep& step = rollout.steps[n];
    GaussianParams prior_slice{slice_rows(step.prior.mean, 0, rows),
                               slice_rows(step.prior.std, 0, rows)};
    Tensor x_star = detail::tile_rows(x_star_steps[n], rollout.particles);
    if (x_star.rows() != rows)
      throw ShapeMismatch("ss_loss: label rows at step " + std::to_string(n));
    total = add(total, scale(gaussian_nll(x_star, prior_slice), inv_rows));
  }
  return total;
}

/// Probabilistic binary cross entropy over per-sequence (per-particle)
/// domain probabilities. Probabilities must lie strictly inside (0,1); they
/// are clamped at 1e-7 from both ends before the logs.
inline Tensor bce_loss(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape())
    throw ShapeMismatch("bce_loss: probs " + shape_str(probs.shape()) + " vs labels " +
                        shape_str(labels.shape()));
  if ((probs.values() <= 0.0).any() || (probs.values() >= 1.0).any())
    throw DomainError("bce_loss: probability outside (0,1)");
  Tensor p = clamp(probs, 1e-7, 1.0 - 1e-7);
  Tensor pos = mul(labels, log(p));
  Tensor neg_part = mul(one_minus(labels), log(one_minus(p)));
  return scale(sum(add(pos, neg_part)), -1.0 / static_cast<double>(probs.size()));
}

/// Assembles the recorded breakdown. The generator objective is what the
/// VRNN descends; the adversary enters with a negative sign so that
/// generator descent pushes the discriminator loss up.
inline LossBreakdown dsvb_total(double reconstruction_nll, double kld,
                                double supervised_state_nll, double adversarial_bce,
                                const LossWeights& w, int steps, int particles) {
  LossBreakdown b;
  b.reconstruction_nll = reconstruction_nll;
  b.kld = kld;
  b.supervised_state_nll = supervised_state_nll;
  b.adversarial_bce = adversarial_bce;
  b.steps = steps;
  b.particles = particles;
  b.total = reconstruction_nll + w.kld_weight * kld + w.ss_weight * supervised_state_nll -
            w.lambda * adversarial_bce;
  return b;
}

}  // namespace dsvb
