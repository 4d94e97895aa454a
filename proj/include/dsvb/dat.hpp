#pragma once

#include <string>
#include <vector>

#include "dsvb/adam.hpp"
#include "dsvb/cells.hpp"
#include "dsvb/loss.hpp"
#include "dsvb/nn.hpp"
#include "dsvb/vrnn.hpp"

namespace dsvb {

/// Domain discriminator: a GRU over latent particle sequences and a logistic
/// head on the final hidden state. Emits one probability per window; label
/// convention is source = 1, target = 0.
struct Discriminator {
  GruCell rnn;
  Mlp head;

  std::vector<NamedParam> named_params() const {
    std::vector<NamedParam> out;
    rnn.collect_params("disc.rnn", out);
    head.collect_params("disc.head", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& np : named_params()) out.push_back(np.tensor);
    return out;
  }
};

inline Discriminator make_discriminator(Index n_x, Index hidden, const Rng& rng) {
  Discriminator d;
  d.rnn = make_gru_cell(n_x, hidden, rng, "disc.rnn");
  d.head = make_mlp(hidden, {hidden}, 1, rng, "disc.head");
  return d;
}

/// Probability that each latent sequence comes from the source domain.
inline Tensor classify(const Discriminator& disc, const std::vector<Tensor>& latent_steps) {
  if (latent_steps.empty()) throw ShapeMismatch("classify: empty latent sequence");
  const Index rows = latent_steps.front().rows();
  Tensor h = Tensor::zeros({rows, disc.rnn.hidden_size});
  for (const Tensor& x : latent_steps) {
    if (x.rows() != rows || x.cols() != disc.rnn.input_size)
      throw ShapeMismatch("classify: latent step " + shape_str(x.shape()));
    h = gru_step(x, h, disc.rnn);
  }
  return sigmoid(disc.head.forward(h));
}

/// One training batch, already windowed and normalised. Source sequences
/// occupy the first `n_source` batch slots; state labels cover exactly those
/// slots.
struct PreparedBatch {
  std::vector<Tensor> y_steps;       // per step [B x n_y]
  std::vector<Tensor> x_star_steps;  // per step [n_source x n_x]; empty if unlabeled
  Index n_source = 0;
  Index n_target = 0;

  Index batch() const { return n_source + n_target; }
  Index length() const { return static_cast<Index>(y_steps.size()); }
};

struct RoundResult {
  LossBreakdown breakdown;
  double disc_loss = 0.0;      // discriminator BCE on detached latents, post-update
  double disc_accuracy = 0.0;  // thresholded at 0.5 on the same latents
};

namespace detail {

inline Tensor domain_labels(Index n_source, Index n_target, int particles) {
  Tensor labels = Tensor::uninitialized({(n_source + n_target) * particles, 1});
  for (int k = 0; k < particles; ++k) {
    const Index base = k * (n_source + n_target);
    for (Index i = 0; i < n_source; ++i) labels.values()(base + i) = 1.0;
    for (Index i = 0; i < n_target; ++i) labels.values()(base + n_source + i) = 0.0;
  }
  return labels;
}

inline double classification_accuracy(const Tensor& probs, const Tensor& labels) {
  Index hits = 0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double predicted = probs[i] >= 0.5 ? 1.0 : 0.0;
    if (predicted == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

}  // namespace detail

/// One alternating adversarial update:
///   step 1 — the discriminator descends its BCE on detached latents from
///            both domains;
///   step 2 — the VRNN descends recon + kld (both domains) + ss (source
///            only) - lambda * bce with the discriminator frozen.
/// The same rollout feeds both steps; with lambda == 0 the discriminator
/// pass is skipped entirely and step 2 reduces to plain training.
inline RoundResult adversarial_round(const VrnnModel& model, const Discriminator& disc,
                                     const PreparedBatch& batch, AdamOptimizer& opt_model,
                                     AdamOptimizer& opt_disc, const LossWeights& weights,
                                     double lambda_eff, int n_particles, Rng& noise_rng,
                                     bool train_disc = true) {
  Rollout rollout = filter_sequence(model, batch.y_steps, n_particles, &noise_rng);

  Tensor labels = detail::domain_labels(batch.n_source, batch.n_target, n_particles);
  RoundResult result;

  // Step 1: discriminator on detached latents. Detaching keeps discriminator
  // learning from reshaping the latent space directly.
  if (train_disc && batch.n_target > 0) {
    std::vector<Tensor> detached;
    detached.reserve(rollout.steps.size());
    for (const auto& step : rollout.steps) detached.push_back(step.latent.detach());
    Tensor probs = classify(disc, detached);
    Tensor d_loss = bce_loss(probs, labels);
    opt_disc.zero_grad();
    d_loss.backward();
    opt_disc.step();
    {
      NoGradGuard guard;
      Tensor after = classify(disc, detached);
      result.disc_loss = bce_loss(after, labels).item();
      result.disc_accuracy = detail::classification_accuracy(after, labels);
    }
  }

  // Step 2: generator update, discriminator frozen.
  auto [recon, kld] = selbo_loss(rollout, batch.y_steps);
  std::vector<bool> available(batch.y_steps.size(), !batch.x_star_steps.empty());
  Tensor ss = ss_loss(rollout, batch.x_star_steps, available, batch.n_source);

  Tensor bce = Tensor::scalar(0.0);
  if (lambda_eff != 0.0 && batch.n_target > 0) {
    std::vector<Tensor> live;
    live.reserve(rollout.steps.size());
    for (const auto& step : rollout.steps) live.push_back(step.latent);
    bce = bce_loss(classify(disc, live), labels);
  }

  Tensor generator_objective =
      add(add(recon, scale(kld, weights.kld_weight)),
          sub(scale(ss, weights.ss_weight), scale(bce, lambda_eff)));

  result.breakdown = dsvb_total(recon.item(), kld.item(), ss.item(), bce.item(),
                                LossWeights{weights.kld_weight, weights.ss_weight, lambda_eff},
                                static_cast<int>(batch.length()), n_particles);

  opt_model.zero_grad();
  // gradients land on discriminator parameters too; they are cleared, not
  // applied, so the freeze holds
  opt_disc.zero_grad();
  generator_objective.backward();
  opt_model.step();
  opt_disc.zero_grad();
  return result;
}

}  // namespace dsvb
