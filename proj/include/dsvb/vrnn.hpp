#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dsvb/cells.hpp"
#include "dsvb/gaussian.hpp"
#include "dsvb/nn.hpp"
#include "dsvb/ops.hpp"
#include "dsvb/rng.hpp"

namespace dsvb {

enum class CellKind { gru, lstm };

inline const char* to_string(CellKind k) { return k == CellKind::gru ? "gru" : "lstm"; }

struct VrnnConfig {
  Index n_y = 2;    // measurement dimension (pressure, flex)
  Index n_x = 22;   // latent/state dimension (10 markers x 2 + 2 forces)
  Index hidden = 128;
  Index feat_y_dim = 22;
  Index feat_x_dim = 32;
  std::vector<Index> prior_hidden{128};
  std::vector<Index> encoder_hidden{128, 128};
  std::vector<Index> decoder_hidden{128, 64};
  CellKind cell = CellKind::gru;
};

/// The variational RNN: per-step prior, encoder and decoder Gaussians tied
/// together by a recurrent hidden state over feature-encoded measurements
/// and latents.
struct VrnnModel {
  VrnnConfig cfg;
  Mlp feat_y;   // measurement features
  Mlp feat_x;   // latent/state features
  Mlp prior_net;
  Mlp encoder_net;
  Mlp decoder_net;
  std::variant<GruCell, LstmCell> cell;

  std::vector<NamedParam> named_params() const {
    std::vector<NamedParam> out;
    feat_y.collect_params("measurement_feature", out);
    feat_x.collect_params("state_feature", out);
    prior_net.collect_params("prior", out);
    encoder_net.collect_params("encoder", out);
    decoder_net.collect_params("decoder", out);
    if (const auto* gru = std::get_if<GruCell>(&cell)) {
      gru->collect_params("rnn", out);
    } else {
      std::get<LstmCell>(cell).collect_params("rnn", out);
    }
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& np : named_params()) out.push_back(np.tensor);
    return out;
  }

  Index param_count() const {
    Index n = 0;
    for (const auto& np : named_params()) n += np.tensor.size();
    return n;
  }
};

inline VrnnModel make_vrnn(const VrnnConfig& cfg, const Rng& rng) {
  VrnnModel m;
  m.cfg = cfg;
  m.feat_y = make_feature_net(cfg.n_y, cfg.feat_y_dim, rng, "measurement_feature");
  m.feat_x = make_feature_net(cfg.n_x, cfg.feat_x_dim, rng, "state_feature");
  m.prior_net = make_mlp(cfg.hidden, cfg.prior_hidden, 2 * cfg.n_x, rng, "prior");
  m.encoder_net =
      make_mlp(cfg.feat_y_dim + cfg.hidden, cfg.encoder_hidden, 2 * cfg.n_x, rng, "encoder");
  m.decoder_net =
      make_mlp(cfg.feat_x_dim + cfg.hidden, cfg.decoder_hidden, 2 * cfg.n_y, rng, "decoder");
  const Index rnn_in = cfg.feat_y_dim + cfg.feat_x_dim;
  if (cfg.cell == CellKind::gru) {
    m.cell = make_gru_cell(rnn_in, cfg.hidden, rng, "rnn");
  } else {
    m.cell = make_lstm_cell(rnn_in, cfg.hidden, rng, "rnn");
  }
  return m;
}

/// Recurrence state: the memory-encoding hidden vector(s), one row per
/// particle-sequence.
struct FilterState {
  Tensor hidden;      // [R x hidden]
  Tensor cell_state;  // [R x hidden], LSTM only (undefined for GRU)
  int step_index = 0;
};

inline FilterState initial_state(const VrnnModel& m, Index rows) {
  FilterState s;
  s.hidden = Tensor::zeros({rows, m.cfg.hidden});
  if (std::holds_alternative<LstmCell>(m.cell))
    s.cell_state = Tensor::zeros({rows, m.cfg.hidden});
  s.step_index = 0;
  return s;
}

inline GaussianParams prior_params(const VrnnModel& m, const FilterState& s) {
  return gaussian_head(m.prior_net.forward(s.hidden));
}

inline GaussianParams encode(const VrnnModel& m, const Tensor& y, const FilterState& s) {
  if (y.rank() != 2 || y.cols() != m.cfg.n_y)
    throw ShapeMismatch("encode: measurement " + shape_str(y.shape()));
  return gaussian_head(m.encoder_net.forward(concat_cols(m.feat_y.forward(y), s.hidden)));
}

inline GaussianParams decode(const VrnnModel& m, const Tensor& x, const FilterState& s) {
  if (x.rank() != 2 || x.cols() != m.cfg.n_x)
    throw ShapeMismatch("decode: latent " + shape_str(x.shape()));
  return gaussian_head(m.decoder_net.forward(concat_cols(m.feat_x.forward(x), s.hidden)));
}

/// Advances the hidden state from the previous measurement and latent.
inline FilterState recur(const VrnnModel& m, const Tensor& y_prev, const Tensor& x_prev,
                         const FilterState& s) {
  Tensor u = concat_cols(m.feat_y.forward(y_prev), m.feat_x.forward(x_prev));
  FilterState next;
  if (const auto* gru = std::get_if<GruCell>(&m.cell)) {
    next.hidden = gru_step(u, s.hidden, *gru);
  } else {
    auto [h, c] = lstm_step(u, s.hidden, s.cell_state, std::get<LstmCell>(m.cell));
    next.hidden = h;
    next.cell_state = c;
  }
  next.step_index = s.step_index + 1;
  return next;
}

struct RolloutStep {
  GaussianParams prior;      // p(x_n | history)          [R x n_x]
  GaussianParams posterior;  // q(x_n | y_n, history)     [R x n_x]
  GaussianParams decoded;    // p(y_n | x_n, history)     [R x n_y]
  Tensor latent;             // reparameterised particles [R x n_x]
  FilterState state;         // h_n entering this step
};

struct Rollout {
  std::vector<RolloutStep> steps;
  std::vector<Tensor> y_tiled;  // per-step targets, particle-tiled [R x n_y]
  Index batch = 0;
  int particles = 1;

  Index rows() const { return batch * particles; }
  Index length() const { return static_cast<Index>(steps.size()); }
};

namespace detail {

/// Repeats each block of B rows `times` times: [B x d] -> [B*times x d].
/// Data-level helper; the result is a leaf.
inline Tensor tile_rows(const Tensor& t, int times) {
  if (times == 1) return t;
  const Index b = t.rows(), d = t.cols();
  Tensor out = Tensor::uninitialized({b * times, d});
  MatMap om(out.values().data(), b * times, d);
  ConstMatMap im(t.values().data(), b, d);
  for (int k = 0; k < times; ++k) om.middleRows(k * b, b) = im;
  return out;
}

inline void check_step_finite(const RolloutStep& step, int n) {
  const bool ok = step.posterior.mean.all_finite() && step.posterior.std.all_finite() &&
                  step.prior.mean.all_finite() && step.prior.std.all_finite() &&
                  step.latent.all_finite() && step.decoded.mean.all_finite() &&
                  step.decoded.std.all_finite() && step.state.hidden.all_finite();
  if (!ok)
    throw NumericalDivergence("non-finite value in filter step " + std::to_string(n));
}

}  // namespace detail

/// Runs the sequential filter over a batch of measurement sequences.
/// `y_steps[n]` is the [B x n_y] measurement at step n (shared across
/// particles; rows are tiled to B*N internally). Noise comes from `rng`, or
/// is forced to zero when `rng` is null — the deterministic rollout used for
/// inference. `noise_override`, when given, supplies the per-step noise
/// tensors directly.
inline Rollout filter_sequence(const VrnnModel& m, const std::vector<Tensor>& y_steps,
                               int n_particles, Rng* rng,
                               const std::vector<Tensor>* noise_override = nullptr) {
  if (y_steps.empty()) throw ShapeMismatch("filter_sequence: empty sequence");
  if (n_particles < 1) throw ShapeMismatch("filter_sequence: n_particles must be >= 1");
  const Index batch = y_steps.front().rows();
  const Index rows = batch * n_particles;

  Rollout rollout;
  rollout.batch = batch;
  rollout.particles = n_particles;
  rollout.steps.reserve(y_steps.size());
  rollout.y_tiled.reserve(y_steps.size());

  FilterState state = initial_state(m, rows);
  for (std::size_t n = 0; n < y_steps.size(); ++n) {
    if (y_steps[n].rows() != batch || y_steps[n].cols() != m.cfg.n_y)
      throw ShapeMismatch("filter_sequence: step " + std::to_string(n) + " shape " +
                          shape_str(y_steps[n].shape()));
    Tensor y = detail::tile_rows(y_steps[n], n_particles);
    if (n > 0) state = recur(m, rollout.y_tiled[n - 1], rollout.steps[n - 1].latent, state);

    RolloutStep step;
    step.state = state;
    step.prior = prior_params(m, state);
    step.posterior = encode(m, y, state);
    Tensor noise;
    if (noise_override != nullptr) {
      noise = (*noise_override)[n];
      if (noise.shape() != step.posterior.mean.shape())
        throw ShapeMismatch("filter_sequence: noise override shape at step " + std::to_string(n));
    } else if (rng != nullptr) {
      noise = rng->normal_tensor({rows, m.cfg.n_x});
    } else {
      noise = Tensor::zeros({rows, m.cfg.n_x});
    }
    step.latent = reparameterize(step.posterior, noise);
    step.decoded = decode(m, step.latent, state);
    detail::check_step_finite(step, static_cast<int>(n));

    rollout.y_tiled.push_back(std::move(y));
    rollout.steps.push_back(std::move(step));
  }
  return rollout;
}

/// Single-sequence convenience overload: y_seq is [L+1 x n_y].
inline Rollout filter_sequence(const VrnnModel& m, const Tensor& y_seq, int n_particles,
                               Rng* rng) {
  if (y_seq.rank() != 2 || y_seq.cols() != m.cfg.n_y)
    throw ShapeMismatch("filter_sequence: sequence " + shape_str(y_seq.shape()));
  std::vector<Tensor> steps;
  steps.reserve(y_seq.rows());
  for (Index n = 0; n < y_seq.rows(); ++n) steps.push_back(slice_rows(y_seq, n, 1).detach());
  return filter_sequence(m, steps, n_particles, rng);
}

}  // namespace dsvb
