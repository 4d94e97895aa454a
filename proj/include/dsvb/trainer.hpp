#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dsvb/adam.hpp"
#include "dsvb/baseline.hpp"
#include "dsvb/dat.hpp"
#include "dsvb/data.hpp"
#include "dsvb/loss.hpp"
#include "dsvb/model_io.hpp"
#include "dsvb/scenarios.hpp"
#include "dsvb/vrnn.hpp"

namespace dsvb {

struct TrainConfig {
  Index seq_len = 100;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  int epochs = 50;
  int n_particles = 1;
  double lambda = 1.0;
  double kld_weight = 1.0;
  double ss_weight = 1.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  CellKind cell = CellKind::gru;
  Index hidden_size = 128;
  Index window_stride = 10;        // training windows overlap
  double validation_fraction = 0.1;
  double warmup_fraction = 0.1;    // lambda ramps linearly over the first epochs
  double disc_lr_scale = 1.0;      // discriminator learning rate multiplier

  void validate() const {
    if (seq_len <= 0 || batch_size <= 1 || learning_rate <= 0 || epochs <= 0 ||
        n_particles <= 0 || hidden_size <= 0 || window_stride <= 0 || seeds.empty())
      throw Error("TrainConfig: all sizes must be positive");
  }

  VrnnConfig vrnn_config() const {
    VrnnConfig cfg;
    cfg.cell = cell;
    cfg.hidden = hidden_size;
    return cfg;
  }

  double lambda_at_epoch(int epoch) const {
    const int warmup = std::max(1, static_cast<int>(std::ceil(warmup_fraction * epochs)));
    return lambda * std::min(1.0, static_cast<double>(epoch + 1) / warmup);
  }
};

struct EpochStats {
  int epoch = 0;
  LossBreakdown mean_loss;
  double disc_loss = 0.0;
  double disc_val_accuracy = 0.5;
  double source_val_rmse = 0.0;
  double ss_on_target = 0.0;  // audited every epoch; must be exactly zero
  double lambda_eff = 0.0;
  int rounds = 0;
};

using RoundLogger = std::function<void(int epoch, int round, const LossBreakdown&)>;

// ---------------------------------------------------------------------------
// Window/batch assembly
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Tensor> measurement_steps(const std::vector<const SequenceWindow*>& wins,
                                             Index seq_len) {
  const Index b = static_cast<Index>(wins.size());
  std::vector<Tensor> steps;
  steps.reserve(seq_len);
  for (Index n = 0; n < seq_len; ++n) {
    Tensor t = Tensor::uninitialized({b, wins[0]->measurements.cols()});
    for (Index i = 0; i < b; ++i) t.matrix().row(i) = wins[i]->measurements.row(n);
    steps.push_back(std::move(t));
  }
  return steps;
}

inline std::vector<Tensor> state_steps(const std::vector<const SequenceWindow*>& wins,
                                       Index seq_len) {
  const Index b = static_cast<Index>(wins.size());
  std::vector<Tensor> steps;
  steps.reserve(seq_len);
  for (Index n = 0; n < seq_len; ++n) {
    Tensor t = Tensor::uninitialized({b, wins[0]->states->cols()});
    for (Index i = 0; i < b; ++i) t.matrix().row(i) = wins[i]->states->row(n);
    steps.push_back(std::move(t));
  }
  return steps;
}

/// Source windows first, then target; labels cover the source slots.
inline PreparedBatch prepare_batch(const std::vector<const SequenceWindow*>& source,
                                   const std::vector<const SequenceWindow*>& target,
                                   Index seq_len) {
  PreparedBatch batch;
  batch.n_source = static_cast<Index>(source.size());
  batch.n_target = static_cast<Index>(target.size());
  std::vector<const SequenceWindow*> all = source;
  all.insert(all.end(), target.begin(), target.end());
  batch.y_steps = measurement_steps(all, seq_len);
  if (!source.empty() && source[0]->states.has_value())
    batch.x_star_steps = state_steps(source, seq_len);
  return batch;
}

inline int env_thread_cap() {
  if (const char* env = std::getenv("DSVB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// State estimation and RMSE
// ---------------------------------------------------------------------------

struct StateEstimate {
  MatrixRM mean;  // [T' x n_x], normalised units
  MatrixRM std;   // per-dim posterior std
};

/// Posterior-mean estimates over non-overlapping windows, batched into one
/// deterministic (zero-noise) rollout. Rows beyond the last full window are
/// dropped.
inline StateEstimate dsvb_estimate_windowed(const VrnnModel& model, const MatrixRM& meas,
                                            Index seq_len) {
  const Index n_windows = meas.rows() / seq_len;
  if (n_windows == 0)
    throw TooShort("dsvb_estimate_windowed: " + std::to_string(meas.rows()) + " rows < seq_len");
  NoGradGuard guard;
  std::vector<Tensor> steps;
  steps.reserve(seq_len);
  for (Index n = 0; n < seq_len; ++n) {
    Tensor t = Tensor::uninitialized({n_windows, meas.cols()});
    for (Index w = 0; w < n_windows; ++w) t.matrix().row(w) = meas.row(w * seq_len + n);
    steps.push_back(std::move(t));
  }
  Rollout rollout = filter_sequence(model, steps, 1, nullptr);
  StateEstimate est;
  est.mean.resize(n_windows * seq_len, model.cfg.n_x);
  est.std.resize(n_windows * seq_len, model.cfg.n_x);
  for (Index n = 0; n < seq_len; ++n) {
    for (Index w = 0; w < n_windows; ++w) {
      est.mean.row(w * seq_len + n) = rollout.steps[n].posterior.mean.matrix().row(w);
      est.std.row(w * seq_len + n) = rollout.steps[n].posterior.std.matrix().row(w);
    }
  }
  return est;
}

/// One continuous rollout over the whole sequence; row-aligned with the
/// input (online filtering, used by inference and latent export).
inline StateEstimate dsvb_estimate_full(const VrnnModel& model, const MatrixRM& meas) {
  NoGradGuard guard;
  std::vector<Tensor> steps;
  steps.reserve(meas.rows());
  for (Index n = 0; n < meas.rows(); ++n) {
    Tensor t = Tensor::uninitialized({1, meas.cols()});
    t.matrix().row(0) = meas.row(n);
    steps.push_back(std::move(t));
  }
  Rollout rollout = filter_sequence(model, steps, 1, nullptr);
  StateEstimate est;
  est.mean.resize(meas.rows(), model.cfg.n_x);
  est.std.resize(meas.rows(), model.cfg.n_x);
  for (Index n = 0; n < meas.rows(); ++n) {
    est.mean.row(n) = rollout.steps[n].posterior.mean.matrix().row(0);
    est.std.row(n) = rollout.steps[n].posterior.std.matrix().row(0);
  }
  return est;
}

inline MatrixRM baseline_estimate_windowed(const BaselineModel& model, const MatrixRM& meas,
                                           Index seq_len) {
  const Index n_windows = meas.rows() / seq_len;
  if (n_windows == 0)
    throw TooShort("baseline_estimate_windowed: rows < seq_len");
  NoGradGuard guard;
  std::vector<Tensor> steps;
  for (Index n = 0; n < seq_len; ++n) {
    Tensor t = Tensor::uninitialized({n_windows, meas.cols()});
    for (Index w = 0; w < n_windows; ++w) t.matrix().row(w) = meas.row(w * seq_len + n);
    steps.push_back(std::move(t));
  }
  std::vector<Tensor> estimates = baseline_forward(model, steps);
  MatrixRM out(n_windows * seq_len, model.n_x);
  for (Index n = 0; n < seq_len; ++n)
    for (Index w = 0; w < n_windows; ++w)
      out.row(w * seq_len + n) = estimates[n].matrix().row(w);
  return out;
}

inline double rmse(const MatrixRM& a, const MatrixRM& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("rmse: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  return std::sqrt((a - b).array().square().mean());
}

inline Eigen::VectorXd per_channel_rmse(const MatrixRM& a, const MatrixRM& b) {
  return (a - b).array().square().colwise().mean().sqrt().transpose();
}

// ---------------------------------------------------------------------------
// DSVB training
// ---------------------------------------------------------------------------

struct DsvbTrainResult {
  VrnnModel model;
  Discriminator disc;
  NormalizationStats stats;
  std::vector<EpochStats> history;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // lowest source-validation RMSE
  double best_val_rmse = 0.0;
  std::optional<int> diverged_epoch;
};

namespace detail {

inline std::vector<Array> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<Array> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.values());
  return out;
}

inline void restore_snapshot(const std::vector<Tensor>& params, const std::vector<Array>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    const_cast<Tensor&>(params[i]).values() = snap[i];
}

inline std::vector<const SequenceWindow*> pick_windows(const std::vector<SequenceWindow>& pool,
                                                       const std::vector<Index>& order,
                                                       Index start, Index count) {
  std::vector<const SequenceWindow*> out;
  out.reserve(count);
  const Index n = static_cast<Index>(pool.size());
  for (Index i = 0; i < count; ++i) out.push_back(&pool[order[(start + i) % n]]);
  return out;
}

/// Normalized source-validation RMSE from posterior means.
inline double source_validation_rmse(const VrnnModel& model,
                                     const std::vector<SequenceWindow>& val_windows,
                                     Index seq_len) {
  if (val_windows.empty()) return 0.0;
  NoGradGuard guard;
  std::vector<const SequenceWindow*> ptrs;
  for (const auto& w : val_windows) ptrs.push_back(&w);
  std::vector<Tensor> y_steps = measurement_steps(ptrs, seq_len);
  std::vector<Tensor> x_steps = state_steps(ptrs, seq_len);
  Rollout rollout = filter_sequence(model, y_steps, 1, nullptr);
  double acc = 0.0;
  Index count = 0;
  for (Index n = 0; n < rollout.length(); ++n) {
    acc += (rollout.steps[n].posterior.mean.values() - x_steps[n].values()).square().sum();
    count += x_steps[n].size();
  }
  return std::sqrt(acc / static_cast<double>(count));
}

/// Balanced held-out discriminator accuracy on deterministic latents.
inline double disc_validation_accuracy(const VrnnModel& model, const Discriminator& disc,
                                       const std::vector<SequenceWindow>& src_val,
                                       const std::vector<SequenceWindow>& tgt_val,
                                       Index seq_len) {
  const Index n = std::min(src_val.size(), tgt_val.size());
  if (n == 0) return 0.5;
  NoGradGuard guard;
  std::vector<const SequenceWindow*> ptrs;
  for (Index i = 0; i < n; ++i) ptrs.push_back(&src_val[i]);
  for (Index i = 0; i < n; ++i) ptrs.push_back(&tgt_val[i]);
  std::vector<Tensor> y_steps = measurement_steps(ptrs, seq_len);
  Rollout rollout = filter_sequence(model, y_steps, 1, nullptr);
  std::vector<Tensor> latents;
  for (const auto& step : rollout.steps) latents.push_back(step.latent);
  Tensor probs = classify(disc, latents);
  Tensor labels = domain_labels(n, n, 1);
  return classification_accuracy(probs, labels);
}

/// Per-epoch audit: the semi-supervised term evaluated on target-only data
/// with the indicator clear must be exactly zero.
inline double audit_ss_on_target(const VrnnModel& model,
                                 const std::vector<SequenceWindow>& tgt_val, Index seq_len) {
  if (tgt_val.empty()) return 0.0;
  NoGradGuard guard;
  std::vector<const SequenceWindow*> ptrs;
  const Index n = std::min<Index>(4, static_cast<Index>(tgt_val.size()));
  for (Index i = 0; i < n; ++i) ptrs.push_back(&tgt_val[i]);
  std::vector<Tensor> y_steps = measurement_steps(ptrs, seq_len);
  Rollout rollout = filter_sequence(model, y_steps, 1, nullptr);
  std::vector<bool> mask(y_steps.size(), false);
  return ss_loss(rollout, {}, mask, 0).item();
}

}  // namespace detail

/// Full adversarial training run on one seed: mixed half-source/half-target
/// batches, alternating discriminator/generator updates, per-epoch
/// validation and checkpoints. On numerical divergence the parameters are
/// rolled back to the last completed epoch and the epoch index is recorded.
inline DsvbTrainResult train(const TrainConfig& config, const SequenceDataset& source,
                             const SequenceDataset& target, std::uint64_t seed,
                             const RoundLogger& logger = nullptr) {
  config.validate();
  if (source.rows() == 0 || target.rows() == 0) throw EmptyDataset("train: empty dataset");
  if (!source.labeled()) throw SchemaError("train: source dataset must carry state labels");
  if (source.measurements.cols() != target.measurements.cols())
    throw ShapeMismatch("train: measurement dimensions differ across domains");

  DsvbTrainResult result;
  result.stats = fit_normalizer(source);
  SequenceDataset source_n = apply_normalizer(result.stats, source);
  SequenceDataset target_n = apply_normalizer(result.stats, target);
  source_n.domain = Domain::source;
  target_n.domain = Domain::target;

  std::vector<SequenceWindow> src_windows = window(source_n, config.seq_len, config.window_stride);
  std::vector<SequenceWindow> tgt_windows = window(target_n, config.seq_len, config.window_stride);

  Rng base(seed);
  Rng shuffle_rng = base.fork("shuffle");
  Rng noise_rng = base.fork("noise");

  // carve validation splits
  auto carve = [&](std::vector<SequenceWindow>& pool, const char* label) {
    std::vector<Index> order(pool.size());
    for (Index i = 0; i < static_cast<Index>(pool.size()); ++i) order[i] = i;
    base.fork(std::string("val_split/") + label).shuffle(order.begin(), order.end());
    const Index n_val = std::max<Index>(
        1, static_cast<Index>(config.validation_fraction * static_cast<double>(pool.size())));
    std::vector<SequenceWindow> val, train_pool;
    for (Index i = 0; i < static_cast<Index>(pool.size()); ++i) {
      if (i < n_val) {
        val.push_back(std::move(pool[order[i]]));
      } else {
        train_pool.push_back(std::move(pool[order[i]]));
      }
    }
    pool = std::move(train_pool);
    return val;
  };
  std::vector<SequenceWindow> src_val = carve(src_windows, "source");
  std::vector<SequenceWindow> tgt_val = carve(tgt_windows, "target");
  if (src_windows.empty() || tgt_windows.empty())
    throw EmptyDataset("train: not enough windows after the validation split");

  VrnnConfig vcfg = config.vrnn_config();
  result.model = make_vrnn(vcfg, base);
  result.disc = make_discriminator(vcfg.n_x, config.hidden_size, base);
  AdamOptimizer opt_model(result.model.params(), config.learning_rate);
  AdamOptimizer opt_disc(result.disc.params(), config.learning_rate * config.disc_lr_scale);

  const Index half = std::max<Index>(1, config.batch_size / 2);
  const Index n_src = static_cast<Index>(src_windows.size());
  const Index n_tgt = static_cast<Index>(tgt_windows.size());
  const Index rounds_per_epoch = (std::max(n_src, n_tgt) + half - 1) / half;

  LossWeights weights{config.kld_weight, config.ss_weight, config.lambda};
  std::vector<Array> model_snapshot = detail::snapshot_params(result.model.params());
  std::vector<Array> disc_snapshot = detail::snapshot_params(result.disc.params());
  result.best_val_rmse = std::numeric_limits<double>::infinity();

  std::vector<Index> src_order(n_src), tgt_order(n_tgt);
  for (Index i = 0; i < n_src; ++i) src_order[i] = i;
  for (Index i = 0; i < n_tgt; ++i) tgt_order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(src_order.begin(), src_order.end());
    shuffle_rng.shuffle(tgt_order.begin(), tgt_order.end());
    const double lambda_eff = config.lambda_at_epoch(epoch);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lambda_eff = lambda_eff;
    bool diverged = false;
    try {
      for (Index round = 0; round < rounds_per_epoch; ++round) {
        auto src_batch = detail::pick_windows(src_windows, src_order, round * half, half);
        auto tgt_batch = detail::pick_windows(tgt_windows, tgt_order, round * half, half);
        PreparedBatch batch = detail::prepare_batch(src_batch, tgt_batch, config.seq_len);
        RoundResult rr = adversarial_round(result.model, result.disc, batch, opt_model, opt_disc,
                                           weights, lambda_eff, config.n_particles, noise_rng);
        stats.mean_loss.reconstruction_nll += rr.breakdown.reconstruction_nll;
        stats.mean_loss.kld += rr.breakdown.kld;
        stats.mean_loss.supervised_state_nll += rr.breakdown.supervised_state_nll;
        stats.mean_loss.adversarial_bce += rr.breakdown.adversarial_bce;
        stats.mean_loss.total += rr.breakdown.total;
        stats.disc_loss += rr.disc_loss;
        ++stats.rounds;
        if (logger) logger(epoch, static_cast<int>(round), rr.breakdown);
      }
    } catch (const NumericalDivergence&) {
      detail::restore_snapshot(result.model.params(), model_snapshot);
      detail::restore_snapshot(result.disc.params(), disc_snapshot);
      result.diverged_epoch = epoch;
      diverged = true;
    }
    if (diverged) break;

    const double inv = 1.0 / std::max(1, stats.rounds);
    stats.mean_loss.reconstruction_nll *= inv;
    stats.mean_loss.kld *= inv;
    stats.mean_loss.supervised_state_nll *= inv;
    stats.mean_loss.adversarial_bce *= inv;
    stats.mean_loss.total *= inv;
    stats.mean_loss.steps = static_cast<int>(config.seq_len);
    stats.mean_loss.particles = config.n_particles;
    stats.disc_loss *= inv;
    stats.disc_val_accuracy = detail::disc_validation_accuracy(result.model, result.disc, src_val,
                                                               tgt_val, config.seq_len);
    stats.source_val_rmse =
        detail::source_validation_rmse(result.model, src_val, config.seq_len);
    stats.ss_on_target = detail::audit_ss_on_target(result.model, tgt_val, config.seq_len);
    result.history.push_back(stats);

    model_snapshot = detail::snapshot_params(result.model.params());
    disc_snapshot = detail::snapshot_params(result.disc.params());

    if (stats.source_val_rmse < result.best_val_rmse) {
      result.best_val_rmse = stats.source_val_rmse;
      result.best_checkpoint = make_dsvb_checkpoint(
          result.model, result.disc, result.stats,
          {{"seed", seed}, {"epoch", epoch}, {"selection", "best_source_validation"}});
    }
  }

  result.final_checkpoint =
      make_dsvb_checkpoint(result.model, result.disc, result.stats,
                           {{"seed", seed},
                            {"epoch", static_cast<int>(result.history.size()) - 1},
                            {"selection", "final"}});
  if (result.best_checkpoint.tensors.empty()) result.best_checkpoint = result.final_checkpoint;
  return result;
}

// ---------------------------------------------------------------------------
// Baseline training
// ---------------------------------------------------------------------------

struct BaselineTrainResult {
  BaselineModel model;
  NormalizationStats stats;
  std::vector<EpochStats> history;  // reconstruction_nll field carries the MSE
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  double best_val_rmse = 0.0;
  std::optional<int> diverged_epoch;
};

namespace detail {

inline double baseline_validation_rmse(const BaselineModel& model,
                                       const std::vector<SequenceWindow>& val_windows,
                                       Index seq_len) {
  if (val_windows.empty()) return 0.0;
  NoGradGuard guard;
  std::vector<const SequenceWindow*> ptrs;
  for (const auto& w : val_windows) ptrs.push_back(&w);
  std::vector<Tensor> y_steps = measurement_steps(ptrs, seq_len);
  std::vector<Tensor> x_steps = state_steps(ptrs, seq_len);
  std::vector<Tensor> estimates = baseline_forward(model, y_steps);
  double acc = 0.0;
  Index count = 0;
  for (Index n = 0; n < seq_len; ++n) {
    acc += (estimates[n].values() - x_steps[n].values()).square().sum();
    count += x_steps[n].size();
  }
  return std::sqrt(acc / static_cast<double>(count));
}

}  // namespace detail

/// Supervised regression from measurement windows to state labels on the
/// source domain, mean-squared-error objective, same optimizer protocol.
inline BaselineTrainResult train_baseline(const TrainConfig& config,
                                          const SequenceDataset& source, std::uint64_t seed,
                                          const RoundLogger& logger = nullptr) {
  config.validate();
  if (source.rows() == 0) throw EmptyDataset("train_baseline: empty dataset");
  if (!source.labeled()) throw SchemaError("train_baseline: source must carry state labels");

  BaselineTrainResult result;
  result.stats = fit_normalizer(source);
  SequenceDataset source_n = apply_normalizer(result.stats, source);

  std::vector<SequenceWindow> windows = window(source_n, config.seq_len, config.window_stride);
  Rng base(seed);
  Rng shuffle_rng = base.fork("shuffle");

  std::vector<Index> order(windows.size());
  for (Index i = 0; i < static_cast<Index>(windows.size()); ++i) order[i] = i;
  base.fork("val_split/source").shuffle(order.begin(), order.end());
  const Index n_val = std::max<Index>(
      1, static_cast<Index>(config.validation_fraction * static_cast<double>(windows.size())));
  std::vector<SequenceWindow> val, train_pool;
  for (Index i = 0; i < static_cast<Index>(windows.size()); ++i) {
    if (i < n_val) {
      val.push_back(std::move(windows[order[i]]));
    } else {
      train_pool.push_back(std::move(windows[order[i]]));
    }
  }
  if (train_pool.empty()) throw EmptyDataset("train_baseline: not enough windows");

  result.model = make_baseline(source_n.measurements.cols(), source_n.states->cols(),
                               config.hidden_size, config.cell, base);
  AdamOptimizer opt(result.model.params(), config.learning_rate);

  const Index n_train = static_cast<Index>(train_pool.size());
  const Index rounds_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  std::vector<Index> train_order(n_train);
  for (Index i = 0; i < n_train; ++i) train_order[i] = i;

  std::vector<Array> snapshot = detail::snapshot_params(result.model.params());
  result.best_val_rmse = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(train_order.begin(), train_order.end());
    EpochStats stats;
    stats.epoch = epoch;
    bool diverged = false;
    try {
      for (Index round = 0; round < rounds_per_epoch; ++round) {
        auto batch_ptrs = detail::pick_windows(train_pool, train_order,
                                               round * config.batch_size, config.batch_size);
        std::vector<Tensor> y_steps = detail::measurement_steps(batch_ptrs, config.seq_len);
        std::vector<Tensor> x_steps = detail::state_steps(batch_ptrs, config.seq_len);
        std::vector<Tensor> estimates = baseline_forward(result.model, y_steps);
        Tensor loss = Tensor::scalar(0.0);
        for (Index n = 0; n < config.seq_len; ++n)
          loss = add(loss, mean(square(sub(estimates[n], x_steps[n]))));
        loss = scale(loss, 1.0 / static_cast<double>(config.seq_len));
        if (!loss.all_finite()) throw NumericalDivergence("baseline loss non-finite");
        opt.zero_grad();
        loss.backward();
        opt.step();
        stats.mean_loss.reconstruction_nll += loss.item();
        stats.mean_loss.total += loss.item();
        ++stats.rounds;
        if (logger) logger(epoch, static_cast<int>(round), stats.mean_loss);
      }
    } catch (const NumericalDivergence&) {
      detail::restore_snapshot(result.model.params(), snapshot);
      result.diverged_epoch = epoch;
      diverged = true;
    }
    if (diverged) break;

    const double inv = 1.0 / std::max(1, stats.rounds);
    stats.mean_loss.reconstruction_nll *= inv;
    stats.mean_loss.total *= inv;
    stats.source_val_rmse = detail::baseline_validation_rmse(result.model, val, config.seq_len);
    result.history.push_back(stats);
    snapshot = detail::snapshot_params(result.model.params());

    if (stats.source_val_rmse < result.best_val_rmse) {
      result.best_val_rmse = stats.source_val_rmse;
      result.best_checkpoint = make_baseline_checkpoint(
          result.model, result.stats,
          {{"seed", seed}, {"epoch", epoch}, {"selection", "best_source_validation"}});
    }
  }

  result.final_checkpoint =
      make_baseline_checkpoint(result.model, result.stats,
                               {{"seed", seed},
                                {"epoch", static_cast<int>(result.history.size()) - 1},
                                {"selection", "final"}});
  if (result.best_checkpoint.tensors.empty()) result.best_checkpoint = result.final_checkpoint;
  return result;
}

// ---------------------------------------------------------------------------
// Experiment orchestration (paper-style RMSE table)
// ---------------------------------------------------------------------------

struct DomainRmse {
  std::vector<double> norm_runs;    // per seed, normalised units
  std::vector<double> denorm_runs;  // per seed, original units
  Eigen::VectorXd per_channel;      // normalised, mean over seeds

  double norm_mean() const {
    double s = 0;
    for (double v : norm_runs) s += v;
    return s / norm_runs.size();
  }
  double norm_std() const {
    const double m = norm_mean();
    double s = 0;
    for (double v : norm_runs) s += (v - m) * (v - m);
    return norm_runs.size() > 1 ? std::sqrt(s / (norm_runs.size() - 1)) : 0.0;
  }
  double denorm_mean() const {
    double s = 0;
    for (double v : denorm_runs) s += v;
    return s / denorm_runs.size();
  }
  double denorm_std() const {
    const double m = denorm_mean();
    double s = 0;
    for (double v : denorm_runs) s += (v - m) * (v - m);
    return denorm_runs.size() > 1 ? std::sqrt(s / (denorm_runs.size() - 1)) : 0.0;
  }
};

struct MethodRow {
  std::string method;  // "gru", "lstm", "dsvb-gru", "dsvb-lstm"
  DomainRmse source;
  DomainRmse target;
  std::vector<double> final_disc_accuracy;  // dsvb methods only, per seed
  std::vector<std::vector<EpochStats>> histories;  // per seed
};

struct ExperimentTable {
  std::vector<MethodRow> rows;

  const MethodRow& row(const std::string& method) const {
    for (const auto& r : rows)
      if (r.method == method) return r;
    throw Error("no method row '" + method + "'");
  }
};

namespace detail {

struct EvalData {
  MatrixRM src_meas_n, src_truth_n, src_truth_raw;
  MatrixRM tgt_meas_n, tgt_truth_n, tgt_truth_raw;
};

/// Normalised and raw truth, truncated to whole evaluation windows.
inline EvalData prepare_eval_data(const ScenarioData& scenario, const NormalizationStats& stats,
                                  Index seq_len) {
  EvalData ev;
  const SequenceDataset& tgt_truth = scenario.target_test_labeled.open_for_evaluation();
  SequenceDataset src_n = apply_normalizer(stats, scenario.source_test);
  SequenceDataset tgt_n = apply_normalizer(stats, tgt_truth);
  const Index src_rows = (scenario.source_test.rows() / seq_len) * seq_len;
  const Index tgt_rows = (tgt_truth.rows() / seq_len) * seq_len;
  if (src_rows == 0 || tgt_rows == 0) throw TooShort("prepare_eval_data: test set too short");
  ev.src_meas_n = src_n.measurements.topRows(src_rows);
  ev.src_truth_n = src_n.states->topRows(src_rows);
  ev.src_truth_raw = scenario.source_test.states->topRows(src_rows);
  ev.tgt_meas_n = tgt_n.measurements.topRows(tgt_rows);
  ev.tgt_truth_n = tgt_n.states->topRows(tgt_rows);
  ev.tgt_truth_raw = tgt_truth.states->topRows(tgt_rows);
  return ev;
}

inline MatrixRM denormalise_states(const NormalizationStats& stats, const MatrixRM& states_n) {
  return destandardise(states_n, stats.state_mean, stats.state_std, stats.state_active);
}

}  // namespace detail

/// Trains every method over every seed and evaluates held-out RMSE per
/// domain. Seeds run in parallel up to DSVB_THREADS.
inline ExperimentTable run_experiment(const ScenarioData& scenario, const TrainConfig& config) {
  struct Job {
    bool dsvb;
    CellKind cell;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  const std::vector<std::pair<bool, CellKind>> methods = {
      {false, CellKind::gru}, {false, CellKind::lstm},
      {true, CellKind::gru}, {true, CellKind::lstm}};
  for (auto [dsvb_flag, cell] : methods)
    for (std::size_t s = 0; s < config.seeds.size(); ++s) jobs.push_back({dsvb_flag, cell, s});

  struct JobResult {
    double src_norm = 0, tgt_norm = 0, src_denorm = 0, tgt_denorm = 0;
    Eigen::VectorXd src_channels, tgt_channels;
    double disc_acc = -1.0;
    std::vector<EpochStats> history;
  };
  std::vector<JobResult> results(jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      TrainConfig cfg = config;
      cfg.cell = job.cell;
      const std::uint64_t seed = config.seeds[job.seed_index];
      JobResult& out = results[k];

      if (job.dsvb) {
        DsvbTrainResult run = train(cfg, scenario.source_train, scenario.target_train, seed);
        detail::EvalData ev = detail::prepare_eval_data(scenario, run.stats, cfg.seq_len);
        StateEstimate src_est = dsvb_estimate_windowed(run.model, ev.src_meas_n, cfg.seq_len);
        StateEstimate tgt_est = dsvb_estimate_windowed(run.model, ev.tgt_meas_n, cfg.seq_len);
        out.src_norm = rmse(src_est.mean, ev.src_truth_n);
        out.tgt_norm = rmse(tgt_est.mean, ev.tgt_truth_n);
        out.src_denorm = rmse(detail::denormalise_states(run.stats, src_est.mean), ev.src_truth_raw);
        out.tgt_denorm = rmse(detail::denormalise_states(run.stats, tgt_est.mean), ev.tgt_truth_raw);
        out.src_channels = per_channel_rmse(src_est.mean, ev.src_truth_n);
        out.tgt_channels = per_channel_rmse(tgt_est.mean, ev.tgt_truth_n);
        out.disc_acc = run.history.empty() ? 0.5 : run.history.back().disc_val_accuracy;
        out.history = run.history;
      } else {
        BaselineTrainResult run = train_baseline(cfg, scenario.source_train, seed);
        detail::EvalData ev = detail::prepare_eval_data(scenario, run.stats, cfg.seq_len);
        MatrixRM src_est = baseline_estimate_windowed(run.model, ev.src_meas_n, cfg.seq_len);
        MatrixRM tgt_est = baseline_estimate_windowed(run.model, ev.tgt_meas_n, cfg.seq_len);
        out.src_norm = rmse(src_est, ev.src_truth_n);
        out.tgt_norm = rmse(tgt_est, ev.tgt_truth_n);
        out.src_denorm = rmse(detail::denormalise_states(run.stats, src_est), ev.src_truth_raw);
        out.tgt_denorm = rmse(detail::denormalise_states(run.stats, tgt_est), ev.tgt_truth_raw);
        out.src_channels = per_channel_rmse(src_est, ev.src_truth_n);
        out.tgt_channels = per_channel_rmse(tgt_est, ev.tgt_truth_n);
        out.history = run.history;
      }
    }
  };

  const int n_threads =
      std::min<int>(detail::env_thread_cap(), static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentTable table;
  for (auto [dsvb_flag, cell] : methods) {
    MethodRow row;
    row.method = std::string(dsvb_flag ? "dsvb-" : "") + to_string(cell);
    Eigen::VectorXd src_ch, tgt_ch;
    int count = 0;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (jobs[k].dsvb != dsvb_flag || jobs[k].cell != cell) continue;
      const JobResult& r = results[k];
      row.source.norm_runs.push_back(r.src_norm);
      row.source.denorm_runs.push_back(r.src_denorm);
      row.target.norm_runs.push_back(r.tgt_norm);
      row.target.denorm_runs.push_back(r.tgt_denorm);
      if (r.disc_acc >= 0.0) row.final_disc_accuracy.push_back(r.disc_acc);
      row.histories.push_back(r.history);
      if (count == 0) {
        src_ch = r.src_channels;
        tgt_ch = r.tgt_channels;
      } else {
        src_ch += r.src_channels;
        tgt_ch += r.tgt_channels;
      }
      ++count;
    }
    row.source.per_channel = src_ch / count;
    row.target.per_channel = tgt_ch / count;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dsvb
