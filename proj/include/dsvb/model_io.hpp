#pragma once

#include <string>

#include "dsvb/baseline.hpp"
#include "dsvb/checkpoint.hpp"
#include "dsvb/dat.hpp"
#include "dsvb/data.hpp"
#include "dsvb/vrnn.hpp"

namespace dsvb {

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gru") return CellKind::gru;
  if (s == "lstm") return CellKind::lstm;
  throw CheckpointError("unknown cell kind '" + s + "'");
}

namespace detail {

inline Tensor vector_tensor(const Eigen::VectorXd& v) {
  Tensor t = Tensor::uninitialized({v.size()});
  t.values() = v.array();
  return t;
}

inline Eigen::VectorXd tensor_vector(const Tensor& t) { return t.values().matrix(); }

}  // namespace detail

inline void put_normalizer(Checkpoint& ckpt, const NormalizationStats& stats) {
  ckpt.put("normalizer.meas_mean", detail::vector_tensor(stats.meas_mean));
  ckpt.put("normalizer.meas_std", detail::vector_tensor(stats.meas_std));
  ckpt.put("normalizer.meas_active", detail::vector_tensor(stats.meas_active));
  ckpt.put("normalizer.state_mean", detail::vector_tensor(stats.state_mean));
  ckpt.put("normalizer.state_std", detail::vector_tensor(stats.state_std));
  ckpt.put("normalizer.state_active", detail::vector_tensor(stats.state_active));
}

inline NormalizationStats normalizer_from_checkpoint(const Checkpoint& ckpt) {
  NormalizationStats stats;
  stats.meas_mean = detail::tensor_vector(ckpt.get("normalizer.meas_mean"));
  stats.meas_std = detail::tensor_vector(ckpt.get("normalizer.meas_std"));
  stats.meas_active = detail::tensor_vector(ckpt.get("normalizer.meas_active"));
  stats.state_mean = detail::tensor_vector(ckpt.get("normalizer.state_mean"));
  stats.state_std = detail::tensor_vector(ckpt.get("normalizer.state_std"));
  stats.state_active = detail::tensor_vector(ckpt.get("normalizer.state_active"));
  return stats;
}

inline nlohmann::json vrnn_config_json(const VrnnConfig& cfg) {
  return {{"n_y", cfg.n_y},
          {"n_x", cfg.n_x},
          {"hidden", cfg.hidden},
          {"feat_y_dim", cfg.feat_y_dim},
          {"feat_x_dim", cfg.feat_x_dim},
          {"prior_hidden", cfg.prior_hidden},
          {"encoder_hidden", cfg.encoder_hidden},
          {"decoder_hidden", cfg.decoder_hidden},
          {"cell", to_string(cfg.cell)}};
}

inline VrnnConfig vrnn_config_from_json(const nlohmann::json& j) {
  VrnnConfig cfg;
  cfg.n_y = j.at("n_y").get<Index>();
  cfg.n_x = j.at("n_x").get<Index>();
  cfg.hidden = j.at("hidden").get<Index>();
  cfg.feat_y_dim = j.at("feat_y_dim").get<Index>();
  cfg.feat_x_dim = j.at("feat_x_dim").get<Index>();
  cfg.prior_hidden = j.at("prior_hidden").get<std::vector<Index>>();
  cfg.encoder_hidden = j.at("encoder_hidden").get<std::vector<Index>>();
  cfg.decoder_hidden = j.at("decoder_hidden").get<std::vector<Index>>();
  cfg.cell = cell_kind_from_string(j.at("cell").get<std::string>());
  return cfg;
}

/// DSVB checkpoint: model + discriminator + normalizer under one roof.
inline Checkpoint make_dsvb_checkpoint(const VrnnModel& model, const Discriminator& disc,
                                       const NormalizationStats& stats,
                                       nlohmann::json extra_metadata = {}) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(extra_metadata);
  ckpt.metadata["kind"] = "dsvb";
  ckpt.metadata["vrnn"] = vrnn_config_json(model.cfg);
  ckpt.metadata["disc_hidden"] = disc.rnn.hidden_size;
  for (const auto& np : model.named_params()) ckpt.put(np.name, np.tensor);
  for (const auto& np : disc.named_params()) ckpt.put(np.name, np.tensor);
  put_normalizer(ckpt, stats);
  return ckpt;
}

inline VrnnModel vrnn_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.value("kind", "") != "dsvb")
    throw CheckpointError("checkpoint does not hold a dsvb model");
  VrnnConfig cfg = vrnn_config_from_json(ckpt.metadata.at("vrnn"));
  VrnnModel model = make_vrnn(cfg, Rng(0));
  restore_params(ckpt, model.named_params());
  return model;
}

inline Discriminator discriminator_from_checkpoint(const Checkpoint& ckpt) {
  VrnnConfig cfg = vrnn_config_from_json(ckpt.metadata.at("vrnn"));
  const Index hidden = ckpt.metadata.at("disc_hidden").get<Index>();
  Discriminator disc = make_discriminator(cfg.n_x, hidden, Rng(0));
  restore_params(ckpt, disc.named_params());
  return disc;
}

inline Checkpoint make_baseline_checkpoint(const BaselineModel& model,
                                           const NormalizationStats& stats,
                                           nlohmann::json extra_metadata = {}) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(extra_metadata);
  ckpt.metadata["kind"] = "baseline";
  ckpt.metadata["baseline"] = {{"n_y", model.n_y},
                               {"n_x", model.n_x},
                               {"hidden", model.hidden},
                               {"cell", to_string(model.kind)}};
  for (const auto& np : model.named_params()) ckpt.put(np.name, np.tensor);
  put_normalizer(ckpt, stats);
  return ckpt;
}

inline BaselineModel baseline_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.value("kind", "") != "baseline")
    throw CheckpointError("checkpoint does not hold a baseline model");
  const auto& j = ckpt.metadata.at("baseline");
  BaselineModel model =
      make_baseline(j.at("n_y").get<Index>(), j.at("n_x").get<Index>(),
                    j.at("hidden").get<Index>(), cell_kind_from_string(j.at("cell")), Rng(0));
  restore_params(ckpt, model.named_params());
  return model;
}

}  // namespace dsvb
