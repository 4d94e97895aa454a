// Command-line surface: synthetic data generation, training, evaluation,
// inference, latent export, and the four-method RMSE comparison experiment.
//
// Exit codes: 0 success, 2 usage/input error, 3 numerical divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsvb/data.hpp"
#include "dsvb/manifest.hpp"
#include "dsvb/model_io.hpp"
#include "dsvb/scenarios.hpp"
#include "dsvb/synth.hpp"
#include "dsvb/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsvb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

struct CommonTrainFlags {
  std::string source_path, target_path;
  int scenario_id = 0;
  bool synthetic = false;
  Index synth_train_samples = 5000;
  Index synth_test_samples = 1000;
  std::uint64_t data_seed = 1;
  std::string out_dir = ".";
  int seeds = 5;
  std::uint64_t seed_base = 1;
  TrainConfig config;
};

void add_train_config_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "Training epochs");
  cmd->add_option("--batch-size", cfg.batch_size, "Windows per batch");
  cmd->add_option("--seq-len", cfg.seq_len, "Window length in samples");
  cmd->add_option("--stride", cfg.window_stride, "Training window stride");
  cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate");
  cmd->add_option("--lambda", cfg.lambda, "Adversarial coupling weight");
  cmd->add_option("--kld-weight", cfg.kld_weight, "KLD term weight");
  cmd->add_option("--ss-weight", cfg.ss_weight, "Semi-supervised term weight");
  cmd->add_option("--particles", cfg.n_particles, "Monte Carlo particles");
  cmd->add_option("--disc-lr-scale", cfg.disc_lr_scale, "Discriminator LR multiplier");
  cmd->add_option("--hidden", cfg.hidden_size, "Recurrent hidden size");
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t base) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

json config_json(const TrainConfig& cfg) {
  return {{"seq_len", cfg.seq_len},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"n_particles", cfg.n_particles},
          {"lambda", cfg.lambda},
          {"kld_weight", cfg.kld_weight},
          {"ss_weight", cfg.ss_weight},
          {"cell", to_string(cfg.cell)},
          {"hidden_size", cfg.hidden_size},
          {"window_stride", cfg.window_stride}};
}

void write_history(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& e : history) {
    json row = {{"epoch", e.epoch},
                {"batches", e.rounds},
                {"reconstruction_nll", e.mean_loss.reconstruction_nll},
                {"kld", e.mean_loss.kld},
                {"supervised_state_nll", e.mean_loss.supervised_state_nll},
                {"adversarial_bce", e.mean_loss.adversarial_bce},
                {"total", e.mean_loss.total},
                {"steps", e.mean_loss.steps},
                {"particles", e.mean_loss.particles},
                {"disc_loss", e.disc_loss},
                {"disc_val_accuracy", e.disc_val_accuracy},
                {"source_val_rmse", e.source_val_rmse},
                {"ss_on_target", e.ss_on_target},
                {"lambda_eff", e.lambda_eff}};
    out << row.dump() << "\n";
  }
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, std);
  return buf;
}

// --------------------------------------------------------------------------
// synth
// --------------------------------------------------------------------------

int run_synth(const std::string& mode, const std::string& actuation, std::uint64_t seed,
              const std::string& out_dir, Index train_samples, Index test_samples,
              double noise_std, double pressure_gain) {
  const ContactMode contact = mode == "tip" ? ContactMode::tip : ContactMode::surface;
  const ActuationPattern pattern =
      actuation == "osc" ? ActuationPattern::oscillatory : ActuationPattern::random_hold;
  fs::create_directories(out_dir);

  auto generate = [&](const char* split, Index samples, std::uint64_t s) {
    SynthConfig cfg = synth_config_for(contact, pattern, s, samples);
    if (noise_std >= 0.0) cfg.flex_noise_std = noise_std;
    if (pressure_gain >= 0.0) cfg.pressure_torque_gain = pressure_gain;
    SequenceDataset ds = synth_generate(cfg);
    const std::string path = (fs::path(out_dir) / (std::string(split) + ".csv")).string();
    save_csv(path, ds);
    return std::pair{path, cfg};
  };
  Rng base(seed);
  auto [train_path, train_cfg] = generate("train", train_samples, base.fork("train").seed());
  auto [test_path, test_cfg] = generate("test", test_samples, base.fork("test").seed());

  json sidecar = {{"contact", to_string(contact)},
                  {"actuation", to_string(pattern)},
                  {"seed", seed},
                  {"train_samples", train_samples},
                  {"test_samples", test_samples},
                  {"n_links", train_cfg.n_links},
                  {"link_length", train_cfg.link_length},
                  {"joint_stiffness", train_cfg.joint_stiffness},
                  {"joint_damping", train_cfg.joint_damping},
                  {"pressure_torque_gain", train_cfg.pressure_torque_gain},
                  {"contact_stiffness", train_cfg.contact_stiffness},
                  {"bulb", {train_cfg.bulb_x, train_cfg.bulb_z, train_cfg.bulb_radius}},
                  {"flex_noise_std", train_cfg.flex_noise_std},
                  {"sample_rate_hz", train_cfg.sample_rate_hz}};
  const std::string sidecar_path = (fs::path(out_dir) / "synth_config.json").string();
  std::ofstream(sidecar_path) << sidecar.dump(2) << "\n";

  RunManifest manifest;
  manifest.command = "synth";
  manifest.config = sidecar;
  manifest.seeds = {seed};
  manifest.output_paths = {train_path, test_path, sidecar_path};
  manifest.input_paths = {train_path, test_path};  // hashes of what was produced
  manifest.write((fs::path(out_dir) / "manifest.json").string());

  std::cout << "wrote " << train_path << " (" << train_samples << " rows), " << test_path << " ("
            << test_samples << " rows)\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

struct LoadedTrainingData {
  SequenceDataset source;
  SequenceDataset target;  // may be empty for baseline
  std::vector<std::string> input_paths;
};

LoadedTrainingData load_training_data(const CommonTrainFlags& flags, bool need_target) {
  LoadedTrainingData data;
  if (flags.scenario_id > 0) {
    if (!flags.synthetic)
      throw Error("--scenario currently requires --synthetic (CSV scenarios use explicit paths)");
    ScenarioData sc = build_scenario_synthetic(flags.scenario_id, flags.synth_train_samples,
                                               flags.synth_test_samples, flags.data_seed);
    data.source = std::move(sc.source_train);
    data.target = std::move(sc.target_train);
    return data;
  }
  if (flags.source_path.empty()) throw Error("--source is required (or --scenario N --synthetic)");
  data.source = load_csv(flags.source_path);
  data.source.domain = Domain::source;
  data.input_paths.push_back(flags.source_path);
  if (!flags.target_path.empty()) {
    data.target = load_csv(flags.target_path);
    data.target = data.target.without_labels();
    data.target.domain = Domain::target;
    data.input_paths.push_back(flags.target_path);
  } else if (need_target) {
    throw Error("--target is required for --method dsvb");
  }
  return data;
}

int run_train(const CommonTrainFlags& flags, const std::string& method) {
  TrainConfig cfg = flags.config;
  cfg.seeds = seed_list(flags.seeds, flags.seed_base);
  fs::create_directories(flags.out_dir);

  const bool is_dsvb = method == "dsvb";
  if (!is_dsvb && !flags.target_path.empty())
    std::cerr << "warning: --target is ignored for --method baseline (source-only training)\n";

  LoadedTrainingData data = load_training_data(flags, is_dsvb);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config_json(cfg);
  manifest.config["method"] = method;
  manifest.config["scenario"] = flags.scenario_id;
  manifest.seeds = cfg.seeds;
  manifest.input_paths = data.input_paths;

  const std::string cell_name = to_string(cfg.cell);
  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = method + "_" + cell_name + "_s" + std::to_string(seed);
    const std::string ckpt_path = (fs::path(flags.out_dir) / ("checkpoint_" + tag + ".dsvb")).string();
    const std::string hist_path = (fs::path(flags.out_dir) / ("history_" + tag + ".jsonl")).string();

    if (is_dsvb) {
      DsvbTrainResult run = train(cfg, data.source, data.target, seed);
      write_history(hist_path, run.history);
      Checkpoint ckpt = run.final_checkpoint;
      ckpt.metadata["method"] = "dsvb";
      ckpt.metadata["cell"] = cell_name;
      ckpt.metadata["seq_len"] = cfg.seq_len;
      save_checkpoint(ckpt_path, ckpt);
      if (run.diverged_epoch) {
        std::cerr << "numerical divergence at epoch " << *run.diverged_epoch << " (seed " << seed
                  << "); last good checkpoint written to " << ckpt_path << "\n";
        return kExitDivergence;
      }
      std::cout << "seed " << seed << ": final loss " << run.history.back().mean_loss.total
                << ", source val RMSE " << run.history.back().source_val_rmse << "\n";
    } else {
      BaselineTrainResult run = train_baseline(cfg, data.source, seed);
      write_history(hist_path, run.history);
      Checkpoint ckpt = run.final_checkpoint;
      ckpt.metadata["method"] = "baseline";
      ckpt.metadata["cell"] = cell_name;
      ckpt.metadata["seq_len"] = cfg.seq_len;
      save_checkpoint(ckpt_path, ckpt);
      if (run.diverged_epoch) {
        std::cerr << "numerical divergence at epoch " << *run.diverged_epoch << " (seed " << seed
                  << "); last good checkpoint written to " << ckpt_path << "\n";
        return kExitDivergence;
      }
      std::cout << "seed " << seed << ": final MSE "
                << run.history.back().mean_loss.reconstruction_nll << ", source val RMSE "
                << run.history.back().source_val_rmse << "\n";
    }
    manifest.output_paths.push_back(ckpt_path);
    manifest.output_paths.push_back(hist_path);
  }
  manifest.write((fs::path(flags.out_dir) / "manifest.json").string());
  return kExitOk;
}

// --------------------------------------------------------------------------
// eval
// --------------------------------------------------------------------------

struct EvalAccumulator {
  std::vector<double> src_norm, tgt_norm, src_denorm, tgt_denorm;
  Eigen::VectorXd src_channels, tgt_channels;
  int count = 0;
};

int run_eval(const std::vector<std::string>& checkpoint_args, const std::string& test_source,
             const std::string& test_target, const std::string& out_dir) {
  // expand directories into *.dsvb files
  std::vector<std::string> paths;
  for (const auto& arg : checkpoint_args) {
    if (fs::is_directory(arg)) {
      for (const auto& entry : fs::directory_iterator(arg))
        if (entry.path().extension() == ".dsvb") paths.push_back(entry.path().string());
    } else {
      paths.push_back(arg);
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw Error("no checkpoints found");

  SequenceDataset src_test = load_csv(test_source);
  SequenceDataset tgt_test = load_csv(test_target);
  if (!src_test.labeled() || !tgt_test.labeled())
    throw Error("eval requires labeled test sets for both domains");

  std::map<std::string, EvalAccumulator> by_method;
  Index seq_len_used = 0;
  for (const auto& path : paths) {
    Checkpoint ckpt = load_checkpoint(path);
    const std::string kind = ckpt.metadata.value("kind", "?");
    const std::string cell = ckpt.metadata.value("cell", "?");
    const Index seq_len = ckpt.metadata.value("seq_len", Index{100});
    seq_len_used = seq_len;
    const std::string method = (kind == "dsvb" ? "dsvb-" : "") + cell;
    NormalizationStats stats = normalizer_from_checkpoint(ckpt);

    SequenceDataset src_n = apply_normalizer(stats, src_test);
    SequenceDataset tgt_n = apply_normalizer(stats, tgt_test);
    const Index src_rows = (src_test.rows() / seq_len) * seq_len;
    const Index tgt_rows = (tgt_test.rows() / seq_len) * seq_len;
    if (src_rows == 0 || tgt_rows == 0) throw Error("test sets shorter than one window");

    MatrixRM src_est, tgt_est;
    if (kind == "dsvb") {
      VrnnModel model = vrnn_from_checkpoint(ckpt);
      src_est = dsvb_estimate_windowed(model, src_n.measurements.topRows(src_rows), seq_len).mean;
      tgt_est = dsvb_estimate_windowed(model, tgt_n.measurements.topRows(tgt_rows), seq_len).mean;
    } else {
      BaselineModel model = baseline_from_checkpoint(ckpt);
      src_est = baseline_estimate_windowed(model, src_n.measurements.topRows(src_rows), seq_len);
      tgt_est = baseline_estimate_windowed(model, tgt_n.measurements.topRows(tgt_rows), seq_len);
    }

    EvalAccumulator& acc = by_method[method];
    acc.src_norm.push_back(rmse(src_est, src_n.states->topRows(src_rows)));
    acc.tgt_norm.push_back(rmse(tgt_est, tgt_n.states->topRows(tgt_rows)));
    acc.src_denorm.push_back(
        rmse(detail::destandardise(src_est, stats.state_mean, stats.state_std, stats.state_active),
             src_test.states->topRows(src_rows)));
    acc.tgt_denorm.push_back(
        rmse(detail::destandardise(tgt_est, stats.state_mean, stats.state_std, stats.state_active),
             tgt_test.states->topRows(tgt_rows)));
    Eigen::VectorXd sc = per_channel_rmse(src_est, src_n.states->topRows(src_rows));
    Eigen::VectorXd tc = per_channel_rmse(tgt_est, tgt_n.states->topRows(tgt_rows));
    if (acc.count == 0) {
      acc.src_channels = sc;
      acc.tgt_channels = tc;
    } else {
      acc.src_channels += sc;
      acc.tgt_channels += tc;
    }
    ++acc.count;
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };

  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "rmse_table.csv").string();
  const std::string json_path = (fs::path(out_dir) / "rmse_table.json").string();
  std::ofstream csv(csv_path);
  csv << "method,source_rmse,target_rmse,source_rmse_denorm,target_rmse_denorm,runs\n";
  json jtable = json::array();
  std::cout << "method      source           target (normalized RMSE, mean±std over seeds)\n";
  for (const auto& [method, acc] : by_method) {
    const std::string src = format_mean_std(mean_of(acc.src_norm), std_of(acc.src_norm));
    const std::string tgt = format_mean_std(mean_of(acc.tgt_norm), std_of(acc.tgt_norm));
    csv << method << "," << src << "," << tgt << ","
        << format_mean_std(mean_of(acc.src_denorm), std_of(acc.src_denorm)) << ","
        << format_mean_std(mean_of(acc.tgt_denorm), std_of(acc.tgt_denorm)) << "," << acc.count
        << "\n";
    std::vector<std::string> channel_names = state_columns();
    json channels_src = json::object(), channels_tgt = json::object();
    for (Index c = 0; c < acc.src_channels.size(); ++c) {
      channels_src[channel_names[c]] = acc.src_channels(c) / acc.count;
      channels_tgt[channel_names[c]] = acc.tgt_channels(c) / acc.count;
    }
    jtable.push_back({{"method", method},
                      {"runs", acc.count},
                      {"source_rmse_mean", mean_of(acc.src_norm)},
                      {"source_rmse_std", std_of(acc.src_norm)},
                      {"target_rmse_mean", mean_of(acc.tgt_norm)},
                      {"target_rmse_std", std_of(acc.tgt_norm)},
                      {"source_rmse_denorm_mean", mean_of(acc.src_denorm)},
                      {"target_rmse_denorm_mean", mean_of(acc.tgt_denorm)},
                      {"source_rmse_per_channel", channels_src},
                      {"target_rmse_per_channel", channels_tgt}});
    std::printf("%-11s %-16s %-16s\n", method.c_str(), src.c_str(), tgt.c_str());
  }
  std::ofstream(json_path) << jtable.dump(2) << "\n";

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config = {{"seq_len", seq_len_used}};
  manifest.input_paths = paths;
  manifest.input_paths.push_back(test_source);
  manifest.input_paths.push_back(test_target);
  manifest.output_paths = {csv_path, json_path};
  manifest.write((fs::path(out_dir) / "manifest.json").string());
  return kExitOk;
}

// --------------------------------------------------------------------------
// infer
// --------------------------------------------------------------------------

int run_infer(const std::string& checkpoint_path, const std::string& input_path,
              const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.metadata.value("kind", "") != "dsvb")
    throw Error("infer requires a dsvb checkpoint");
  VrnnModel model = vrnn_from_checkpoint(ckpt);
  NormalizationStats stats = normalizer_from_checkpoint(ckpt);

  SequenceDataset input = load_csv(input_path);
  SequenceDataset input_n = apply_normalizer(stats, input);
  StateEstimate est = dsvb_estimate_full(model, input_n.measurements);

  // de-normalise: means shift+scale, stds scale only
  MatrixRM mean_raw =
      detail::destandardise(est.mean, stats.state_mean, stats.state_std, stats.state_active);
  // degenerate channels keep the clamp-floor scale so stds stay positive
  MatrixRM std_raw = est.std.array().rowwise() * stats.state_std.transpose().array();

  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  out << "t";
  for (const auto& c : state_columns()) out << "," << c;
  for (const auto& c : state_columns()) out << "," << c << "_std";
  out << "\n";
  char buf[32];
  const double dt = 1.0 / input.sample_rate_hz;
  for (Index r = 0; r < est.mean.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g", r * dt);
    out << buf;
    for (Index c = 0; c < mean_raw.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", mean_raw(r, c));
      out << ',' << buf;
    }
    for (Index c = 0; c < std_raw.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", std_raw(r, c));
      out << ',' << buf;
    }
    out << "\n";
  }
  out.close();

  RunManifest manifest;
  manifest.command = "infer";
  manifest.config = {{"checkpoint", checkpoint_path}};
  manifest.input_paths = {checkpoint_path, input_path};
  manifest.output_paths = {out_path};
  manifest.write(out_path + ".manifest.json");
  std::cout << "wrote " << out_path << " (" << est.mean.rows() << " rows)\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// export-latents
// --------------------------------------------------------------------------

int run_export_latents(const std::string& checkpoint_path, const std::string& source_path,
                       const std::string& target_path, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.metadata.value("kind", "") != "dsvb")
    throw Error("export-latents requires a dsvb checkpoint");
  VrnnModel model = vrnn_from_checkpoint(ckpt);
  NormalizationStats stats = normalizer_from_checkpoint(ckpt);

  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  const auto cols = state_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << ",domain\n";

  char buf[32];
  auto dump = [&](const std::string& path, Domain domain) {
    SequenceDataset ds = load_csv(path);
    SequenceDataset ds_n = apply_normalizer(stats, ds);
    // shared estimation path with infer: full-sequence posterior means
    StateEstimate est = dsvb_estimate_full(model, ds_n.measurements);
    MatrixRM mean_raw =
        detail::destandardise(est.mean, stats.state_mean, stats.state_std, stats.state_active);
    for (Index r = 0; r < mean_raw.rows(); ++r) {
      for (Index c = 0; c < mean_raw.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", mean_raw(r, c));
        out << (c ? "," : "") << buf;
      }
      out << ',' << to_string(domain) << "\n";
    }
  };
  dump(source_path, Domain::source);
  dump(target_path, Domain::target);
  out.close();

  RunManifest manifest;
  manifest.command = "export-latents";
  manifest.config = {{"checkpoint", checkpoint_path}};
  manifest.input_paths = {checkpoint_path, source_path, target_path};
  manifest.output_paths = {out_path};
  manifest.write(out_path + ".manifest.json");
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// experiment
// --------------------------------------------------------------------------

int run_experiment_cmd(const CommonTrainFlags& flags) {
  TrainConfig cfg = flags.config;
  cfg.seeds = seed_list(flags.seeds, flags.seed_base);
  if (flags.scenario_id <= 0) throw Error("--scenario is required for experiment");
  if (!flags.synthetic) throw Error("experiment currently runs on --synthetic data");
  fs::create_directories(flags.out_dir);

  ScenarioData scenario = build_scenario_synthetic(flags.scenario_id, flags.synth_train_samples,
                                                   flags.synth_test_samples, flags.data_seed);
  ExperimentTable table = run_experiment(scenario, cfg);

  const std::string csv_path = (fs::path(flags.out_dir) / "rmse_table.csv").string();
  const std::string json_path = (fs::path(flags.out_dir) / "rmse_table.json").string();
  std::ofstream csv(csv_path);
  csv << "method,source_rmse,target_rmse,source_rmse_denorm,target_rmse_denorm,runs\n";
  json jtable = json::array();
  std::cout << "method      source           target (normalized RMSE, mean±std over "
            << cfg.seeds.size() << " seeds)\n";
  for (const auto& row : table.rows) {
    const std::string src = format_mean_std(row.source.norm_mean(), row.source.norm_std());
    const std::string tgt = format_mean_std(row.target.norm_mean(), row.target.norm_std());
    csv << row.method << "," << src << "," << tgt << ","
        << format_mean_std(row.source.denorm_mean(), row.source.denorm_std()) << ","
        << format_mean_std(row.target.denorm_mean(), row.target.denorm_std()) << ","
        << row.source.norm_runs.size() << "\n";
    json channels_src = json::object(), channels_tgt = json::object();
    const auto names = state_columns();
    for (Index c = 0; c < row.source.per_channel.size(); ++c) {
      channels_src[names[c]] = row.source.per_channel(c);
      channels_tgt[names[c]] = row.target.per_channel(c);
    }
    json jrow = {{"method", row.method},
                 {"source_rmse_mean", row.source.norm_mean()},
                 {"source_rmse_std", row.source.norm_std()},
                 {"target_rmse_mean", row.target.norm_mean()},
                 {"target_rmse_std", row.target.norm_std()},
                 {"source_rmse_denorm_mean", row.source.denorm_mean()},
                 {"target_rmse_denorm_mean", row.target.denorm_mean()},
                 {"source_rmse_per_channel", channels_src},
                 {"target_rmse_per_channel", channels_tgt}};
    if (!row.final_disc_accuracy.empty()) jrow["final_disc_accuracy"] = row.final_disc_accuracy;
    jtable.push_back(jrow);
    std::printf("%-11s %-16s %-16s\n", row.method.c_str(), src.c_str(), tgt.c_str());
  }
  std::ofstream(json_path) << jtable.dump(2) << "\n";

  RunManifest manifest;
  manifest.command = "experiment";
  manifest.config = config_json(cfg);
  manifest.config["scenario"] = flags.scenario_id;
  manifest.config["train_samples"] = flags.synth_train_samples;
  manifest.config["test_samples"] = flags.synth_test_samples;
  manifest.config["data_seed"] = flags.data_seed;
  manifest.seeds = cfg.seeds;
  manifest.output_paths = {csv_path, json_path};
  manifest.write((fs::path(flags.out_dir) / "manifest.json").string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential variational Bayes training and inference engine"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  std::string synth_mode = "tip", synth_actuation = "osc", synth_out = ".";
  std::uint64_t synth_seed = 1;
  Index synth_train = 5000, synth_test = 1000;
  double synth_noise = -1.0, synth_gain = -1.0;
  CLI::App* synth = app.add_subcommand("synth", "Generate synthetic soft-finger datasets");
  synth->add_option("--mode", synth_mode, "Contact configuration")
      ->check(CLI::IsMember({"tip", "surface"}));
  synth->add_option("--actuation", synth_actuation, "Actuation pattern")
      ->check(CLI::IsMember({"osc", "rand"}));
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--train-samples", synth_train, "Training rows");
  synth->add_option("--test-samples", synth_test, "Test rows");
  synth->add_option("--noise-std", synth_noise, "Flex sensor noise (rad)");
  synth->add_option("--pressure-gain", synth_gain, "Pressure to torque gain");

  // train --------------------------------------------------------------
  CommonTrainFlags train_flags;
  std::string train_method = "dsvb", train_cell = "gru";
  CLI::App* train_cmd = app.add_subcommand("train", "Train DSVB or baseline models");
  train_cmd->add_option("--source", train_flags.source_path, "Labeled source-domain CSV");
  train_cmd->add_option("--target", train_flags.target_path, "Unlabeled target-domain CSV");
  train_cmd->add_option("--scenario", train_flags.scenario_id, "Synthetic scenario id (1..4)");
  train_cmd->add_flag("--synthetic", train_flags.synthetic, "Generate scenario data in-process");
  train_cmd->add_option("--train-samples", train_flags.synth_train_samples,
                        "Synthetic training rows per domain");
  train_cmd->add_option("--test-samples", train_flags.synth_test_samples,
                        "Synthetic test rows per domain");
  train_cmd->add_option("--data-seed", train_flags.data_seed, "Synthetic data seed");
  train_cmd->add_option("--method", train_method, "dsvb or baseline")
      ->check(CLI::IsMember({"dsvb", "baseline"}));
  train_cmd->add_option("--cell", train_cell, "Recurrent cell")->check(CLI::IsMember({"gru", "lstm"}));
  train_cmd->add_option("--seeds", train_flags.seeds, "Number of seeds");
  train_cmd->add_option("--seed-base", train_flags.seed_base, "First seed value");
  train_cmd->add_option("--out", train_flags.out_dir, "Output directory");
  add_train_config_flags(train_cmd, train_flags.config);

  // eval ---------------------------------------------------------------
  std::vector<std::string> eval_checkpoints;
  std::string eval_src, eval_tgt, eval_out = ".";
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints into an RMSE table");
  eval_cmd->add_option("--checkpoints", eval_checkpoints, "Checkpoint files or directories")
      ->required();
  eval_cmd->add_option("--test-source", eval_src, "Labeled source test CSV")->required();
  eval_cmd->add_option("--test-target", eval_tgt, "Labeled target test CSV")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");

  // infer ----------------------------------------------------------------
  std::string infer_ckpt, infer_input, infer_out = "estimates.csv";
  CLI::App* infer_cmd = app.add_subcommand("infer", "Per-step state estimates with uncertainties");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "DSVB checkpoint")->required();
  infer_cmd->add_option("--input", infer_input, "Measurement CSV")->required();
  infer_cmd->add_option("--out", infer_out, "Output CSV");

  // export-latents -------------------------------------------------------
  std::string exp_ckpt, exp_src, exp_tgt, exp_out = "latents.csv";
  CLI::App* export_cmd =
      app.add_subcommand("export-latents", "Posterior latent trajectories with domain tags");
  export_cmd->add_option("--checkpoint", exp_ckpt, "DSVB checkpoint")->required();
  export_cmd->add_option("--source", exp_src, "Source-domain CSV")->required();
  export_cmd->add_option("--target", exp_tgt, "Target-domain CSV")->required();
  export_cmd->add_option("--out", exp_out, "Output CSV");

  // experiment -------------------------------------------------------------
  CommonTrainFlags exp_flags;
  CLI::App* experiment_cmd =
      app.add_subcommand("experiment", "Train all four methods and emit the RMSE table");
  experiment_cmd->add_option("--scenario", exp_flags.scenario_id, "Scenario id (1..4)")->required();
  experiment_cmd->add_flag("--synthetic", exp_flags.synthetic, "Use the synthetic simulator");
  experiment_cmd->add_option("--train-samples", exp_flags.synth_train_samples,
                             "Training rows per domain");
  experiment_cmd->add_option("--test-samples", exp_flags.synth_test_samples, "Test rows per domain");
  experiment_cmd->add_option("--data-seed", exp_flags.data_seed, "Synthetic data seed");
  experiment_cmd->add_option("--seeds", exp_flags.seeds, "Number of seeds");
  experiment_cmd->add_option("--seed-base", exp_flags.seed_base, "First seed value");
  experiment_cmd->add_option("--out", exp_flags.out_dir, "Output directory");
  add_train_config_flags(experiment_cmd, exp_flags.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed())
      return run_synth(synth_mode, synth_actuation, synth_seed, synth_out, synth_train, synth_test,
                       synth_noise, synth_gain);
    if (train_cmd->parsed()) {
      train_flags.config.cell = cell_kind_from_string(train_cell);
      return run_train(train_flags, train_method);
    }
    if (eval_cmd->parsed()) return run_eval(eval_checkpoints, eval_src, eval_tgt, eval_out);
    if (infer_cmd->parsed()) return run_infer(infer_ckpt, infer_input, infer_out);
    if (export_cmd->parsed()) return run_export_latents(exp_ckpt, exp_src, exp_tgt, exp_out);
    if (experiment_cmd->parsed()) return run_experiment_cmd(exp_flags);
  } catch (const NumericalDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
