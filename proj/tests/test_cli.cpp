// Integration tests that drive the installed CLI binary end to end.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dsvb/data.hpp"
#include "dsvb/manifest.hpp"

using namespace dsvb;
namespace fs = std::filesystem;

#ifndef DSVB_CLI_PATH
#error "DSVB_CLI_PATH must point at the built binary"
#endif

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string out_file =
      (fs::temp_directory_path() / "dsvb_cli_test_output.txt").string();
  const std::string cmd = std::string(DSVB_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  return result;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "dsvb_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string tiny_train_flags() {
  return "--epochs 2 --seq-len 16 --stride 8 --batch-size 8 --hidden 8 --seeds 1";
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(CliSynth, DeterministicAndRowCounts) {
  const fs::path a = work_dir() / "synth_a";
  const fs::path b = work_dir() / "synth_b";
  ASSERT_EQ(run_cli("synth --mode tip --actuation osc --seed 1 --train-samples 150 "
                    "--test-samples 50 --out " + a.string()).exit_code, 0);
  ASSERT_EQ(run_cli("synth --mode tip --actuation osc --seed 1 --train-samples 150 "
                    "--test-samples 50 --out " + b.string()).exit_code, 0);
  EXPECT_EQ(file_content_hash((a / "train.csv").string()),
            file_content_hash((b / "train.csv").string()));
  EXPECT_EQ(file_content_hash((a / "test.csv").string()),
            file_content_hash((b / "test.csv").string()));
  EXPECT_EQ(line_count(a / "train.csv"), 151);  // header + rows
  EXPECT_EQ(line_count(a / "test.csv"), 51);
  EXPECT_TRUE(fs::exists(a / "manifest.json"));
  EXPECT_TRUE(fs::exists(a / "synth_config.json"));
}

TEST(CliSynth, InvalidModeExitsTwo) {
  EXPECT_EQ(run_cli("synth --mode sideways").exit_code, 2);
  EXPECT_EQ(run_cli("synth --actuation sometimes").exit_code, 2);
}

TEST(CliTrain, TinyRunEmitsHistoryAndCheckpoints) {
  const fs::path data_src = work_dir() / "train_src";
  const fs::path data_tgt = work_dir() / "train_tgt";
  ASSERT_EQ(run_cli("synth --mode tip --actuation osc --seed 3 --train-samples 200 "
                    "--test-samples 40 --out " + data_src.string()).exit_code, 0);
  ASSERT_EQ(run_cli("synth --mode surface --actuation osc --seed 4 --train-samples 200 "
                    "--test-samples 40 --out " + data_tgt.string()).exit_code, 0);

  const fs::path out = work_dir() / "train_out";
  CommandResult r = run_cli("train --source " + (data_src / "train.csv").string() + " --target " +
                            (data_tgt / "train.csv").string() + " --method dsvb --cell gru " +
                            tiny_train_flags() + " --out " + out.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "checkpoint_dsvb_gru_s1.dsvb"));
  EXPECT_EQ(line_count(out / "history_dsvb_gru_s1.jsonl"), 2);  // one row per epoch
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(CliTrain, BaselineIgnoresTargetWithWarning) {
  const fs::path data_src = work_dir() / "train_src";  // reuse from previous test
  const fs::path out = work_dir() / "baseline_out";
  CommandResult r = run_cli("train --source " + (data_src / "train.csv").string() + " --target " +
                            (data_src / "train.csv").string() +
                            " --method baseline --cell lstm " + tiny_train_flags() + " --out " +
                            out.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("ignored"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "checkpoint_baseline_lstm_s1.dsvb"));
}

TEST(CliTrain, MissingDatasetExitsTwo) {
  CommandResult r = run_cli("train --source /nonexistent/file.csv --target /also/missing.csv "
                            "--method dsvb " + tiny_train_flags());
  EXPECT_EQ(r.exit_code, 2);
}

TEST(CliTrain, DeterministicAcrossRuns) {
  const fs::path data_src = work_dir() / "train_src";
  const fs::path data_tgt = work_dir() / "train_tgt";
  const fs::path out_a = work_dir() / "det_a";
  const fs::path out_b = work_dir() / "det_b";
  const std::string common = "train --source " + (data_src / "train.csv").string() + " --target " +
                             (data_tgt / "train.csv").string() + " --method dsvb --cell gru " +
                             tiny_train_flags();
  ASSERT_EQ(run_cli(common + " --out " + out_a.string()).exit_code, 0);
  ASSERT_EQ(run_cli(common + " --out " + out_b.string()).exit_code, 0);
  EXPECT_EQ(file_content_hash((out_a / "checkpoint_dsvb_gru_s1.dsvb").string()),
            file_content_hash((out_b / "checkpoint_dsvb_gru_s1.dsvb").string()));
  EXPECT_EQ(file_content_hash((out_a / "history_dsvb_gru_s1.jsonl").string()),
            file_content_hash((out_b / "history_dsvb_gru_s1.jsonl").string()));
}

TEST(CliEval, DegenerateOverfitSanityRun) {
  // constant-output dataset (zero pressure gain, zero noise): a trained
  // baseline must reach near-zero normalized RMSE when train == test
  const fs::path data = work_dir() / "const_data";
  ASSERT_EQ(run_cli("synth --mode tip --actuation osc --seed 5 --train-samples 200 "
                    "--test-samples 64 --noise-std 0 --pressure-gain 0 --out " + data.string())
                .exit_code, 0);
  const fs::path out = work_dir() / "const_out";
  ASSERT_EQ(run_cli("train --source " + (data / "train.csv").string() +
                    " --method baseline --cell gru --epochs 40 --seq-len 16 --stride 8 "
                    "--batch-size 8 --hidden 8 --seeds 1 --out " + out.string()).exit_code, 0);
  const fs::path eval_dir = work_dir() / "const_eval";
  CommandResult r = run_cli("eval --checkpoints " + out.string() + " --test-source " +
                            (data / "test.csv").string() + " --test-target " +
                            (data / "test.csv").string() + " --out " + eval_dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::ifstream json_in(eval_dir / "rmse_table.json");
  std::stringstream ss;
  ss << json_in.rdbuf();
  const std::string payload = ss.str();
  // normalized RMSE < 0.05 on the degenerate set
  const auto pos = payload.find("\"source_rmse_mean\": ");
  ASSERT_NE(pos, std::string::npos);
  const double rmse_value = std::stod(payload.substr(pos + 20));
  EXPECT_LT(rmse_value, 0.05) << payload;
}

TEST(CliEval, MeanStdFormatting) {
  const fs::path eval_dir = work_dir() / "const_eval";  // from previous test
  std::ifstream in(eval_dir / "rmse_table.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  // format contract: %.3f±%.3f
  EXPECT_NE(row.find("±"), std::string::npos);
  const auto first_field = row.substr(row.find(',') + 1);
  const auto pm = first_field.find("±");
  const std::string mean_part = first_field.substr(0, pm);
  EXPECT_EQ(mean_part.find('.'), 1u);
  EXPECT_EQ(mean_part.size(), 5u);  // d.ddd
}

TEST(CliEval, MissingInputsExitTwo) {
  EXPECT_EQ(run_cli("eval --checkpoints /nowhere --test-source a.csv --test-target b.csv")
                .exit_code, 2);
}

TEST(CliInfer, RowAlignedEstimatesWithPositiveStds) {
  const fs::path data_src = work_dir() / "train_src";
  const fs::path out = work_dir() / "train_out";
  const fs::path estimates = work_dir() / "estimates.csv";
  CommandResult r = run_cli("infer --checkpoint " +
                            (out / "checkpoint_dsvb_gru_s1.dsvb").string() + " --input " +
                            (data_src / "test.csv").string() + " --out " + estimates.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(line_count(estimates), 41);  // header + 40 rows, aligned with input
  std::ifstream in(estimates);
  std::string header;
  std::getline(in, header);
  Index columns = 1;
  for (char c : header) columns += (c == ',');
  EXPECT_EQ(columns, 1 + 22 + 22);
  // stds strictly positive
  std::string row;
  while (std::getline(in, row)) {
    std::stringstream ss(row);
    std::string cell;
    int idx = 0;
    while (std::getline(ss, cell, ',')) {
      if (idx > 22) EXPECT_GT(std::stod(cell), 0.0);
      ++idx;
    }
  }
}

TEST(CliInfer, DeterministicReruns) {
  const fs::path data_src = work_dir() / "train_src";
  const fs::path out = work_dir() / "train_out";
  const fs::path a = work_dir() / "est_a.csv";
  const fs::path b = work_dir() / "est_b.csv";
  const std::string common = "infer --checkpoint " +
                             (out / "checkpoint_dsvb_gru_s1.dsvb").string() + " --input " +
                             (data_src / "test.csv").string();
  ASSERT_EQ(run_cli(common + " --out " + a.string()).exit_code, 0);
  ASSERT_EQ(run_cli(common + " --out " + b.string()).exit_code, 0);
  EXPECT_EQ(file_content_hash(a.string()), file_content_hash(b.string()));
}

TEST(CliInfer, SchemaMismatchExitsTwo) {
  const fs::path bad = work_dir() / "bad_schema.csv";
  std::ofstream(bad) << "a,b,c\n1,2,3\n";
  const fs::path out = work_dir() / "train_out";
  CommandResult r = run_cli("infer --checkpoint " +
                            (out / "checkpoint_dsvb_gru_s1.dsvb").string() + " --input " +
                            bad.string() + " --out /tmp/x.csv");
  EXPECT_EQ(r.exit_code, 2);
}

TEST(CliExportLatents, ColumnsDomainsAndInferConsistency) {
  const fs::path data_src = work_dir() / "train_src";
  const fs::path data_tgt = work_dir() / "train_tgt";
  const fs::path out = work_dir() / "train_out";
  const fs::path latents = work_dir() / "latents.csv";
  CommandResult r = run_cli("export-latents --checkpoint " +
                            (out / "checkpoint_dsvb_gru_s1.dsvb").string() + " --source " +
                            (data_src / "test.csv").string() + " --target " +
                            (data_tgt / "test.csv").string() + " --out " + latents.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;

  std::ifstream in(latents);
  std::string header;
  std::getline(in, header);
  Index columns = 1;
  for (char c : header) columns += (c == ',');
  EXPECT_EQ(columns, 22 + 1);  // n_x + domain tag

  bool saw_source = false, saw_target = false;
  std::vector<std::string> first_row_cells;
  std::string row;
  bool first = true;
  while (std::getline(in, row)) {
    const auto last_comma = row.rfind(',');
    const std::string domain = row.substr(last_comma + 1);
    if (domain == "source") saw_source = true;
    if (domain == "target") saw_target = true;
    if (first) {
      std::stringstream ss(row.substr(0, last_comma));
      std::string cell;
      while (std::getline(ss, cell, ',')) first_row_cells.push_back(cell);
      first = false;
    }
  }
  EXPECT_TRUE(saw_source);
  EXPECT_TRUE(saw_target);

  // latents match the inference estimates on the same data (shared path)
  const fs::path estimates = work_dir() / "estimates_src.csv";
  ASSERT_EQ(run_cli("infer --checkpoint " + (out / "checkpoint_dsvb_gru_s1.dsvb").string() +
                    " --input " + (data_src / "test.csv").string() + " --out " +
                    estimates.string()).exit_code, 0);
  std::ifstream est_in(estimates);
  std::string est_header, est_row;
  std::getline(est_in, est_header);
  std::getline(est_in, est_row);
  std::stringstream ss(est_row);
  std::string cell;
  std::vector<std::string> est_cells;
  while (std::getline(ss, cell, ',')) est_cells.push_back(cell);
  for (std::size_t c = 0; c < 22; ++c) {
    const double latent_v = std::stod(first_row_cells[c]);
    const double est_v = std::stod(est_cells[c + 1]);  // estimates lead with t
    EXPECT_NEAR(latent_v, est_v, 1e-12);
  }
}

TEST(CliExperiment, TinyTableHasFourRows) {
  const fs::path out = work_dir() / "experiment_out";
  CommandResult r = run_cli("experiment --scenario 1 --synthetic --train-samples 220 "
                            "--test-samples 64 --seeds 1 --epochs 1 --seq-len 16 --stride 16 "
                            "--batch-size 4 --hidden 8 --out " + out.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(line_count(out / "rmse_table.csv"), 5);  // header + 4 methods
  EXPECT_NE(r.output.find("dsvb-gru"), std::string::npos);
  EXPECT_NE(r.output.find("dsvb-lstm"), std::string::npos);
}

TEST(CliExperiment, UnknownScenarioExitsTwo) {
  EXPECT_EQ(run_cli("experiment --scenario 9 --synthetic").exit_code, 2);
}
