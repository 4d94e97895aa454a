#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "dsvb/data.hpp"
#include "dsvb/synth.hpp"

namespace dsvb {

struct UnknownScenario : Error {
  using Error::Error;
};

struct DomainSpec {
  ContactMode contact;
  ActuationPattern actuation;
};

/// Transfer scenario: labeled source configuration vs unlabeled target.
/// 1: tip -> surface, 2: surface -> tip (oscillatory actuation held fixed);
/// 3: oscillatory -> random, 4: random -> oscillatory (tip contact held
/// fixed).
struct Scenario {
  int id = 0;
  std::string name;
  DomainSpec source;
  DomainSpec target;
};

inline Scenario scenario_by_id(int id) {
  switch (id) {
    case 1:
      return {1, "tip_to_surface",
              {ContactMode::tip, ActuationPattern::oscillatory},
              {ContactMode::surface, ActuationPattern::oscillatory}};
    case 2:
      return {2, "surface_to_tip",
              {ContactMode::surface, ActuationPattern::oscillatory},
              {ContactMode::tip, ActuationPattern::oscillatory}};
    case 3:
      return {3, "oscillatory_to_random",
              {ContactMode::tip, ActuationPattern::oscillatory},
              {ContactMode::tip, ActuationPattern::random_hold}};
    case 4:
      return {4, "random_to_oscillatory",
              {ContactMode::tip, ActuationPattern::random_hold},
              {ContactMode::tip, ActuationPattern::oscillatory}};
    default:
      throw UnknownScenario("scenario id " + std::to_string(id) + " (valid: 1..4)");
  }
}

/// Labeled data that the trainer must never see. Opening the view for
/// evaluation flips an audit flag that tests can assert on.
class SealedDataset {
 public:
  SealedDataset() = default;
  explicit SealedDataset(SequenceDataset ds) : ds_(std::move(ds)) {}
  SealedDataset(SealedDataset&& other) noexcept
      : ds_(std::move(other.ds_)), accessed_(other.accessed_.load()) {}
  SealedDataset& operator=(SealedDataset&& other) noexcept {
    ds_ = std::move(other.ds_);
    accessed_.store(other.accessed_.load());
    return *this;
  }

  const SequenceDataset& open_for_evaluation() const {
    accessed_.store(true, std::memory_order_relaxed);
    return ds_;
  }

  bool accessed() const { return accessed_.load(); }
  Index rows() const { return ds_.rows(); }

 private:
  SequenceDataset ds_;
  mutable std::atomic<bool> accessed_{false};
};

struct ScenarioData {
  Scenario scenario;
  SequenceDataset source_train;         // labeled
  SequenceDataset source_test;          // labeled
  SequenceDataset target_train;         // labels stripped
  SequenceDataset target_test;          // labels stripped (inference input)
  SealedDataset target_test_labeled;    // ground truth, audit-flagged
  SealedDataset target_train_labeled;   // ground truth for diagnostics only
};

/// Builds the four datasets of a scenario from the simulator. Target labels
/// exist only inside the sealed views.
inline ScenarioData build_scenario_synthetic(int id, Index train_samples, Index test_samples,
                                             std::uint64_t seed) {
  const Scenario sc = scenario_by_id(id);
  ScenarioData data;
  data.scenario = sc;

  Rng base(seed);
  auto gen = [&](const DomainSpec& spec, const char* split, Index samples, Domain domain) {
    const std::uint64_t s =
        base.fork(std::string(to_string(spec.contact)) + "/" + to_string(spec.actuation) + "/" +
                  split)
            .seed();
    SynthConfig cfg = synth_config_for(spec.contact, spec.actuation, s, samples);
    SequenceDataset ds = synth_generate(cfg);
    ds.domain = domain;
    return ds;
  };

  data.source_train = gen(sc.source, "train", train_samples, Domain::source);
  data.source_test = gen(sc.source, "test", test_samples, Domain::source);
  SequenceDataset target_train = gen(sc.target, "train", train_samples, Domain::target);
  SequenceDataset target_test = gen(sc.target, "test", test_samples, Domain::target);
  data.target_train = target_train.without_labels();
  data.target_test = target_test.without_labels();
  data.target_train_labeled = SealedDataset(std::move(target_train));
  data.target_test_labeled = SealedDataset(std::move(target_test));
  return data;
}

struct ScenarioCsvPaths {
  std::string source_train, source_test, target_train, target_test;
};

/// Same contract for ingested CSV files; the target files must carry labels
/// (they feed the sealed evaluation views), and the training view strips
/// them.
inline ScenarioData build_scenario_csv(int id, const ScenarioCsvPaths& paths) {
  const Scenario sc = scenario_by_id(id);
  ScenarioData data;
  data.scenario = sc;
  data.source_train = load_csv(paths.source_train);
  data.source_train.domain = Domain::source;
  data.source_test = load_csv(paths.source_test);
  data.source_test.domain = Domain::source;
  SequenceDataset target_train = load_csv(paths.target_train);
  target_train.domain = Domain::target;
  SequenceDataset target_test = load_csv(paths.target_test);
  target_test.domain = Domain::target;
  data.target_train = target_train.without_labels();
  data.target_test = target_test.without_labels();
  data.target_train_labeled = SealedDataset(std::move(target_train));
  data.target_test_labeled = SealedDataset(std::move(target_test));
  return data;
}

}  // namespace dsvb
