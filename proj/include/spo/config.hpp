#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spo/env.hpp"
#include "spo/estimation.hpp"
#include "spo/evaluation.hpp"
#include "spo/policy.hpp"
#include "spo/runtime.hpp"
#include "spo/store.hpp"

namespace spo {

/// beta = 1 / ln(100000).
inline const double kDefaultBeta = 1.0 / std::log(100000.0);

/// Raised for malformed or invalid config files; the message carries
/// "origin:line: key: reason".
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

struct EnvSpec {
  std::string kind = "target-set";  // target-set | suffix-match | seeded-random
  int vocab = 2;
  int horizon = 2;
  std::size_t prompts = 1;
  std::vector<TokenSeq> accepting{{1, 1}};
  TokenSeq pattern;
  std::uint64_t seed = 0;
  double success_rate = 0.25;
  bool binary = true;

  SequenceEnv build() const;
  bool operator==(const EnvSpec&) const = default;
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::kTabular;
  int hidden = 16;
  std::string reference = "uniform";  // uniform | random | <path to a saved policy>
  double reference_scale = 1.0;
  std::uint64_t reference_seed = 0;
  std::string init = "reference";  // reference | uniform

  PolicyShape shape(const SequenceEnv& env) const;
  Policy build_reference(const SequenceEnv& env) const;
  Policy build_initial(const SequenceEnv& env, const Policy& reference) const;
  bool operator==(const PolicySpec&) const = default;
};

struct Q0Spec {
  std::string method = "monte-carlo";  // monte-carlo | exact
  int samples = 800;
  bool general_rewards = false;
  std::string store;  // empty: <output>/q0.jsonl

  bool operator==(const Q0Spec&) const = default;
};

/// An offline data source named in the mix.
struct DatasetSpec {
  std::string name;
  std::string path;       // record file; used when `generate` is empty
  std::string generate;   // enumerate | reference | uniform
  int count = 0;          // per prompt, for sampled generation
  Source source = Source::kOfflineHuman;
  bool filter_correct = false;
  bool dedup = true;
  bool annotate = false;  // attach PTS annotations at load time

  bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentConfig {
  EnvSpec env;
  PolicySpec policy;
  double beta = kDefaultBeta;
  RunConfig run;
  EvalSpec eval;
  Q0Spec q0;
  PtsParams pts;
  std::vector<DatasetSpec> datasets;
  std::string output = "out";

  ExperimentConfig();
  void validate() const;
  std::string q0_store_path() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>");
ExperimentConfig parse_config_string(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Canonical text form with every key spelled out.
std::string echo_config(const ExperimentConfig& config);

/// Materializes every dataset named in the config, keyed by name.
std::map<std::string, OfflineDataset> build_datasets(const ExperimentConfig& config, const SequenceEnv& env,
                                                     const Policy& reference, std::uint64_t seed);

}  // namespace spo
