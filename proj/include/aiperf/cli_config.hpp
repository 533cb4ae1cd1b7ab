#pragma once

#include <filesystem>
#include <string>

#include "aiperf/cluster_harness.hpp"

namespace aiperf {

struct ConfigParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FixedFieldOverrideError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Benchmark rules that cannot be configured away. A config file may echo
/// them with the exact fixed value; any other value is rejected with
/// FixedFieldOverrideError rather than silently ignored.
struct FixedConfig {
  std::string nas_method = "network-morphism";
  std::string hpo_method = "bayesian";
  std::string seed_architecture = "resnet50";
  int min_precision_bits = 16;
  double max_error = 0.30;

  bool operator==(const FixedConfig&) const = default;
};

/// Training knobs recorded for provenance and passed through to external
/// executors; the simulated executor models only operation counts and error
/// curves, so it ignores them.
struct ProvenanceConfig {
  std::string dl_framework = "tensorflow";
  std::string initial_weight = "he-normal";
  std::string optimizer = "sgd-momentum";
  std::string learning_rate = "0.1-linear-decay";
  std::string loss_function = "categorical-cross-entropy";
  std::string parallelism = "sync-all-reduce";
  int parallel_data_transformation = 48;

  bool operator==(const ProvenanceConfig&) const = default;
};

enum class ExecutorKind { Simulated, Command };

struct BenchmarkConfig {
  FixedConfig fixed;
  ClusterConfig cluster;
  DatasetDescriptor dataset;  // ImageNet defaults; overridable for test scale
  HyperParams hpo_defaults{448, 3};
  ExecutorKind executor = ExecutorKind::Simulated;
  std::string command_template;
  ProvenanceConfig provenance;

  /// Set when the dataset deviates from the benchmark standard; surfaces in
  /// the run summary.
  bool nonstandard_dataset = false;

  bool operator==(const BenchmarkConfig&) const = default;
};

/// Parses the sectioned key=value format ([cluster], [executor], [hpo],
/// [dataset], [fixed], [provenance]), applies defaults, validates ranges and
/// honors the AIPERF_SEED environment override.
BenchmarkConfig load_config(const std::filesystem::path& file);
BenchmarkConfig parse_config(std::string_view text);

std::string save_config(const BenchmarkConfig& config);

/// Entry point behind the `aiperf` binary; exposed so tests can drive the
/// exact CLI paths in-process. argv excludes the program name. Returns the
/// process exit code: 0 success, 1 validation failure, 2 usage/runtime error.
int cli_main(const std::vector<std::string>& argv);

}  // namespace aiperf
