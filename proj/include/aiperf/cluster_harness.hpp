#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aiperf/nas_morphism.hpp"
#include "aiperf/opcount.hpp"

namespace aiperf {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CommandFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutputParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExecutorFailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClusterConfig {
  int replica_count = 1;
  int accelerators_per_replica = 8;
  double peak_ops_per_accelerator = 1.25e12;  // ops/second
  double efficiency = 0.5;                    // fraction of peak actually reached
  double epoch_overhead_seconds = 5.0;        // data loading, graph compilation
  double run_budget_seconds = 36000.0;
  int max_epoch = 60;
  int patience = 5;
  long long rng_seed = 42;
  bool shared_history = true;  // false: each replica sees only its own records

  bool operator==(const ClusterConfig&) const = default;
};

void validate(const ClusterConfig& config);  // throws ConfigError

enum class TrialStatus { Pending, Running, EarlyStopped, MaxEpochReached, BudgetCut };

const char* trial_status_name(TrialStatus status);

struct EpochPoint {
  int epoch = 0;       // 1-based
  double error = 0;    // validation error after this epoch
  double end_ts = 0;   // seconds since run start
};

struct Trial {
  std::string digest;
  std::string architecture_ref;
  HyperParams hyperparams;
  std::vector<EpochPoint> epoch_trace;
  OpCount completed_ops;
  TrialStatus status = TrialStatus::Pending;
  std::shared_ptr<const ArchitectureGraph> graph;            // candidate as proposed
  std::shared_ptr<const ArchitectureGraph> effective_graph;  // after kernel override
};

struct EpochResult {
  double error = 0;         // in (0,1)
  double wall_seconds = 0;  // > 0
};

/// Boundary between the harness and a training backend.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual EpochResult run_epoch(const Trial& trial, int epoch_index, u64 rng_seed) = 0;

  /// True when run_epoch reports simulated time: the harness then advances a
  /// virtual clock on a deterministic single-threaded schedule instead of
  /// running replicas on threads against the wall clock.
  virtual bool virtual_time() const { return false; }
};

enum class StopDecision { Continue, EarlyStopped, MaxEpochReached };

/// MaxEpochReached once the trace holds max_epoch epochs; EarlyStopped when
/// the best error did not improve by at least 1e-4 absolute within the last
/// `patience` epochs; Continue otherwise.
StopDecision early_stop_decision(const std::vector<EpochPoint>& trace, int patience,
                                 int max_epoch);

/// wall = epoch_ops / (accelerators * peak * efficiency) + overhead
double epoch_wall_seconds(double epoch_ops, const ClusterConfig& config);

/// Desk-scale stand-in for real training. Wall time follows the throughput
/// model above with epoch_ops = training + validation ops of the trial's
/// graph; the error curve decays as floor + (0.9-floor)*exp(-epoch/8) with a
/// per-trial floor hashed from (digest, hyperparams, config seed) into
/// [0.18, 0.35] and seeded uniform noise of +-0.005. Pure function.
EpochResult simulated_run_epoch(const Trial& trial, int epoch_index,
                                const ClusterConfig& config,
                                const DatasetDescriptor& data, u64 rng_seed);

class SimulatedExecutor : public Executor {
 public:
  SimulatedExecutor(ClusterConfig config, DatasetDescriptor data)
      : config_(config), data_(data) {}
  EpochResult run_epoch(const Trial& trial, int epoch_index, u64 rng_seed) override {
    return simulated_run_epoch(trial, epoch_index, config_, data_, rng_seed);
  }
  bool virtual_time() const override { return true; }

 private:
  ClusterConfig config_;
  DatasetDescriptor data_;
};

/// Runs one epoch by spawning an external command. The template must contain
/// the placeholders {arch_file} {epoch} {batch_size} {kernel_size} {out_file};
/// the command writes "error=<float> seconds=<float>" into {out_file}.
class CommandExecutor : public Executor {
 public:
  explicit CommandExecutor(std::string command_template,
                           std::filesystem::path work_dir = {});
  EpochResult run_epoch(const Trial& trial, int epoch_index, u64 rng_seed) override;

 private:
  std::string template_;
  std::filesystem::path work_dir_;
};

EpochResult parse_epoch_output(const std::string& text);  // "error=.. seconds=.."

enum class EventKind { Proposed, Epoch, Stopped, Recorded };

const char* event_kind_name(EventKind kind);

struct RunEvent {
  double ts_seconds = 0;
  int replica_id = 0;
  std::string trial_digest;
  EventKind event = EventKind::Proposed;
  int epoch_index = 0;
  double error = 0;
  u64 epoch_ops = 0;
  double wall_seconds = 0;
};

struct HpoNote {
  double ts_seconds = 0;
  std::string text;  // rendered as a "# hpo ..." comment line
};

/// Line-delimited run record: "# config key=value" header, a column header,
/// then one CSV record per event. The sole input of the scoring module.
struct RunLog {
  std::vector<std::pair<std::string, std::string>> config_header;
  std::vector<RunEvent> events;
  std::vector<HpoNote> hpo_notes;

  std::string to_text() const;
  static RunLog from_text(std::string_view text);
  void save(const std::filesystem::path& file) const;
  static RunLog load(const std::filesystem::path& file);

  std::optional<std::string> header_value(const std::string& key) const;
};

struct RunOptions {
  std::filesystem::path buffer_dir;  // candidate files land here when set
  std::vector<std::pair<std::string, std::string>> extra_header;
};

/// Primary-replica loop: every replica repeatedly snapshots history, keeps a
/// buffer of up to 4 morph candidates, trains the highest-acquisition one
/// with per-round HPO, and appends a HistoryRecord; the run stops at the
/// wall-clock budget. Simulated executors run on a deterministic virtual
/// clock; command executors run the replicas on real threads.
RunLog run_benchmark(const ClusterConfig& config, const DatasetDescriptor& data,
                     Executor& executor, const RunOptions& options = {});

}  // namespace aiperf
