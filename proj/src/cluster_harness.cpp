#include "aiperf/cluster_harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "aiperf/hpo_tpe.hpp"

namespace aiperf {

namespace {

constexpr double kImprovementEpsilon = 1e-4;
constexpr int kBufferCapacity = 4;
constexpr int kWarmupTrials = 3;  // per replica: predicted errors through round 3
constexpr int kNumClasses = 1000;

std::string fmt_f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void validate(const ClusterConfig& config) {
  if (config.replica_count < 1) throw ConfigError("replica_count must be >= 1");
  if (config.accelerators_per_replica < 1) {
    throw ConfigError("accelerators_per_replica must be >= 1");
  }
  if (config.peak_ops_per_accelerator <= 0) {
    throw ConfigError("peak_ops_per_accelerator must be > 0");
  }
  if (config.efficiency <= 0 || config.efficiency > 1) {
    throw ConfigError("efficiency must be in (0, 1]");
  }
  if (config.epoch_overhead_seconds < 0) {
    throw ConfigError("epoch_overhead_seconds must be >= 0");
  }
  if (config.run_budget_seconds <= 0) throw ConfigError("run_budget_seconds must be > 0");
  if (config.max_epoch < 1) throw ConfigError("max_epoch must be >= 1");
  if (config.patience < 1) throw ConfigError("patience must be >= 1");
}

const char* trial_status_name(TrialStatus status) {
  switch (status) {
    case TrialStatus::Pending: return "pending";
    case TrialStatus::Running: return "running";
    case TrialStatus::EarlyStopped: return "early_stopped";
    case TrialStatus::MaxEpochReached: return "max_epoch";
    case TrialStatus::BudgetCut: return "budget_cut";
  }
  return "?";
}

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::Proposed: return "proposed";
    case EventKind::Epoch: return "epoch";
    case EventKind::Stopped: return "stopped";
    case EventKind::Recorded: return "recorded";
  }
  return "?";
}

StopDecision early_stop_decision(const std::vector<EpochPoint>& trace, int patience,
                                 int max_epoch) {
  if (trace.empty()) throw std::invalid_argument("epoch trace is empty");
  int n = static_cast<int>(trace.size());
  if (n >= max_epoch) return StopDecision::MaxEpochReached;
  if (n <= patience) return StopDecision::Continue;
  double best_before = trace[0].error;
  for (int i = 1; i < n - patience; ++i) best_before = std::min(best_before, trace[i].error);
  double best_window = trace[n - patience].error;
  for (int i = n - patience + 1; i < n; ++i) {
    best_window = std::min(best_window, trace[i].error);
  }
  return best_window <= best_before - kImprovementEpsilon ? StopDecision::Continue
                                                          : StopDecision::EarlyStopped;
}

double epoch_wall_seconds(double epoch_ops, const ClusterConfig& config) {
  double throughput = config.accelerators_per_replica * config.peak_ops_per_accelerator *
                      config.efficiency;
  return epoch_ops / throughput + config.epoch_overhead_seconds;
}

EpochResult simulated_run_epoch(const Trial& trial, int epoch_index,
                                const ClusterConfig& config,
                                const DatasetDescriptor& data, u64 rng_seed) {
  if (epoch_index < 1) throw std::invalid_argument("epoch index must be >= 1");
  const auto& graph = trial.effective_graph ? trial.effective_graph : trial.graph;
  if (!graph) throw ExecutorFailureError("trial carries no architecture graph");

  u128 ops = count_training_epoch(*graph, data).weighted_total() +
             count_validation_epoch(*graph, data).weighted_total();
  double wall = epoch_wall_seconds(u128_to_double(ops), config);

  // Per-trial error floor hashed from (digest, hyperparams, config seed).
  u64 hp_code = static_cast<u64>(trial.hyperparams.batch_size) * 64 +
                static_cast<u64>(trial.hyperparams.kernel_size);
  u64 floor_seed = mix64(static_cast<u64>(config.rng_seed), fnv1a64(trial.digest), hp_code);
  double floor = 0.18 + 0.17 * SplitMix64(floor_seed).unit();

  constexpr double kTauEpochs = 8.0;
  double noise = (SplitMix64(rng_seed).unit() - 0.5) * 0.01;  // uniform +-0.005
  double error = floor + (0.9 - floor) * std::exp(-epoch_index / kTauEpochs) + noise;
  return {std::clamp(error, 0.001, 0.999), wall};
}

CommandExecutor::CommandExecutor(std::string command_template,
                                 std::filesystem::path work_dir)
    : template_(std::move(command_template)), work_dir_(std::move(work_dir)) {
  if (work_dir_.empty()) {
    work_dir_ = std::filesystem::temp_directory_path() / "aiperf-cmd";
  }
  std::filesystem::create_directories(work_dir_);
}

EpochResult parse_epoch_output(const std::string& text) {
  auto parse_field = [&](const char* key) {
    auto pos = text.find(key);
    if (pos == std::string::npos) {
      throw OutputParseError(std::string("missing '") + key + "' in executor output");
    }
    return std::strtod(text.c_str() + pos + std::strlen(key), nullptr);
  };
  EpochResult r{parse_field("error="), parse_field("seconds=")};
  if (!(r.error > 0 && r.error < 1)) {
    throw OutputParseError("executor error value out of (0,1): " + fmt_f6(r.error));
  }
  if (!(r.wall_seconds > 0)) {
    throw OutputParseError("executor seconds value must be > 0");
  }
  return r;
}

namespace {

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos;
       pos += to.size()) {
    text.replace(pos, from.size(), to);
  }
}

}  // namespace

EpochResult CommandExecutor::run_epoch(const Trial& trial, int epoch_index,
                                       u64 rng_seed) {
  std::string arch_file = trial.architecture_ref;
  if (arch_file.empty() || !std::filesystem::exists(arch_file)) {
    if (!trial.graph) throw ExecutorFailureError("trial carries no architecture");
    arch_file = (work_dir_ / (trial.digest + ".arch")).string();
    if (!std::filesystem::exists(arch_file)) trial.graph->save(arch_file);
  }
  std::string out_file =
      (work_dir_ / (trial.digest + "_" + std::to_string(epoch_index) + "_" +
                    std::to_string(rng_seed % 100000) + ".out"))
          .string();

  std::string cmd = template_;
  replace_all(cmd, "{arch_file}", arch_file);
  replace_all(cmd, "{epoch}", std::to_string(epoch_index));
  replace_all(cmd, "{batch_size}", std::to_string(trial.hyperparams.batch_size));
  replace_all(cmd, "{kernel_size}", std::to_string(trial.hyperparams.kernel_size));
  replace_all(cmd, "{out_file}", out_file);

  int rc = std::system(cmd.c_str());
  if (rc != 0) {
    std::filesystem::remove(out_file);
    throw CommandFailedError("command exited with status " + std::to_string(rc) + ": " +
                             cmd);
  }
  std::ifstream in(out_file);
  if (!in) throw OutputParseError("command produced no output file: " + out_file);
  std::ostringstream buf;
  buf << in.rdbuf();
  in.close();
  std::filesystem::remove(out_file);
  return parse_epoch_output(buf.str());
}

std::string RunLog::to_text() const {
  std::string out = "# aiperf-runlog v1\n";
  for (const auto& [k, v] : config_header) out += "# config " + k + "=" + v + "\n";
  out += "ts_seconds,replica_id,trial_digest,event,epoch_index,error,epoch_ops,wall_seconds\n";
  std::size_t ni = 0;
  auto emit_note = [&](const HpoNote& n) {
    out += "# hpo ts=" + fmt_f6(n.ts_seconds) + " " + n.text + "\n";
  };
  for (const auto& e : events) {
    while (ni < hpo_notes.size() && hpo_notes[ni].ts_seconds < e.ts_seconds) {
      emit_note(hpo_notes[ni++]);
    }
    out += fmt_f6(e.ts_seconds);
    out += ',' + std::to_string(e.replica_id);
    out += ',' + e.trial_digest;
    out += ',';
    out += event_kind_name(e.event);
    out += ',' + std::to_string(e.epoch_index);
    out += ',' + fmt_f6(e.error);
    out += ',' + std::to_string(e.epoch_ops);
    out += ',' + fmt_f6(e.wall_seconds);
    out += '\n';
  }
  while (ni < hpo_notes.size()) emit_note(hpo_notes[ni++]);
  return out;
}

RunLog RunLog::from_text(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  bool saw_columns = false;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# config ", 0) == 0) {
      std::string kv = line.substr(9);
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw OutputParseError("bad config line: " + line);
      log.config_header.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      continue;
    }
    if (line.rfind("# hpo ", 0) == 0) {
      std::string body = line.substr(6);
      HpoNote note;
      if (body.rfind("ts=", 0) == 0) {
        auto sp = body.find(' ');
        note.ts_seconds = std::strtod(body.c_str() + 3, nullptr);
        note.text = sp == std::string::npos ? "" : body.substr(sp + 1);
      } else {
        note.text = body;
      }
      log.hpo_notes.push_back(std::move(note));
      continue;
    }
    if (line[0] == '#') continue;
    if (!saw_columns) {
      if (line.rfind("ts_seconds,", 0) != 0) {
        throw OutputParseError("missing column header, got: " + line);
      }
      saw_columns = true;
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 8) throw OutputParseError("bad record: " + line);
    RunEvent e;
    try {
      e.ts_seconds = std::stod(fields[0]);
      e.replica_id = std::stoi(fields[1]);
      e.trial_digest = fields[2];
      if (fields[3] == "proposed") e.event = EventKind::Proposed;
      else if (fields[3] == "epoch") e.event = EventKind::Epoch;
      else if (fields[3] == "stopped") e.event = EventKind::Stopped;
      else if (fields[3] == "recorded") e.event = EventKind::Recorded;
      else throw OutputParseError("unknown event: " + fields[3]);
      e.epoch_index = std::stoi(fields[4]);
      e.error = std::stod(fields[5]);
      e.epoch_ops = std::stoull(fields[6]);
      e.wall_seconds = std::stod(fields[7]);
    } catch (const OutputParseError&) {
      throw;
    } catch (const std::exception&) {
      throw OutputParseError("bad record: " + line);
    }
    log.events.push_back(std::move(e));
  }
  return log;
}

void RunLog::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw OutputParseError("cannot write " + file.string());
  out << to_text();
}

RunLog RunLog::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw OutputParseError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::optional<std::string> RunLog::header_value(const std::string& key) const {
  for (const auto& [k, v] : config_header) {
    if (k == key) return v;
  }
  return std::nullopt;
}

namespace {

// Append-only history with copy-on-write snapshots: readers grab the current
// shared vector, appenders swap in an extended copy.
class HistoryStore {
 public:
  using Entry = std::pair<int, HistoryRecord>;  // (replica id, record)
  using Snapshot = std::shared_ptr<const std::vector<Entry>>;

  HistoryStore() : records_(std::make_shared<std::vector<Entry>>()) {}

  Snapshot snapshot() const {
    std::lock_guard<std::mutex> l(mu_);
    return records_;
  }

  void append(int replica, HistoryRecord record) {
    std::lock_guard<std::mutex> l(mu_);
    auto next = std::make_shared<std::vector<Entry>>(*records_);
    next->emplace_back(replica, std::move(record));
    records_ = std::move(next);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const std::vector<Entry>> records_;
};

void check_epoch_result(const EpochResult& res) {
  if (!(res.error > 0 && res.error < 1) || !(res.wall_seconds > 0)) {
    throw ExecutorFailureError("executor broke its contract: error=" +
                               std::to_string(res.error) +
                               " wall=" + std::to_string(res.wall_seconds));
  }
}

std::vector<HistoryRecord> visible_history(const HistoryStore::Snapshot& snap,
                                           int replica_id, bool shared) {
  std::vector<HistoryRecord> out;
  for (const auto& [owner, record] : *snap) {
    if (shared || owner == replica_id) out.push_back(record);
  }
  return out;
}

struct Candidate {
  std::shared_ptr<const ArchitectureGraph> graph;
  std::string digest;
};

struct ActiveTrial {
  Trial trial;
  int round = 0;  // 1-based trial index on its replica
  u64 per_epoch_ops = 0;
  OpCount per_epoch_count;
  OpCount per_image_ops;
  double start_ts = 0;
};

struct ReplicaRuntime {
  int id = 0;
  double clock = 0;  // virtual time only
  bool done = false;
  std::deque<Candidate> buffer;
  std::vector<HpoObservation> observations;
  int trials_started = 0;
  u64 proposal_round = 0;
  std::optional<ActiveTrial> active;
};

class MapResolver : public GraphResolver {
 public:
  explicit MapResolver(std::mutex& mu,
                       const std::map<std::string, std::shared_ptr<const ArchitectureGraph>>& graphs)
      : mu_(mu), graphs_(graphs) {}

  std::optional<ArchitectureGraph> resolve(const HistoryRecord& record) const override {
    std::lock_guard<std::mutex> l(mu_);
    auto it = graphs_.find(record.digest);
    if (it == graphs_.end()) return std::nullopt;
    return *it->second;
  }

 private:
  std::mutex& mu_;
  const std::map<std::string, std::shared_ptr<const ArchitectureGraph>>& graphs_;
};

// Everything the replica workers share. Log and claim sets are mutex-guarded
// so the same code drives both the virtual and the threaded schedule.
struct RunContext {
  const ClusterConfig& config;
  const DatasetDescriptor& data;
  Executor& executor;
  const RunOptions& options;
  ArchitectureGraph seed;

  HistoryStore history;
  std::mutex claims_mu;
  std::set<std::string> claimed;
  std::map<std::string, std::shared_ptr<const ArchitectureGraph>> graphs;

  std::mutex log_mu;
  RunLog log;

  std::mutex failure_mu;
  std::string failure;

  void emit(RunEvent e) {
    std::lock_guard<std::mutex> l(log_mu);
    log.events.push_back(std::move(e));
  }
  void note(double ts, std::string text) {
    std::lock_guard<std::mutex> l(log_mu);
    log.hpo_notes.push_back({ts, std::move(text)});
  }
  void fail(const std::string& what) {
    std::lock_guard<std::mutex> l(failure_mu);
    if (failure.empty()) failure = what;
  }
  bool failed() {
    std::lock_guard<std::mutex> l(failure_mu);
    return !failure.empty();
  }
};

// Tops up the candidate buffer and starts the best-scoring candidate as a
// new trial. Returns false when the search is exhausted.
bool try_start_trial(RunContext& ctx, ReplicaRuntime& r, double now) {
  auto snap = ctx.history.snapshot();
  std::vector<HistoryRecord> history =
      visible_history(snap, r.id, ctx.config.shared_history);

  MapResolver resolver(ctx.claims_mu, ctx.graphs);
  if (static_cast<int>(r.buffer.size()) < kBufferCapacity) {
    std::set<std::string> exclude;
    {
      std::lock_guard<std::mutex> l(ctx.claims_mu);
      exclude = ctx.claimed;
    }
    for (const auto& c : r.buffer) exclude.insert(c.digest);
    ProposeOptions opts;
    opts.exclude = &exclude;
    opts.resolver = &resolver;
    int need = kBufferCapacity - static_cast<int>(r.buffer.size());
    u64 seed = mix64(static_cast<u64>(ctx.config.rng_seed), 0x70726f70ULL,
                     static_cast<u64>(r.id), r.proposal_round++);
    try {
      auto proposed = propose_candidates(history, ctx.seed, need, seed, opts);
      for (auto& g : proposed) {
        auto shared = std::make_shared<const ArchitectureGraph>(std::move(g));
        r.buffer.push_back({shared, canonical_digest(*shared)});
      }
    } catch (const ExhaustedSearchError&) {
      if (r.buffer.empty()) return false;
    }
  }
  if (r.buffer.empty()) return false;

  // Highest acquisition wins; ties resolved by digest so the schedule is
  // deterministic. Scored outside the claims lock, claimed inside it so two
  // replicas can never start the same digest.
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < r.buffer.size(); ++i) {
    order.emplace_back(acquisition_score(history, *r.buffer[i].graph), i);
  }
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return r.buffer[a.second].digest < r.buffer[b.second].digest;
  });
  Candidate cand;
  bool all_claimed_elsewhere = false;
  {
    std::lock_guard<std::mutex> l(ctx.claims_mu);
    std::size_t picked = r.buffer.size();
    for (const auto& [score, i] : order) {
      if (!ctx.claimed.count(r.buffer[i].digest)) {
        picked = i;
        break;
      }
    }
    if (picked == r.buffer.size()) {
      all_claimed_elsewhere = true;
    } else {
      cand = r.buffer[picked];
      r.buffer.erase(r.buffer.begin() + static_cast<long>(picked));
      ctx.claimed.insert(cand.digest);
      ctx.graphs[cand.digest] = cand.graph;
    }
  }
  if (all_claimed_elsewhere) {
    r.buffer.clear();
    return try_start_trial(ctx, r, now);
  }

  HyperParams hp = suggest(r.observations, mix64(static_cast<u64>(ctx.config.rng_seed),
                                                 0x68706fULL, static_cast<u64>(r.id),
                                                 static_cast<u64>(r.trials_started)));

  ActiveTrial at;
  at.round = ++r.trials_started;
  at.start_ts = now;
  at.trial.digest = cand.digest;
  at.trial.hyperparams = hp;
  at.trial.graph = cand.graph;
  at.trial.status = TrialStatus::Running;

  ArchitectureGraph effective = override_block_kernels(*cand.graph, hp.kernel_size);
  at.trial.effective_graph = canonical_digest(effective) == cand.digest
                                 ? cand.graph
                                 : std::make_shared<const ArchitectureGraph>(effective);

  if (!ctx.options.buffer_dir.empty()) {
    std::filesystem::path file = ctx.options.buffer_dir / (cand.digest + ".arch");
    if (!std::filesystem::exists(file)) cand.graph->save(file);
    at.trial.architecture_ref = file.string();
  } else {
    at.trial.architecture_ref = cand.digest + ".arch";
  }

  OpCount train = count_training_epoch(*at.trial.effective_graph, ctx.data);
  OpCount val = count_validation_epoch(*at.trial.effective_graph, ctx.data);
  at.per_epoch_count = train + val;
  u128 weighted = at.per_epoch_count.weighted_total();
  at.per_epoch_ops = weighted > static_cast<u128>(~0ULL) ? ~0ULL
                                                         : static_cast<u64>(weighted);
  at.per_image_ops =
      count_image_fp(*at.trial.effective_graph) + count_image_bp(*at.trial.effective_graph);

  ctx.emit({now, r.id, cand.digest, EventKind::Proposed, 0, 0.0, 0, 0.0});
  r.active = std::move(at);
  return true;
}

void finish_trial(RunContext& ctx, ReplicaRuntime& r, TrialStatus status, double now) {
  ActiveTrial& at = *r.active;
  at.trial.status = status;
  double best = 1.0;
  for (const auto& p : at.trial.epoch_trace) best = std::min(best, p.error);
  int epochs = static_cast<int>(at.trial.epoch_trace.size());
  double total_wall = now - at.start_ts;
  u128 total_ops = at.trial.completed_ops.weighted_total();
  u64 total_ops64 =
      total_ops > static_cast<u128>(~0ULL) ? ~0ULL : static_cast<u64>(total_ops);

  ctx.emit({now, r.id, at.trial.digest, EventKind::Stopped, epochs, best, total_ops64,
            total_wall});

  if (status != TrialStatus::BudgetCut && epochs > 0) {
    auto before = ctx.history.snapshot();
    std::vector<HistoryRecord> visible =
        visible_history(before, r.id, ctx.config.shared_history);

    HistoryRecord record;
    record.digest = at.trial.digest;
    record.architecture_ref = at.trial.architecture_ref;
    record.hyperparams = at.trial.hyperparams;
    record.best_error = std::clamp(best, 1e-9, 1.0 - 1e-9);
    record.per_image_ops = at.per_image_ops;
    record.epochs_run = epochs;
    record.wall_seconds = total_wall;
    record.features = graph_features(*at.trial.effective_graph);
    ctx.history.append(r.id, std::move(record));

    ctx.emit({now, r.id, at.trial.digest, EventKind::Recorded, epochs, best,
              total_ops64, total_wall});

    bool predicted = at.round <= kWarmupTrials;
    double obs_error =
        predicted ? predict_warmup_error(visible, at.trial.hyperparams) : best;
    r.observations.push_back({at.trial.hyperparams, obs_error, predicted});
    ctx.note(now, "replica=" + std::to_string(r.id) + " trial=" + at.trial.digest +
                      " round=" + std::to_string(at.round) +
                      " batch=" + std::to_string(at.trial.hyperparams.batch_size) +
                      " kernel=" + std::to_string(at.trial.hyperparams.kernel_size) +
                      " error=" + fmt_f6(obs_error) +
                      " predicted=" + (predicted ? "1" : "0"));
  }
  r.active.reset();
}

// One scheduling step of a replica on the virtual clock.
void step_virtual(RunContext& ctx, ReplicaRuntime& r) {
  if (!r.active) {
    if (r.clock >= ctx.config.run_budget_seconds || !try_start_trial(ctx, r, r.clock)) {
      r.done = true;
    }
    return;
  }
  if (r.clock >= ctx.config.run_budget_seconds) {
    finish_trial(ctx, r, TrialStatus::BudgetCut, r.clock);
    return;
  }
  ActiveTrial& at = *r.active;
  int epoch = static_cast<int>(at.trial.epoch_trace.size()) + 1;
  u64 rng = mix64(static_cast<u64>(ctx.config.rng_seed), fnv1a64(at.trial.digest),
                  static_cast<u64>(epoch));
  EpochResult res;
  try {
    res = ctx.executor.run_epoch(at.trial, epoch, rng);
    check_epoch_result(res);
  } catch (const std::exception& e) {
    finish_trial(ctx, r, TrialStatus::BudgetCut, r.clock);
    r.done = true;
    throw ExecutorFailureError(e.what());
  }
  r.clock += res.wall_seconds;
  at.trial.epoch_trace.push_back({epoch, res.error, r.clock});
  at.trial.completed_ops += at.per_epoch_count;
  ctx.emit({r.clock, r.id, at.trial.digest, EventKind::Epoch, epoch, res.error,
            at.per_epoch_ops, res.wall_seconds});

  StopDecision d =
      early_stop_decision(at.trial.epoch_trace, ctx.config.patience, ctx.config.max_epoch);
  if (d == StopDecision::EarlyStopped) {
    finish_trial(ctx, r, TrialStatus::EarlyStopped, r.clock);
  } else if (d == StopDecision::MaxEpochReached) {
    finish_trial(ctx, r, TrialStatus::MaxEpochReached, r.clock);
  }
}

// Replica worker against the wall clock (command executors).
void run_replica_realtime(RunContext& ctx, ReplicaRuntime& r,
                          const std::function<double()>& elapsed) {
  while (!ctx.failed()) {
    if (!r.active) {
      if (elapsed() >= ctx.config.run_budget_seconds) break;
      if (!try_start_trial(ctx, r, elapsed())) break;
      continue;
    }
    if (elapsed() >= ctx.config.run_budget_seconds) {
      finish_trial(ctx, r, TrialStatus::BudgetCut, elapsed());
      break;
    }
    ActiveTrial& at = *r.active;
    int epoch = static_cast<int>(at.trial.epoch_trace.size()) + 1;
    u64 rng = mix64(static_cast<u64>(ctx.config.rng_seed), fnv1a64(at.trial.digest),
                    static_cast<u64>(epoch));
    EpochResult res;
    try {
      res = ctx.executor.run_epoch(at.trial, epoch, rng);
      check_epoch_result(res);
    } catch (const std::exception& e) {
      finish_trial(ctx, r, TrialStatus::BudgetCut, elapsed());
      ctx.fail(e.what());
      return;
    }
    double now = elapsed();
    at.trial.epoch_trace.push_back({epoch, res.error, now});
    at.trial.completed_ops += at.per_epoch_count;
    ctx.emit({now, r.id, at.trial.digest, EventKind::Epoch, epoch, res.error,
              at.per_epoch_ops, res.wall_seconds});
    StopDecision d = early_stop_decision(at.trial.epoch_trace, ctx.config.patience,
                                         ctx.config.max_epoch);
    if (d == StopDecision::EarlyStopped) {
      finish_trial(ctx, r, TrialStatus::EarlyStopped, now);
    } else if (d == StopDecision::MaxEpochReached) {
      finish_trial(ctx, r, TrialStatus::MaxEpochReached, now);
    }
  }
  if (r.active) finish_trial(ctx, r, TrialStatus::BudgetCut, elapsed());
}

std::vector<std::pair<std::string, std::string>> resolved_header(
    const ClusterConfig& config, const DatasetDescriptor& data,
    const RunOptions& options) {
  std::vector<std::pair<std::string, std::string>> h;
  h.emplace_back("replica_count", std::to_string(config.replica_count));
  h.emplace_back("accelerators_per_replica",
                 std::to_string(config.accelerators_per_replica));
  h.emplace_back("peak_ops_per_accelerator", fmt_g17(config.peak_ops_per_accelerator));
  h.emplace_back("efficiency", fmt_g17(config.efficiency));
  h.emplace_back("epoch_overhead_seconds", fmt_g17(config.epoch_overhead_seconds));
  h.emplace_back("run_budget_seconds", fmt_g17(config.run_budget_seconds));
  h.emplace_back("max_epoch", std::to_string(config.max_epoch));
  h.emplace_back("patience", std::to_string(config.patience));
  h.emplace_back("rng_seed", std::to_string(config.rng_seed));
  h.emplace_back("shared_history", config.shared_history ? "true" : "false");
  h.emplace_back("train_images", std::to_string(data.train_images));
  h.emplace_back("val_images", std::to_string(data.val_images));
  h.emplace_back("image_shape", to_string(data.image_shape));
  for (const auto& kv : options.extra_header) h.push_back(kv);
  return h;
}

}  // namespace

RunLog run_benchmark(const ClusterConfig& config, const DatasetDescriptor& data,
                     Executor& executor, const RunOptions& options) {
  validate(config);
  validate(data);
  if (!options.buffer_dir.empty()) {
    std::filesystem::create_directories(options.buffer_dir);
  }

  RunContext ctx{config, data, executor, options,
                 build_resnet50(data.image_shape, kNumClasses)};
  ctx.log.config_header = resolved_header(config, data, options);

  std::vector<ReplicaRuntime> replicas(config.replica_count);
  for (int i = 0; i < config.replica_count; ++i) replicas[i].id = i;

  if (executor.virtual_time()) {
    // Deterministic single-threaded schedule: always advance the replica with
    // the smallest virtual clock; ties go to the lowest id.
    for (;;) {
      ReplicaRuntime* next = nullptr;
      for (auto& r : replicas) {
        if (!r.done && (!next || r.clock < next->clock)) next = &r;
      }
      if (!next) break;
      step_virtual(ctx, *next);
    }
  } else {
    auto t0 = std::chrono::steady_clock::now();
    std::function<double()> elapsed = [t0] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    std::vector<std::thread> workers;
    workers.reserve(replicas.size());
    for (auto& r : replicas) {
      workers.emplace_back(
          [&ctx, &r, &elapsed] { run_replica_realtime(ctx, r, elapsed); });
    }
    for (auto& w : workers) w.join();
    if (ctx.failed()) throw ExecutorFailureError(ctx.failure);
  }
  return std::move(ctx.log);
}

}  // namespace aiperf
