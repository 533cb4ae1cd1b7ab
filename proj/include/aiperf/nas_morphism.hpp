#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aiperf/arch_graph.hpp"
#include "aiperf/hpo_tpe.hpp"
#include "aiperf/opcount.hpp"

namespace aiperf {

enum class MorphKind { DeepenBlock, Widen, ChangeKernel, AddSkip };

/// One network-morphism step. parameter means: DeepenBlock -> kernel size of
/// the inserted conv (1/3/5/7), Widen -> 2 (the only factor), ChangeKernel ->
/// the new kernel size (1/3/5/7), AddSkip -> skip span in nodes (>= 1).
struct MorphAction {
  MorphKind kind = MorphKind::DeepenBlock;
  std::string target_node;
  int parameter = 0;
};

struct InapplicableActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeRepairFailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExhaustedSearchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structural summary used by the acquisition distance. Cached on history
/// records so scoring does not reload architectures.
struct GraphFeatures {
  long long node_count = 0;
  long long param_count = 0;
  std::array<long long, 4> kernel_histogram{};  // counts for k = 1,3,5,7
};

GraphFeatures graph_features(const ArchitectureGraph& graph);

/// Completed-trial summary shared across replicas via the history list.
struct HistoryRecord {
  std::string digest;
  std::string architecture_ref;  // path of the serialized candidate
  HyperParams hyperparams;
  double best_error = 0.5;  // strictly in (0,1)
  OpCount per_image_ops;    // FP + BP per image of the trained graph
  int epochs_run = 0;
  double wall_seconds = 0;
  GraphFeatures features;
};

/// Applies one morph step and returns the (validated) child graph. Input
/// shape and softmax width are always preserved.
///   DeepenBlock inserts conv+BN+ReLU after the target (+3 nodes exactly).
///   Widen doubles one conv's out_channels; Add joins broken by the wider
///   tensor are repaired with a 1x1 projection conv on the wider branch.
///   ChangeKernel re-sizes one conv's kernel ("same" padding keeps shapes).
///   AddSkip joins the target's output to a point `span` steps downstream
///   through a new Add, with a 1x1 projection conv when shapes differ.
ArchitectureGraph apply_morph(const ArchitectureGraph& graph, const MorphAction& action);

class GraphResolver {
 public:
  virtual ~GraphResolver() = default;
  virtual std::optional<ArchitectureGraph> resolve(const HistoryRecord& record) const;
};

struct ProposeOptions {
  int max_attempts = 1000;
  const std::set<std::string>* exclude = nullptr;  // extra digests to skip
  const GraphResolver* resolver = nullptr;         // defaults to file loading
};

/// n distinct novel candidates, each 1..3 morph steps from the parent:
/// the lowest-error history record (earliest record wins ties), or `base`
/// when history is empty. Deterministic in (history, base, n, rng_seed).
/// Throws ExhaustedSearchError after max_attempts failed attempts.
std::vector<ArchitectureGraph> propose_candidates(
    const std::vector<HistoryRecord>& history, const ArchitectureGraph& base, int n,
    u64 rng_seed, const ProposeOptions& options = {});

/// Expected-improvement score of a candidate under a distance-weighted
/// surrogate over history. Distance between two graphs is
///   |dN| * 1.0 + |dParams|/max(params) * 1.0 + L1(kernel histograms) * 0.5
/// and kernel weights are 1/distance (an exact match degenerates to that
/// record: variance 0, score max(0, best - record_error)). Empty history
/// scores every candidate 0. Higher is more promising.
double acquisition_score(const std::vector<HistoryRecord>& history,
                         const ArchitectureGraph& candidate);

/// Re-kernels the convolutions inserted by DeepenBlock morphs (node ids
/// "d<N>_conv") to the HPO-chosen kernel size. Seed convolutions and 1x1
/// projections keep their kernels.
ArchitectureGraph override_block_kernels(const ArchitectureGraph& graph,
                                         int kernel_size);

}  // namespace aiperf
