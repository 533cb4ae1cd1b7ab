#include "aiperf/nas_morphism.hpp"

#include <algorithm>
#include <cmath>

namespace aiperf {

namespace {

int kernel_bucket(int k) {
  switch (k) {
    case 1: return 0;
    case 3: return 1;
    case 5: return 2;
    case 7: return 3;
    default: return -1;
  }
}

bool valid_kernel(int k) { return kernel_bucket(k) >= 0; }

// Unused id stem such that stem+suffix is free for every needed suffix.
std::string fresh_stem(const ArchitectureGraph& g, const std::string& prefix,
                       std::initializer_list<const char*> suffixes) {
  for (std::size_t i = g.nodes().size();; ++i) {
    std::string stem = prefix + std::to_string(i);
    bool clash = false;
    for (const char* s : suffixes) {
      if (g.has_node(stem + s)) clash = true;
    }
    if (!clash) return stem;
  }
}

// Redirects all former `after -> succ` edges to `chain_tail -> succ`.
void splice_after(ArchitectureGraph& g, const std::string& after,
                  const std::string& chain_tail,
                  const std::vector<std::string>& old_successors) {
  for (const auto& succ : old_successors) {
    if (succ == chain_tail) continue;
    g.replace_predecessor(succ, after, chain_tail);
  }
}

// Output shapes of all nodes strictly before `stop` in topo order. Valid
// because infer_shapes reports the first inconsistent node.
ShapeMap shapes_before(const ArchitectureGraph& g, const std::string& stop) {
  ShapeMap m;
  for (const auto& id : g.topo_order()) {
    if (id == stop) break;
    const auto& n = g.node(id);
    const auto& ps = g.predecessors(id);
    TensorShape in = ps.empty() ? g.input_shape() : m.at(ps[0]).second;
    TensorShape out = in;
    switch (n.spec.kind) {
      case LayerKind::Convolution:
        out.height = (in.height + n.spec.stride - 1) / n.spec.stride;
        out.width = (in.width + n.spec.stride - 1) / n.spec.stride;
        out.channels = n.spec.out_channels;
        break;
      case LayerKind::MaxPool:
        out.height = (in.height + n.spec.stride - 1) / n.spec.stride;
        out.width = (in.width + n.spec.stride - 1) / n.spec.stride;
        break;
      case LayerKind::Dense:
        out = {1, 1, n.spec.out_channels};
        break;
      case LayerKind::GlobalAvgPool:
        out = {1, 1, in.channels};
        break;
      default:
        break;
    }
    m[id] = {in, out};
  }
  return m;
}

ArchitectureGraph morph_deepen(const ArchitectureGraph& graph, const MorphAction& a) {
  int kernel = a.parameter == 0 ? 3 : a.parameter;
  if (!valid_kernel(kernel)) {
    throw InapplicableActionError("DeepenBlock kernel must be one of 1,3,5,7");
  }
  if (graph.node(a.target_node).id == graph.sink_id()) {
    throw InapplicableActionError("cannot deepen after the sink");
  }
  ShapeMap shapes = infer_shapes(graph);
  int channels = shapes.at(a.target_node).second.channels;

  ArchitectureGraph g = graph;
  auto old_succ = g.successors(a.target_node);
  std::string stem = fresh_stem(g, "d", {"_conv", "_bn", "_relu"});
  g.add_node(stem + "_conv", LayerSpec::convolution(kernel, 1, channels),
             {a.target_node});
  g.add_node(stem + "_bn", LayerSpec::batch_norm(), {stem + "_conv"});
  g.add_node(stem + "_relu", LayerSpec::relu(), {stem + "_bn"});
  splice_after(g, a.target_node, stem + "_relu", old_succ);
  return g;
}

// Repairs Add nodes whose branches disagree after a widen: the wider branch
// is projected back with a 1x1 conv. Bounded by the number of Add nodes.
void repair_add_mismatches(ArchitectureGraph& g) {
  for (;;) {
    try {
      infer_shapes(g);
      return;
    } catch (const ShapeMismatchError& e) {
      const auto& preds = g.predecessors(e.node_id);
      ShapeMap partial = shapes_before(g, e.node_id);
      TensorShape s0 = partial.at(preds[0]).second;
      TensorShape s1 = partial.at(preds[1]).second;
      if (s0.height != s1.height || s0.width != s1.width) {
        throw ShapeRepairFailureError("spatial mismatch at " + e.node_id +
                                      " cannot be repaired");
      }
      bool first_wider = s0.channels > s1.channels;
      std::string wide = first_wider ? preds[0] : preds[1];  // copy: the edge list mutates
      int target_channels = first_wider ? s1.channels : s0.channels;
      std::string proj = fresh_stem(g, "wp", {"_conv"}) + "_conv";
      g.add_node(proj, LayerSpec::convolution(1, 1, target_channels), {wide});
      g.replace_predecessor(e.node_id, wide, proj);
    }
  }
}

ArchitectureGraph morph_widen(const ArchitectureGraph& graph, const MorphAction& a) {
  const GraphNode& target = graph.node(a.target_node);
  if (target.spec.kind != LayerKind::Convolution) {
    throw InapplicableActionError("Widen targets a Convolution, got " +
                                  std::string(layer_kind_name(target.spec.kind)));
  }
  if (a.parameter != 0 && a.parameter != 2) {
    throw InapplicableActionError("Widen factor is fixed to 2");
  }
  ArchitectureGraph g = graph;
  g.mutable_spec(a.target_node).out_channels *= 2;
  repair_add_mismatches(g);
  return g;
}

ArchitectureGraph morph_change_kernel(const ArchitectureGraph& graph,
                                      const MorphAction& a) {
  const GraphNode& target = graph.node(a.target_node);
  if (target.spec.kind != LayerKind::Convolution) {
    throw InapplicableActionError("ChangeKernel targets a Convolution");
  }
  if (!valid_kernel(a.parameter)) {
    throw InapplicableActionError("ChangeKernel parameter must be one of 1,3,5,7");
  }
  ArchitectureGraph g = graph;
  g.mutable_spec(a.target_node).kernel_size = a.parameter;
  return g;
}

ArchitectureGraph morph_add_skip(const ArchitectureGraph& graph, const MorphAction& a) {
  int span = a.parameter;
  if (span < 1) throw InapplicableActionError("AddSkip span must be >= 1");
  std::string sink = graph.sink_id();
  if (a.target_node == sink) {
    throw InapplicableActionError("cannot skip from the sink");
  }
  // Walk `span` steps downstream along the first successor.
  std::string to = a.target_node;
  for (int i = 0; i < span; ++i) {
    auto succ = graph.successors(to);
    if (succ.empty() || succ[0] == sink) {
      throw InapplicableActionError("skip span reaches the sink");
    }
    to = succ[0];
  }
  ShapeMap shapes = infer_shapes(graph);
  TensorShape from_shape = shapes.at(a.target_node).second;
  TensorShape to_shape = shapes.at(to).second;

  ArchitectureGraph g = graph;
  auto old_succ = g.successors(to);
  std::string branch = a.target_node;
  if (!(from_shape == to_shape)) {
    if (from_shape.height % to_shape.height != 0 ||
        from_shape.width % to_shape.width != 0 ||
        from_shape.height / to_shape.height != from_shape.width / to_shape.width) {
      throw ShapeRepairFailureError("skip endpoints " + to_string(from_shape) +
                                    " -> " + to_string(to_shape) +
                                    " are irreconcilable");
    }
    int stride = from_shape.height / to_shape.height;
    std::string proj = fresh_stem(g, "sk", {"_conv", "_add"}) + "_conv";
    g.add_node(proj, LayerSpec::convolution(1, stride, to_shape.channels),
               {a.target_node});
    branch = proj;
  }
  std::string add = fresh_stem(g, "sk", {"_add"}) + "_add";
  g.add_node(add, LayerSpec::add(), {to, branch});
  splice_after(g, to, add, old_succ);
  return g;
}

}  // namespace

ArchitectureGraph apply_morph(const ArchitectureGraph& graph, const MorphAction& action) {
  if (!graph.has_node(action.target_node)) {
    throw InapplicableActionError("target node does not exist: " + action.target_node);
  }
  ArchitectureGraph result;
  switch (action.kind) {
    case MorphKind::DeepenBlock: result = morph_deepen(graph, action); break;
    case MorphKind::Widen: result = morph_widen(graph, action); break;
    case MorphKind::ChangeKernel: result = morph_change_kernel(graph, action); break;
    case MorphKind::AddSkip: result = morph_add_skip(graph, action); break;
  }
  result.validate();
  infer_shapes(result);
  return result;
}

GraphFeatures graph_features(const ArchitectureGraph& graph) {
  GraphFeatures f;
  f.node_count = static_cast<long long>(graph.nodes().size());
  f.param_count = parameter_count(graph);
  for (const auto& n : graph.nodes()) {
    if (n.spec.kind == LayerKind::Convolution) {
      int b = kernel_bucket(n.spec.kernel_size);
      if (b >= 0) ++f.kernel_histogram[b];
    }
  }
  return f;
}

std::optional<ArchitectureGraph> GraphResolver::resolve(
    const HistoryRecord& record) const {
  if (record.architecture_ref.empty()) return std::nullopt;
  std::error_code ec;
  if (!std::filesystem::exists(record.architecture_ref, ec)) return std::nullopt;
  return ArchitectureGraph::load(record.architecture_ref);
}

namespace {

const HistoryRecord* best_record(const std::vector<HistoryRecord>& history) {
  const HistoryRecord* best = nullptr;
  for (const auto& r : history) {
    if (!best || r.best_error < best->best_error) best = &r;  // earliest wins ties
  }
  return best;
}

// Random applicable action; nullopt after a handful of rejected draws.
std::optional<ArchitectureGraph> random_morph(const ArchitectureGraph& graph,
                                              SplitMix64& rng) {
  const auto& nodes = graph.nodes();
  for (int attempt = 0; attempt < 16; ++attempt) {
    MorphAction a;
    a.kind = static_cast<MorphKind>(rng.below(4));
    a.target_node = nodes[rng.below(nodes.size())].id;
    switch (a.kind) {
      case MorphKind::DeepenBlock:
        a.parameter = kKernelSizeDomain[rng.below(4)];
        break;
      case MorphKind::Widen:
        a.parameter = 2;
        break;
      case MorphKind::ChangeKernel: {
        a.parameter = kKernelSizeDomain[rng.below(4)];
        break;
      }
      case MorphKind::AddSkip:
        a.parameter = 1 + static_cast<int>(rng.below(4));
        break;
    }
    try {
      return apply_morph(graph, a);
    } catch (const InapplicableActionError&) {
    } catch (const ShapeRepairFailureError&) {
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<ArchitectureGraph> propose_candidates(
    const std::vector<HistoryRecord>& history, const ArchitectureGraph& base, int n,
    u64 rng_seed, const ProposeOptions& options) {
  if (n < 1) throw InapplicableActionError("candidate count must be >= 1");

  GraphResolver default_resolver;
  const GraphResolver* resolver = options.resolver ? options.resolver : &default_resolver;

  ArchitectureGraph parent = base;
  if (const HistoryRecord* best = best_record(history)) {
    if (auto resolved = resolver->resolve(*best)) parent = std::move(*resolved);
  }

  std::set<std::string> known;
  for (const auto& r : history) known.insert(r.digest);
  if (options.exclude) known.insert(options.exclude->begin(), options.exclude->end());
  known.insert(canonical_digest(parent));

  SplitMix64 rng(rng_seed);
  std::vector<ArchitectureGraph> result;
  for (int attempt = 0; attempt < options.max_attempts &&
                        result.size() < static_cast<std::size_t>(n);
       ++attempt) {
    int steps = 1 + static_cast<int>(rng.below(3));
    ArchitectureGraph g = parent;
    bool ok = true;
    for (int s = 0; s < steps; ++s) {
      auto next = random_morph(g, rng);
      if (!next) {
        ok = false;
        break;
      }
      g = std::move(*next);
    }
    if (!ok) continue;
    std::string digest = canonical_digest(g);
    if (known.count(digest)) continue;
    known.insert(digest);
    result.push_back(std::move(g));
  }
  if (result.size() < static_cast<std::size_t>(n)) {
    throw ExhaustedSearchError("could not find " + std::to_string(n) +
                               " novel candidates in " +
                               std::to_string(options.max_attempts) + " attempts");
  }
  return result;
}

namespace {

double feature_distance(const GraphFeatures& a, const GraphFeatures& b) {
  double d = std::abs(static_cast<double>(a.node_count - b.node_count));
  long long pmax = std::max(a.param_count, b.param_count);
  if (pmax > 0) {
    d += std::abs(static_cast<double>(a.param_count - b.param_count)) /
         static_cast<double>(pmax);
  }
  double hist = 0;
  for (int i = 0; i < 4; ++i) {
    hist += std::abs(static_cast<double>(a.kernel_histogram[i] - b.kernel_histogram[i]));
  }
  return d + 0.5 * hist;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

}  // namespace

double acquisition_score(const std::vector<HistoryRecord>& history,
                         const ArchitectureGraph& candidate) {
  if (history.empty()) return 0.0;
  GraphFeatures cf = graph_features(candidate);

  double best = history.front().best_error;
  for (const auto& r : history) best = std::min(best, r.best_error);

  // Exact matches collapse the surrogate onto those records.
  double exact_sum = 0;
  int exact_n = 0;
  double weight_sum = 0, weighted_y = 0;
  for (const auto& r : history) {
    double d = feature_distance(r.features, cf);
    if (d == 0.0) {
      exact_sum += r.best_error;
      ++exact_n;
    } else {
      double w = 1.0 / d;
      weight_sum += w;
      weighted_y += w * r.best_error;
    }
  }
  double mean, variance;
  if (exact_n > 0) {
    mean = exact_sum / exact_n;
    variance = 0.0;
  } else {
    mean = weighted_y / weight_sum;
    double acc = 0;
    for (const auto& r : history) {
      double d = feature_distance(r.features, cf);
      double w = 1.0 / d;
      acc += w * (r.best_error - mean) * (r.best_error - mean);
    }
    variance = acc / weight_sum;
  }
  double sigma = std::sqrt(variance);
  double improvement = best - mean;
  if (sigma == 0.0) return std::max(0.0, improvement);
  double z = improvement / sigma;
  return improvement * normal_cdf(z) + sigma * normal_pdf(z);
}

ArchitectureGraph override_block_kernels(const ArchitectureGraph& graph,
                                         int kernel_size) {
  if (!valid_kernel(kernel_size)) {
    throw InapplicableActionError("kernel override must be one of 1,3,5,7");
  }
  ArchitectureGraph g = graph;
  for (const auto& n : graph.nodes()) {
    if (n.spec.kind == LayerKind::Convolution && n.id.size() > 5 &&
        n.id[0] == 'd' && n.id.substr(n.id.size() - 5) == "_conv") {
      g.mutable_spec(n.id).kernel_size = kernel_size;
    }
  }
  return g;
}

}  // namespace aiperf
