#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aiperf {

/// Spatial extent and channel count of one tensor. All dimensions >= 1.
struct TensorShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  bool operator==(const TensorShape&) const = default;
  long long elements() const {
    return 1LL * height * width * channels;
  }
};

std::string to_string(const TensorShape& s);               // "224x224x3"
TensorShape parse_tensor_shape(std::string_view text);     // throws ArchParseError

enum class LayerKind {
  Convolution,
  Dense,
  BatchNorm,
  ReLU,
  Add,
  MaxPool,
  GlobalAvgPool,
  Softmax,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(std::string_view name);  // throws ArchParseError

/// One layer. kernel_size/stride only apply to Convolution and MaxPool,
/// out_channels to Convolution and Dense, has_bias to Dense. Convolutions
/// never carry a bias.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int kernel_size = 0;
  int stride = 0;
  int out_channels = 0;
  bool has_bias = false;

  static LayerSpec convolution(int kernel_size, int stride, int out_channels);
  static LayerSpec dense(int out_channels, bool bias = true);
  static LayerSpec batch_norm();
  static LayerSpec relu();
  static LayerSpec add();
  static LayerSpec max_pool(int kernel_size, int stride);
  static LayerSpec global_avg_pool();
  static LayerSpec softmax();

  bool operator==(const LayerSpec&) const = default;
};

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatchError : GraphError {
  std::string node_id;
  ShapeMismatchError(std::string node, const std::string& what)
      : GraphError(what), node_id(std::move(node)) {}
};
struct DanglingNodeError : GraphError {
  using GraphError::GraphError;
};
struct InvalidInputError : GraphError {
  using GraphError::GraphError;
};
struct ArchParseError : GraphError {
  using GraphError::GraphError;
};

struct GraphNode {
  std::string id;
  LayerSpec spec;
};

/// Directed acyclic graph of layers with a single tensor input. The graph is
/// a symbolic object: no weights, no numerics, just structure and shapes.
/// Immutable by convention once built; morphs copy and edit.
class ArchitectureGraph {
 public:
  ArchitectureGraph() = default;
  explicit ArchitectureGraph(TensorShape input) : input_shape_(input) {}

  const TensorShape& input_shape() const { return input_shape_; }
  void set_input_shape(TensorShape s) { input_shape_ = s; }

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  bool has_node(const std::string& id) const;
  const GraphNode& node(const std::string& id) const;
  LayerSpec& mutable_spec(const std::string& id);

  const std::vector<std::string>& predecessors(const std::string& id) const;
  std::vector<std::string> successors(const std::string& id) const;  // sorted by id

  /// Appends a node. Predecessors must already exist (insertion builds in
  /// topological order naturally; surgery helpers below relax this).
  void add_node(std::string id, LayerSpec spec, std::vector<std::string> preds);

  /// Redirects the edge old_pred -> node to new_pred -> node.
  void replace_predecessor(const std::string& node_id, const std::string& old_pred,
                           const std::string& new_pred);

  std::string source_id() const;  // unique node with no predecessors
  std::string sink_id() const;    // unique node with no successors

  /// Topological order, ties broken by node id. Throws GraphError on cycles.
  std::vector<std::string> topo_order() const;

  /// Checks all structural invariants: unique ids, acyclic, one source, one
  /// sink of kind Softmax, Add nodes have exactly two predecessors, all
  /// other nodes exactly one (the source has none).
  void validate() const;

  /// Canonical line-oriented serialization, nodes in topological order.
  /// Format: header "input HxWxC", then one node per line:
  ///   <id> <kind> [k=..] [s=..] [c=..] [bias=0|1] <- <pred>[,<pred>]
  /// The source node lists the literal predecessor "input".
  std::string to_text() const;
  static ArchitectureGraph from_text(std::string_view text);

  void save(const std::filesystem::path& file) const;
  static ArchitectureGraph load(const std::filesystem::path& file);

  /// Unused node id with the given prefix, stable for a given graph.
  std::string fresh_id(const std::string& prefix) const;

 private:
  TensorShape input_shape_;
  std::vector<GraphNode> nodes_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::string>> preds_;
};

/// node id -> (input shape, output shape). Convolution/MaxPool use "same"
/// spatial padding: H_o = ceil(H_i / stride), W_o = ceil(W_i / stride).
using ShapeMap = std::map<std::string, std::pair<TensorShape, TensorShape>>;

ShapeMap infer_shapes(const ArchitectureGraph& graph);

/// Canonical ResNet-50 v1: 7x7/2 conv, BN, ReLU, 3x3/2 max-pool, bottleneck
/// stages (3,4,6,3) with projection shortcuts and the downsampling stride on
/// the first 1x1 conv of each downsampling block, global average pool,
/// dense(num_classes) with bias, softmax.
ArchitectureGraph build_resnet50(TensorShape input, int num_classes);

/// Updatable parameters: conv K*K*Ci*Co (no bias), dense (Ci+1)*Co with bias
/// else Ci*Co, batch norm 2*Ci, everything else 0.
long long parameter_count(const ArchitectureGraph& graph);

/// Content hash (64-bit FNV-1a over the canonical serialization), printed as
/// 16 hex chars. Used as the dedup key for history and candidate buffers.
std::string canonical_digest(const ArchitectureGraph& graph);

}  // namespace aiperf
