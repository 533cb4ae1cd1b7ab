#include "aiperf/arch_graph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "aiperf/util.hpp"

namespace aiperf {

std::string to_string(const TensorShape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

TensorShape parse_tensor_shape(std::string_view text) {
  TensorShape s;
  char sep1 = 0, sep2 = 0;
  std::istringstream in{std::string(text)};
  if (!(in >> s.height >> sep1 >> s.width >> sep2 >> s.channels) || sep1 != 'x' ||
      sep2 != 'x' || s.height < 1 || s.width < 1 || s.channels < 1) {
    throw ArchParseError("bad tensor shape: '" + std::string(text) + "'");
  }
  return s;
}

namespace {

constexpr const char* kKindNames[] = {"Convolution", "Dense",   "BatchNorm",
                                      "ReLU",        "Add",     "MaxPool",
                                      "GlobalAvgPool", "Softmax"};

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

LayerKind layer_kind_from_name(std::string_view name) {
  for (int i = 0; i < 8; ++i) {
    if (name == kKindNames[i]) return static_cast<LayerKind>(i);
  }
  throw ArchParseError("unknown layer kind: '" + std::string(name) + "'");
}

LayerSpec LayerSpec::convolution(int kernel_size, int stride, int out_channels) {
  return {LayerKind::Convolution, kernel_size, stride, out_channels, false};
}
LayerSpec LayerSpec::dense(int out_channels, bool bias) {
  return {LayerKind::Dense, 0, 0, out_channels, bias};
}
LayerSpec LayerSpec::batch_norm() { return {LayerKind::BatchNorm, 0, 0, 0, false}; }
LayerSpec LayerSpec::relu() { return {LayerKind::ReLU, 0, 0, 0, false}; }
LayerSpec LayerSpec::add() { return {LayerKind::Add, 0, 0, 0, false}; }
LayerSpec LayerSpec::max_pool(int kernel_size, int stride) {
  return {LayerKind::MaxPool, kernel_size, stride, 0, false};
}
LayerSpec LayerSpec::global_avg_pool() {
  return {LayerKind::GlobalAvgPool, 0, 0, 0, false};
}
LayerSpec LayerSpec::softmax() { return {LayerKind::Softmax, 0, 0, 0, false}; }

bool ArchitectureGraph::has_node(const std::string& id) const {
  return index_.count(id) != 0;
}

const GraphNode& ArchitectureGraph::node(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("no such node: " + id);
  return nodes_[it->second];
}

LayerSpec& ArchitectureGraph::mutable_spec(const std::string& id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("no such node: " + id);
  return nodes_[it->second].spec;
}

const std::vector<std::string>& ArchitectureGraph::predecessors(
    const std::string& id) const {
  auto it = preds_.find(id);
  if (it == preds_.end()) throw GraphError("no such node: " + id);
  return it->second;
}

std::vector<std::string> ArchitectureGraph::successors(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& [nid, ps] : preds_) {
    if (std::find(ps.begin(), ps.end(), id) != ps.end()) out.push_back(nid);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ArchitectureGraph::add_node(std::string id, LayerSpec spec,
                                 std::vector<std::string> preds) {
  if (id.empty() || id == "input") throw GraphError("bad node id: '" + id + "'");
  if (index_.count(id)) throw GraphError("duplicate node id: " + id);
  index_[id] = nodes_.size();
  nodes_.push_back({id, spec});
  preds_[std::move(id)] = std::move(preds);
}

void ArchitectureGraph::replace_predecessor(const std::string& node_id,
                                            const std::string& old_pred,
                                            const std::string& new_pred) {
  auto it = preds_.find(node_id);
  if (it == preds_.end()) throw GraphError("no such node: " + node_id);
  const std::string old_value = old_pred;  // callers may pass a reference into the list
  bool found = false;
  for (auto& p : it->second) {
    if (p == old_value) {
      p = new_pred;
      found = true;
    }
  }
  if (!found) {
    throw GraphError("edge " + old_value + " -> " + node_id + " does not exist");
  }
}

std::string ArchitectureGraph::source_id() const {
  std::string found;
  for (const auto& n : nodes_) {
    if (predecessors(n.id).empty()) {
      if (!found.empty()) {
        throw DanglingNodeError("unreachable node: " + n.id +
                                " (second source besides " + found + ")");
      }
      found = n.id;
    }
  }
  if (found.empty()) throw GraphError("graph has no source node");
  return found;
}

std::string ArchitectureGraph::sink_id() const {
  std::set<std::string> has_successor;
  for (const auto& [nid, ps] : preds_) {
    for (const auto& p : ps) has_successor.insert(p);
  }
  std::string found;
  for (const auto& n : nodes_) {
    if (!has_successor.count(n.id)) {
      if (!found.empty()) {
        throw GraphError("graph has more than one sink: " + found + ", " + n.id);
      }
      found = n.id;
    }
  }
  if (found.empty()) throw GraphError("graph has no sink node");
  return found;
}

std::vector<std::string> ArchitectureGraph::topo_order() const {
  std::map<std::string, int> remaining;
  for (const auto& n : nodes_) remaining[n.id] = static_cast<int>(predecessors(n.id).size());
  std::set<std::string> ready;
  for (const auto& [id, deg] : remaining) {
    if (deg == 0) ready.insert(id);
  }
  std::map<std::string, std::vector<std::string>> succs;
  for (const auto& [nid, ps] : preds_) {
    for (const auto& p : ps) succs[p].push_back(nid);
  }
  std::vector<std::string> order;
  order.reserve(nodes_.size());
  while (!ready.empty()) {
    std::string id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (const auto& s : succs[id]) {
      if (--remaining[s] == 0) ready.insert(s);
    }
  }
  if (order.size() != nodes_.size()) throw GraphError("graph contains a cycle");
  return order;
}

void ArchitectureGraph::validate() const {
  if (nodes_.empty()) throw GraphError("graph is empty");
  if (input_shape_.height < 1 || input_shape_.width < 1 || input_shape_.channels < 1) {
    throw GraphError("input shape not set");
  }
  for (const auto& n : nodes_) {
    const auto& ps = predecessors(n.id);
    for (const auto& p : ps) {
      if (!has_node(p)) throw GraphError("node " + n.id + " references missing " + p);
      if (p == n.id) throw GraphError("self loop at " + n.id);
    }
    std::size_t expected = n.spec.kind == LayerKind::Add ? 2 : 1;
    bool is_conv_pool =
        n.spec.kind == LayerKind::Convolution || n.spec.kind == LayerKind::MaxPool;
    if (is_conv_pool && (n.spec.kernel_size < 1 || n.spec.stride < 1)) {
      throw GraphError("node " + n.id + " needs kernel_size and stride");
    }
    if (!is_conv_pool && (n.spec.kernel_size != 0 || n.spec.stride != 0)) {
      throw GraphError("node " + n.id + " must not set kernel_size/stride");
    }
    bool has_channels =
        n.spec.kind == LayerKind::Convolution || n.spec.kind == LayerKind::Dense;
    if (has_channels && n.spec.out_channels < 1) {
      throw GraphError("node " + n.id + " needs out_channels");
    }
    if (!has_channels && n.spec.out_channels != 0) {
      throw GraphError("node " + n.id + " must not set out_channels");
    }
    if (n.spec.has_bias && n.spec.kind != LayerKind::Dense) {
      throw GraphError("only dense layers carry a bias (node " + n.id + ")");
    }
    if (!ps.empty() && ps.size() != expected) {
      throw GraphError("node " + n.id + " has " + std::to_string(ps.size()) +
                       " predecessors, expected " + std::to_string(expected));
    }
    if (ps.empty() && n.spec.kind == LayerKind::Add) {
      throw GraphError("Add node " + n.id + " cannot be the source");
    }
  }
  source_id();  // exactly one source; extra sources reported as dangling
  topo_order();
  std::string sink = sink_id();
  if (node(sink).spec.kind != LayerKind::Softmax) {
    throw GraphError("sink " + sink + " is not a Softmax layer");
  }
}

std::string ArchitectureGraph::to_text() const {
  std::string out = "input " + to_string(input_shape_) + "\n";
  for (const auto& id : topo_order()) {
    const auto& n = node(id);
    out += id;
    out += ' ';
    out += layer_kind_name(n.spec.kind);
    if (n.spec.kind == LayerKind::Convolution || n.spec.kind == LayerKind::MaxPool) {
      out += " k=" + std::to_string(n.spec.kernel_size);
      out += " s=" + std::to_string(n.spec.stride);
    }
    if (n.spec.kind == LayerKind::Convolution || n.spec.kind == LayerKind::Dense) {
      out += " c=" + std::to_string(n.spec.out_channels);
    }
    if (n.spec.kind == LayerKind::Dense) {
      out += n.spec.has_bias ? " bias=1" : " bias=0";
    }
    out += " <- ";
    const auto& ps = predecessors(id);
    if (ps.empty()) {
      out += "input";
    } else {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (i) out += ',';
        out += ps[i];
      }
    }
    out += '\n';
  }
  return out;
}

ArchitectureGraph ArchitectureGraph::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  ArchitectureGraph g;
  bool have_input = false;
  // add_node requires existing predecessors; buffer and insert in file order,
  // which to_text guarantees is topological.
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "input") {
      std::string shape;
      ls >> shape;
      g.set_input_shape(parse_tensor_shape(shape));
      have_input = true;
      continue;
    }
    if (!have_input) throw ArchParseError("node line before input header: " + line);
    std::string kind_name;
    if (!(ls >> kind_name)) throw ArchParseError("missing layer kind: " + line);
    LayerSpec spec;
    spec.kind = layer_kind_from_name(kind_name);
    std::string tok;
    std::vector<std::string> preds;
    bool saw_arrow = false;
    while (ls >> tok) {
      if (tok == "<-") {
        saw_arrow = true;
        continue;
      }
      if (!saw_arrow) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw ArchParseError("bad attribute: " + tok);
        std::string key = tok.substr(0, eq);
        int value = 0;
        try {
          value = std::stoi(tok.substr(eq + 1));
        } catch (const std::exception&) {
          throw ArchParseError("bad attribute value: " + tok);
        }
        if (key == "k") spec.kernel_size = value;
        else if (key == "s") spec.stride = value;
        else if (key == "c") spec.out_channels = value;
        else if (key == "bias") spec.has_bias = value != 0;
        else throw ArchParseError("unknown attribute: " + tok);
      } else {
        std::istringstream preds_in(tok);
        std::string p;
        while (std::getline(preds_in, p, ',')) {
          if (p != "input") preds.push_back(p);
        }
      }
    }
    if (!saw_arrow) throw ArchParseError("missing '<-' in line: " + line);
    g.add_node(first, spec, std::move(preds));
  }
  if (!have_input) throw ArchParseError("missing input header");
  g.validate();
  return g;
}

void ArchitectureGraph::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw GraphError("cannot write " + file.string());
  out << to_text();
}

ArchitectureGraph ArchitectureGraph::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ArchParseError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string ArchitectureGraph::fresh_id(const std::string& prefix) const {
  for (std::size_t i = nodes_.size();; ++i) {
    std::string candidate = prefix + std::to_string(i);
    if (!index_.count(candidate)) return candidate;
  }
}

ShapeMap infer_shapes(const ArchitectureGraph& graph) {
  graph.validate();
  ShapeMap shapes;
  for (const auto& id : graph.topo_order()) {
    const auto& n = graph.node(id);
    const auto& ps = graph.predecessors(id);
    TensorShape in;
    if (ps.empty()) {
      in = graph.input_shape();
    } else if (n.spec.kind == LayerKind::Add) {
      const TensorShape& a = shapes.at(ps[0]).second;
      const TensorShape& b = shapes.at(ps[1]).second;
      if (!(a == b)) {
        throw ShapeMismatchError(
            id, "Add node " + id + " branches disagree: " + to_string(a) + " vs " +
                    to_string(b));
      }
      in = a;
    } else {
      in = shapes.at(ps[0]).second;
    }
    TensorShape out = in;
    switch (n.spec.kind) {
      case LayerKind::Convolution:
        out.height = ceil_div(in.height, n.spec.stride);
        out.width = ceil_div(in.width, n.spec.stride);
        out.channels = n.spec.out_channels;
        break;
      case LayerKind::MaxPool:
        out.height = ceil_div(in.height, n.spec.stride);
        out.width = ceil_div(in.width, n.spec.stride);
        break;
      case LayerKind::Dense:
        out = {1, 1, n.spec.out_channels};
        break;
      case LayerKind::GlobalAvgPool:
        out = {1, 1, in.channels};
        break;
      case LayerKind::BatchNorm:
      case LayerKind::ReLU:
      case LayerKind::Add:
      case LayerKind::Softmax:
        break;
    }
    shapes[id] = {in, out};
  }
  return shapes;
}

ArchitectureGraph build_resnet50(TensorShape input, int num_classes) {
  if (input.height < 32 || input.width < 32) {
    throw InvalidInputError("input " + to_string(input) +
                            " too small: bottleneck downsampling degenerates below 32x32");
  }
  if (num_classes < 1) throw InvalidInputError("num_classes must be >= 1");

  ArchitectureGraph g(input);
  g.add_node("conv1", LayerSpec::convolution(7, 2, 64), {});
  g.add_node("bn1", LayerSpec::batch_norm(), {"conv1"});
  g.add_node("relu1", LayerSpec::relu(), {"bn1"});
  g.add_node("pool1", LayerSpec::max_pool(3, 2), {"relu1"});

  struct Stage {
    int blocks;
    int mid;
    int out;
    int stride;
  };
  const Stage stages[] = {{3, 64, 256, 1}, {4, 128, 512, 2}, {6, 256, 1024, 2},
                          {3, 512, 2048, 2}};

  std::string prev = "pool1";
  for (int s = 0; s < 4; ++s) {
    const Stage& st = stages[s];
    for (int b = 0; b < st.blocks; ++b) {
      std::string base = "s" + std::to_string(s + 2) + "b" + std::to_string(b + 1);
      int stride = b == 0 ? st.stride : 1;
      std::string shortcut = prev;
      if (b == 0) {
        g.add_node(base + "_proj", LayerSpec::convolution(1, stride, st.out), {prev});
        g.add_node(base + "_projbn", LayerSpec::batch_norm(), {base + "_proj"});
        shortcut = base + "_projbn";
      }
      g.add_node(base + "_conv1", LayerSpec::convolution(1, stride, st.mid), {prev});
      g.add_node(base + "_bn1", LayerSpec::batch_norm(), {base + "_conv1"});
      g.add_node(base + "_relu1", LayerSpec::relu(), {base + "_bn1"});
      g.add_node(base + "_conv2", LayerSpec::convolution(3, 1, st.mid),
                 {base + "_relu1"});
      g.add_node(base + "_bn2", LayerSpec::batch_norm(), {base + "_conv2"});
      g.add_node(base + "_relu2", LayerSpec::relu(), {base + "_bn2"});
      g.add_node(base + "_conv3", LayerSpec::convolution(1, 1, st.out),
                 {base + "_relu2"});
      g.add_node(base + "_bn3", LayerSpec::batch_norm(), {base + "_conv3"});
      g.add_node(base + "_add", LayerSpec::add(), {base + "_bn3", shortcut});
      g.add_node(base + "_out", LayerSpec::relu(), {base + "_add"});
      prev = base + "_out";
    }
  }

  g.add_node("gap", LayerSpec::global_avg_pool(), {prev});
  g.add_node("fc", LayerSpec::dense(num_classes, true), {"gap"});
  g.add_node("prob", LayerSpec::softmax(), {"fc"});
  g.validate();
  return g;
}

long long parameter_count(const ArchitectureGraph& graph) {
  ShapeMap shapes = infer_shapes(graph);
  long long total = 0;
  for (const auto& n : graph.nodes()) {
    const auto& [in, out] = shapes.at(n.id);
    switch (n.spec.kind) {
      case LayerKind::Convolution:
        total += 1LL * n.spec.kernel_size * n.spec.kernel_size * in.channels *
                 n.spec.out_channels;
        break;
      case LayerKind::Dense: {
        long long features = in.elements();
        total += (features + (n.spec.has_bias ? 1 : 0)) * n.spec.out_channels;
        break;
      }
      case LayerKind::BatchNorm:
        total += 2LL * in.channels;  // scale and shift
        break;
      default:
        break;
    }
  }
  return total;
}

std::string canonical_digest(const ArchitectureGraph& graph) {
  u64 h = fnv1a64(graph.to_text());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace aiperf
