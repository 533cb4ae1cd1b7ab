#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "aiperf/arch_graph.hpp"
#include "aiperf/util.hpp"

using namespace aiperf;

namespace {

// Independent parameter oracle: flat per-layer enumeration of ResNet-50 v1,
// no graph machinery involved. conv K*K*Ci*Co, dense (Ci+1)*Co, BN 2*C.
long long resnet50_params_oracle(int num_classes) {
  long long conv = 7LL * 7 * 3 * 64;
  long long bn_channels = 64;
  struct Stage {
    int blocks, mid, out;
  };
  const Stage stages[] = {{3, 64, 256}, {4, 128, 512}, {6, 256, 1024}, {3, 512, 2048}};
  int cin = 64;
  for (const Stage& st : stages) {
    for (int b = 0; b < st.blocks; ++b) {
      if (b == 0) {
        conv += 1LL * cin * st.out;  // projection
        bn_channels += st.out;
      }
      conv += 1LL * cin * st.mid;
      conv += 9LL * st.mid * st.mid;
      conv += 1LL * st.mid * st.out;
      bn_channels += st.mid + st.mid + st.out;
      cin = st.out;
    }
  }
  long long dense = (2048LL + 1) * num_classes;
  return conv + dense + 2 * bn_channels;
}

ArchitectureGraph tiny_graph() {
  ArchitectureGraph g({8, 8, 3});
  g.add_node("c1", LayerSpec::convolution(3, 2, 4), {});
  g.add_node("r1", LayerSpec::relu(), {"c1"});
  g.add_node("gap", LayerSpec::global_avg_pool(), {"r1"});
  g.add_node("fc", LayerSpec::dense(5, true), {"gap"});
  g.add_node("sm", LayerSpec::softmax(), {"fc"});
  return g;
}

}  // namespace

TEST_CASE("shape inference follows the ceil-division same-padding rule") {
  ArchitectureGraph g({224, 224, 3});
  g.add_node("c", LayerSpec::convolution(1, 1, 3), {});
  g.add_node("sm", LayerSpec::softmax(), {"c"});
  auto shapes = infer_shapes(g);
  CHECK(shapes.at("c").second == TensorShape{224, 224, 3});

  // stride/kernel sweep against the rule computed inline
  SplitMix64 rng(11);
  for (int i = 0; i < 200; ++i) {
    int h = 1 + static_cast<int>(rng.below(300));
    int w = 1 + static_cast<int>(rng.below(300));
    int cch = 1 + static_cast<int>(rng.below(64));
    for (int stride : {1, 2}) {
      for (int kernel : {1, 3, 5, 7}) {
        ArchitectureGraph t({h, w, cch});
        t.add_node("c", LayerSpec::convolution(kernel, stride, 8), {});
        t.add_node("sm", LayerSpec::softmax(), {"c"});
        auto s = infer_shapes(t);
        CHECK(s.at("c").second.height == (h + stride - 1) / stride);
        CHECK(s.at("c").second.width == (w + stride - 1) / stride);
        CHECK(s.at("c").second.channels == 8);
      }
    }
  }
}

TEST_CASE("resnet50 stem shapes") {
  auto g = build_resnet50({224, 224, 3}, 1000);
  auto shapes = infer_shapes(g);
  CHECK(shapes.at("conv1").second == TensorShape{112, 112, 64});
  CHECK(shapes.at("pool1").second == TensorShape{56, 56, 64});
  CHECK(shapes.at("gap").first == TensorShape{7, 7, 2048});
  CHECK(shapes.at("gap").second == TensorShape{1, 1, 2048});
  CHECK(shapes.at("fc").first == TensorShape{1, 1, 2048});
  CHECK(shapes.at("fc").second == TensorShape{1, 1, 1000});
}

TEST_CASE("resnet50 structure: 53 convs, 53 batch norms, one dense layer") {
  auto g = build_resnet50({224, 224, 3}, 1000);
  int convs = 0, bns = 0, dense = 0, relus = 0, adds = 0;
  for (const auto& n : g.nodes()) {
    switch (n.spec.kind) {
      case LayerKind::Convolution: ++convs; break;
      case LayerKind::BatchNorm: ++bns; break;
      case LayerKind::Dense: ++dense; break;
      case LayerKind::ReLU: ++relus; break;
      case LayerKind::Add: ++adds; break;
      default: break;
    }
  }
  CHECK(convs == 53);
  CHECK(bns == 53);
  CHECK(dense == 1);
  CHECK(relus == 49);
  CHECK(adds == 16);
  CHECK(g.node(g.sink_id()).spec.kind == LayerKind::Softmax);
  CHECK_NOTHROW(g.validate());
  CHECK_NOTHROW(infer_shapes(g));
}

TEST_CASE("resnet50 parameter count matches the independent oracle") {
  auto g = build_resnet50({224, 224, 3}, 1000);
  long long oracle = resnet50_params_oracle(1000);
  CHECK(oracle == 25557032);  // frozen from the oracle itself
  CHECK(parameter_count(g) == oracle);
  CHECK(parameter_count(g) == doctest::Approx(2.556e7).epsilon(0.001));
}

TEST_CASE("parameter counts of single layers") {
  ArchitectureGraph d({1, 1, 2048});
  d.add_node("fc", LayerSpec::dense(1000, true), {});
  d.add_node("sm", LayerSpec::softmax(), {"fc"});
  CHECK(parameter_count(d) == 2049000);

  ArchitectureGraph c({5, 5, 1});
  c.add_node("c", LayerSpec::convolution(3, 1, 1), {});
  c.add_node("sm", LayerSpec::softmax(), {"c"});
  CHECK(parameter_count(c) == 9);
}

TEST_CASE("parameter count is additive over disjoint subgraphs") {
  // A chain split at the GAP boundary: head params + tail params == total.
  auto g = tiny_graph();
  long long total = parameter_count(g);

  ArchitectureGraph head({8, 8, 3});
  head.add_node("c1", LayerSpec::convolution(3, 2, 4), {});
  head.add_node("sm", LayerSpec::softmax(), {"c1"});

  ArchitectureGraph tail({1, 1, 4});
  tail.add_node("fc", LayerSpec::dense(5, true), {});
  tail.add_node("sm", LayerSpec::softmax(), {"fc"});

  CHECK(parameter_count(head) + parameter_count(tail) == total);
}

TEST_CASE("small input builds a valid graph with the requested classifier width") {
  auto g = build_resnet50({32, 32, 3}, 10);
  auto shapes = infer_shapes(g);
  CHECK(shapes.at(g.sink_id()).second.channels == 10);
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(build_resnet50({16, 224, 3}, 1000), InvalidInputError);
  CHECK_THROWS_AS(build_resnet50({224, 31, 3}, 1000), InvalidInputError);
  CHECK_THROWS_AS(build_resnet50({224, 224, 3}, 0), InvalidInputError);
}

TEST_CASE("add nodes with mismatched branches fail shape inference") {
  ArchitectureGraph g({8, 8, 3});
  g.add_node("a", LayerSpec::convolution(1, 1, 4), {});
  g.add_node("b", LayerSpec::convolution(1, 2, 4), {"a"});
  g.add_node("sum", LayerSpec::add(), {"a", "b"});
  g.add_node("sm", LayerSpec::softmax(), {"sum"});
  CHECK_THROWS_AS(infer_shapes(g), ShapeMismatchError);
}

TEST_CASE("unreachable nodes are reported as dangling") {
  ArchitectureGraph g({8, 8, 3});
  g.add_node("c", LayerSpec::convolution(1, 1, 4), {});
  g.add_node("sm", LayerSpec::softmax(), {"c"});
  g.add_node("orphan", LayerSpec::relu(), {});
  CHECK_THROWS_AS(infer_shapes(g), DanglingNodeError);
}

TEST_CASE("digest is deterministic and content sensitive") {
  auto g = tiny_graph();
  CHECK(canonical_digest(g) == canonical_digest(g));

  auto g2 = tiny_graph();
  CHECK(canonical_digest(g) == canonical_digest(g2));

  ArchitectureGraph extra = tiny_graph();
  auto succ = extra.successors("r1");
  extra.add_node("r2", LayerSpec::relu(), {"r1"});
  for (const auto& s : succ) extra.replace_predecessor(s, "r1", "r2");
  CHECK(canonical_digest(extra) != canonical_digest(g));

  CHECK(canonical_digest(build_resnet50({224, 224, 3}, 1000)) ==
        canonical_digest(build_resnet50({224, 224, 3}, 1000)));
}

TEST_CASE("shape inference is deterministic") {
  auto g = build_resnet50({224, 224, 3}, 1000);
  CHECK(infer_shapes(g) == infer_shapes(g));
}

TEST_CASE("serialization round-trips through text") {
  auto g = build_resnet50({224, 224, 3}, 1000);
  auto loaded = ArchitectureGraph::from_text(g.to_text());
  CHECK(canonical_digest(loaded) == canonical_digest(g));
  CHECK(loaded.nodes().size() == g.nodes().size());
  CHECK(loaded.to_text() == g.to_text());

  auto t = tiny_graph();
  CHECK(ArchitectureGraph::from_text(t.to_text()).to_text() == t.to_text());
}

TEST_CASE("parser rejects malformed text") {
  CHECK_THROWS_AS(ArchitectureGraph::from_text("c1 Convolution k=3 s=1 c=4 <- input\n"),
                  ArchParseError);  // missing input header
  CHECK_THROWS_AS(ArchitectureGraph::from_text("input 8x8x3\nc1 Warp <- input\n"),
                  ArchParseError);  // unknown kind
  CHECK_THROWS_AS(ArchitectureGraph::from_text("input 8x8x3\nc1 ReLU\n"),
                  ArchParseError);  // missing arrow
  CHECK_THROWS_AS(parse_tensor_shape("224by224"), ArchParseError);
}
