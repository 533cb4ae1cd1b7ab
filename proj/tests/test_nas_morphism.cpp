#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "aiperf/nas_morphism.hpp"

using namespace aiperf;

namespace {

HistoryRecord make_record(const ArchitectureGraph& g, double error,
                          HyperParams hp = {448, 3}) {
  HistoryRecord r;
  r.digest = canonical_digest(g);
  r.hyperparams = hp;
  r.best_error = error;
  r.per_image_ops = count_image_fp(g) + count_image_bp(g);
  r.epochs_run = 10;
  r.wall_seconds = 100;
  r.features = graph_features(g);
  return r;
}

u64 weighted_fp(const ArchitectureGraph& g) {
  return static_cast<u64>(count_image_fp(g).weighted_total());
}

int count_kind(const ArchitectureGraph& g, LayerKind kind) {
  int n = 0;
  for (const auto& node : g.nodes()) {
    if (node.spec.kind == kind) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("deepen inserts exactly one conv+bn+relu block") {
  auto seed = build_resnet50({224, 224, 3}, 1000);
  auto child = apply_morph(seed, {MorphKind::DeepenBlock, "s2b1_out", 3});
  CHECK(child.nodes().size() == seed.nodes().size() + 3);
  CHECK(child.input_shape() == seed.input_shape());
  auto shapes = infer_shapes(child);
  CHECK(shapes.at(child.sink_id()).second.channels == 1000);
  CHECK(count_kind(child, LayerKind::Convolution) ==
        count_kind(seed, LayerKind::Convolution) + 1);
  CHECK(weighted_fp(child) > weighted_fp(seed));
}

TEST_CASE("widen doubles a conv and repairs downstream adds") {
  auto seed = build_resnet50({224, 224, 3}, 1000);

  SUBCASE("stem conv is absorbed by downstream convs") {
    auto child = apply_morph(seed, {MorphKind::Widen, "conv1", 2});
    CHECK(child.node("conv1").spec.out_channels == 128);
    CHECK(weighted_fp(child) > weighted_fp(seed));
    CHECK(infer_shapes(child).at(child.sink_id()).second.channels == 1000);
  }
  SUBCASE("widening a block expansion conv forces a projection repair") {
    auto child = apply_morph(seed, {MorphKind::Widen, "s2b1_conv3", 2});
    CHECK(child.node("s2b1_conv3").spec.out_channels == 512);
    CHECK(child.nodes().size() == seed.nodes().size() + 1);  // one 1x1 projection
    CHECK(weighted_fp(child) > weighted_fp(seed));
    CHECK_NOTHROW(infer_shapes(child));
  }
  SUBCASE("widening before a shortcut edge repairs the next block's add") {
    auto child = apply_morph(seed, {MorphKind::Widen, "s3b2_conv3", 2});
    CHECK_NOTHROW(infer_shapes(child));
    CHECK(weighted_fp(child) > weighted_fp(seed));
  }
}

TEST_CASE("kernel change scales the layer count by the squared kernel ratio") {
  auto seed = build_resnet50({224, 224, 3}, 1000);
  auto shapes = infer_shapes(seed);
  auto [in, out] = shapes.at("s2b1_conv2");
  OpCount before = count_layer_fp(seed.node("s2b1_conv2").spec, in, out);

  auto child = apply_morph(seed, {MorphKind::ChangeKernel, "s2b1_conv2", 5});
  OpCount after = count_layer_fp(child.node("s2b1_conv2").spec, in, out);
  CHECK(after.macc * 9 == before.macc * 25);
  CHECK(child.nodes().size() == seed.nodes().size());
}

TEST_CASE("skip joins two points through a new add") {
  auto seed = build_resnet50({224, 224, 3}, 1000);

  SUBCASE("shape-compatible endpoints need no projection") {
    auto child = apply_morph(seed, {MorphKind::AddSkip, "s2b1_bn1", 2});
    CHECK(count_kind(child, LayerKind::Add) == count_kind(seed, LayerKind::Add) + 1);
    CHECK_NOTHROW(infer_shapes(child));
    CHECK(infer_shapes(child).at(child.sink_id()).second.channels == 1000);
  }
  SUBCASE("channel-mismatched endpoints get a projection conv") {
    auto child = apply_morph(seed, {MorphKind::AddSkip, "s2b1_relu2", 2});
    CHECK(count_kind(child, LayerKind::Add) == count_kind(seed, LayerKind::Add) + 1);
    CHECK(count_kind(child, LayerKind::Convolution) ==
          count_kind(seed, LayerKind::Convolution) + 1);
    CHECK_NOTHROW(infer_shapes(child));
  }
}

TEST_CASE("inapplicable actions are rejected") {
  auto seed = build_resnet50({224, 224, 3}, 1000);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::Widen, "relu1", 2}),
                  InapplicableActionError);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::ChangeKernel, "pool1", 5}),
                  InapplicableActionError);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::ChangeKernel, "conv1", 4}),
                  InapplicableActionError);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::DeepenBlock, "prob", 3}),
                  InapplicableActionError);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::AddSkip, "gap", 5}),
                  InapplicableActionError);
  CHECK_THROWS_AS(apply_morph(seed, {MorphKind::Widen, "nosuch", 2}),
                  InapplicableActionError);
}

TEST_CASE("morph closure over random sequences") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  int seed_width = infer_shapes(seed).at(seed.sink_id()).second.channels;
  SplitMix64 rng(99);
  for (int i = 0; i < 100; ++i) {
    std::vector<HistoryRecord> empty;
    auto cands = propose_candidates(empty, seed, 1, rng.next());
    const auto& g = cands[0];
    CHECK_NOTHROW(g.validate());
    auto shapes = infer_shapes(g);
    CHECK(g.input_shape() == seed.input_shape());
    CHECK(shapes.at(g.sink_id()).second.channels == seed_width);
  }
}

TEST_CASE("propose returns distinct novel candidates deterministically") {
  auto seed = build_resnet50({224, 224, 3}, 1000);
  std::vector<HistoryRecord> empty;

  auto a = propose_candidates(empty, seed, 4, 7);
  CHECK(a.size() == 4);
  std::set<std::string> digests;
  for (const auto& g : a) digests.insert(canonical_digest(g));
  CHECK(digests.size() == 4);
  CHECK(digests.count(canonical_digest(seed)) == 0);

  auto b = propose_candidates(empty, seed, 4, 7);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(canonical_digest(a[i]) == canonical_digest(b[i]));
  }

  auto c = propose_candidates(empty, seed, 4, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < 4; ++i) {
    if (canonical_digest(a[i]) != canonical_digest(c[i])) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("candidates derive from the best history record") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  // Parent with a marker node that only appears in its descendants.
  auto parent = apply_morph(seed, {MorphKind::DeepenBlock, "s4b1_out", 5});
  std::string marker;
  for (const auto& n : parent.nodes()) {
    if (n.id[0] == 'd' && n.spec.kind == LayerKind::Convolution) marker = n.id;
  }
  REQUIRE(!marker.empty());

  struct MemResolver : GraphResolver {
    const ArchitectureGraph* g;
    std::optional<ArchitectureGraph> resolve(const HistoryRecord&) const override {
      return *g;
    }
  } resolver;
  resolver.g = &parent;

  std::vector<HistoryRecord> history{make_record(parent, 0.5)};
  ProposeOptions opts;
  opts.resolver = &resolver;
  auto cands = propose_candidates(history, seed, 3, 11, opts);
  for (const auto& g : cands) CHECK(g.has_node(marker));
}

TEST_CASE("history digests are excluded from proposals") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  std::vector<HistoryRecord> empty;
  auto first = propose_candidates(empty, seed, 2, 5);

  struct SeedResolver : GraphResolver {
    const ArchitectureGraph* g;
    std::optional<ArchitectureGraph> resolve(const HistoryRecord&) const override {
      return *g;
    }
  } resolver;
  resolver.g = &seed;

  std::vector<HistoryRecord> history;
  for (const auto& g : first) history.push_back(make_record(g, 0.5));
  history.front().best_error = 0.4;  // parent = first[0], resolver returns seed
  ProposeOptions opts;
  opts.resolver = &resolver;
  auto second = propose_candidates(history, seed, 4, 5, opts);
  for (const auto& g : second) {
    for (const auto& h : history) CHECK(canonical_digest(g) != h.digest);
  }
}

TEST_CASE("exhausted search throws") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  std::vector<HistoryRecord> empty;
  ProposeOptions opts;
  opts.max_attempts = 3;
  CHECK_THROWS_AS(propose_candidates(empty, seed, 50, 1, opts), ExhaustedSearchError);
}

TEST_CASE("acquisition on empty history is zero") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  std::vector<HistoryRecord> empty;
  CHECK(acquisition_score(empty, seed) == 0.0);
}

TEST_CASE("acquisition degenerates on an exact match") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  auto other = apply_morph(seed, {MorphKind::DeepenBlock, "conv1", 3});

  std::vector<HistoryRecord> history{make_record(seed, 0.3), make_record(other, 0.6)};
  // The best record scored against itself: variance 0, improvement 0.
  CHECK(acquisition_score(history, seed) == 0.0);
  // An exact match of a worse record: max(0, best - record) = 0 as well.
  CHECK(acquisition_score(history, other) == 0.0);
}

TEST_CASE("acquisition matches a brute-force evaluation of the stated surrogate") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  auto near_good = apply_morph(seed, {MorphKind::DeepenBlock, "s2b1_out", 3});
  auto far = apply_morph(
      apply_morph(apply_morph(seed, {MorphKind::Widen, "s2b1_conv2", 2}),
                  {MorphKind::DeepenBlock, "s3b1_out", 5}),
      {MorphKind::AddSkip, "s2b2_bn1", 2});

  std::vector<HistoryRecord> history{
      make_record(seed, 0.2),
      make_record(apply_morph(seed, {MorphKind::ChangeKernel, "s2b1_conv2", 5}), 0.5),
      make_record(apply_morph(seed, {MorphKind::Widen, "conv1", 2}), 0.7),
  };

  // Brute force: the formula restated independently.
  auto brute = [&](const ArchitectureGraph& cand) {
    GraphFeatures cf = graph_features(cand);
    double best = 1.0;
    for (const auto& r : history) best = std::min(best, r.best_error);
    double wsum = 0, mean = 0;
    std::vector<double> dist;
    for (const auto& r : history) {
      double d = std::abs(double(r.features.node_count - cf.node_count));
      long long pmax = std::max(r.features.param_count, cf.param_count);
      d += std::abs(double(r.features.param_count - cf.param_count)) / double(pmax);
      double h = 0;
      for (int i = 0; i < 4; ++i) {
        h += std::abs(double(r.features.kernel_histogram[i] - cf.kernel_histogram[i]));
      }
      d += 0.5 * h;
      dist.push_back(d);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      wsum += 1.0 / dist[i];
      mean += history[i].best_error / dist[i];
    }
    mean /= wsum;
    double var = 0;
    for (std::size_t i = 0; i < history.size(); ++i) {
      var += (history[i].best_error - mean) * (history[i].best_error - mean) / dist[i];
    }
    var /= wsum;
    double sigma = std::sqrt(var);
    double imp = best - mean;
    if (sigma == 0) return std::max(0.0, imp);
    double z = imp / sigma;
    double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
    return imp * cdf + sigma * pdf;
  };

  CHECK(acquisition_score(history, near_good) ==
        doctest::Approx(brute(near_good)).epsilon(1e-12));
  CHECK(acquisition_score(history, far) == doctest::Approx(brute(far)).epsilon(1e-12));
  // The candidate nearer the low-error record scores at least as high.
  CHECK(acquisition_score(history, near_good) >= acquisition_score(history, far));
}

TEST_CASE("layer-adding morphs never decrease any op-count component") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  OpCount base = count_image_fp(seed);
  SplitMix64 rng(808);
  const auto& nodes = seed.nodes();
  int applied = 0;
  for (int i = 0; i < 60; ++i) {
    MorphAction a;
    a.kind = rng.below(2) == 0 ? MorphKind::DeepenBlock : MorphKind::AddSkip;
    a.target_node = nodes[rng.below(nodes.size())].id;
    a.parameter = a.kind == MorphKind::DeepenBlock ? 3 : 1 + (int)rng.below(4);
    try {
      OpCount grown = count_image_fp(apply_morph(seed, a));
      CHECK(grown.macc >= base.macc);
      CHECK(grown.add >= base.add);
      CHECK(grown.div >= base.div);
      CHECK(grown.comparison >= base.comparison);
      CHECK(grown.exp >= base.exp);
      ++applied;
    } catch (const InapplicableActionError&) {
    } catch (const ShapeRepairFailureError&) {
    }
  }
  CHECK(applied >= 30);
}

TEST_CASE("kernel override touches only deepen-inserted convs") {
  auto seed = build_resnet50({64, 64, 3}, 10);
  auto child = apply_morph(seed, {MorphKind::DeepenBlock, "s2b1_out", 3});
  auto overridden = override_block_kernels(child, 7);

  for (const auto& n : overridden.nodes()) {
    if (n.spec.kind != LayerKind::Convolution) continue;
    if (n.id[0] == 'd' && n.id.find("_conv") != std::string::npos) {
      CHECK(n.spec.kernel_size == 7);
    } else {
      CHECK(n.spec.kernel_size == seed.node(n.id).spec.kernel_size);
    }
  }
  CHECK(canonical_digest(override_block_kernels(seed, 7)) == canonical_digest(seed));
}
