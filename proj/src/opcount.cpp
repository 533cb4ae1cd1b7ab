#include "aiperf/opcount.hpp"

#include <limits>

namespace aiperf {

namespace {

u64 checked_mul(u64 a, u64 b) {
  if (a != 0 && b > std::numeric_limits<u64>::max() / a) {
    throw std::overflow_error("operation count overflows 64 bits");
  }
  return a * b;
}

}  // namespace

OpCount OpCount::scaled(u64 images) const {
  return {checked_mul(macc, images), checked_mul(add, images), checked_mul(div, images),
          checked_mul(comparison, images), checked_mul(exp, images)};
}

void validate(const DatasetDescriptor& data) {
  if (data.train_images < 1 || data.val_images < 1) {
    throw InvalidDatasetError("dataset image counts must be positive");
  }
  if (data.image_shape.height < 1 || data.image_shape.width < 1 ||
      data.image_shape.channels < 1) {
    throw InvalidDatasetError("dataset image shape must be positive");
  }
}

OpCount count_layer_fp(const LayerSpec& layer, const TensorShape& in,
                       const TensorShape& out) {
  OpCount c;
  u64 k2 = static_cast<u64>(layer.kernel_size) * layer.kernel_size;
  u64 in_elems = static_cast<u64>(in.elements());
  u64 out_elems = static_cast<u64>(out.elements());
  switch (layer.kind) {
    case LayerKind::Convolution:
      c.macc = k2 * in.channels * out_elems;
      break;
    case LayerKind::Dense:
      c.macc = in_elems * out.channels;
      break;
    case LayerKind::BatchNorm:
      c.macc = c.add = c.div = in_elems;
      break;
    case LayerKind::ReLU:
      c.comparison = out_elems;
      break;
    case LayerKind::Add:
      c.add = out_elems;
      break;
    case LayerKind::MaxPool:
      c.comparison = k2 * out_elems;
      break;
    case LayerKind::GlobalAvgPool:
      c.add = in_elems;
      c.div = in.channels;
      break;
    case LayerKind::Softmax:
      c.exp = c.add = c.div = out.channels;
      break;
    default:
      throw UnsupportedLayerError("unsupported layer kind");
  }
  return c;
}

OpCount count_layer_bp(const LayerSpec& layer, const TensorShape& in,
                       const TensorShape& out) {
  OpCount c;
  switch (layer.kind) {
    case LayerKind::Convolution: {
      u64 k2 = static_cast<u64>(layer.kernel_size) * layer.kernel_size;
      u64 gradients = 2 * k2 * in.channels * static_cast<u64>(out.elements());
      u64 update = k2 * in.channels * layer.out_channels;
      c.macc = gradients + update;
      break;
    }
    case LayerKind::Dense: {
      u64 features = static_cast<u64>(in.elements());
      u64 gradients = 2 * features * out.channels;
      u64 update = (features + (layer.has_bias ? 1 : 0)) * out.channels;
      c.macc = gradients + update;
      break;
    }
    case LayerKind::BatchNorm:
    case LayerKind::ReLU:
    case LayerKind::Add:
    case LayerKind::MaxPool:
    case LayerKind::GlobalAvgPool:
    case LayerKind::Softmax:
      break;  // ignorable in BP
    default:
      throw UnsupportedLayerError("unsupported layer kind");
  }
  return c;
}

namespace {

OpCount sum_over_nodes(const ArchitectureGraph& graph,
                       OpCount (*count)(const LayerSpec&, const TensorShape&,
                                        const TensorShape&)) {
  ShapeMap shapes = infer_shapes(graph);
  OpCount total;
  for (const auto& n : graph.nodes()) {
    const auto& [in, out] = shapes.at(n.id);
    total += count(n.spec, in, out);
  }
  return total;
}

}  // namespace

OpCount count_image_fp(const ArchitectureGraph& graph) {
  return sum_over_nodes(graph, count_layer_fp);
}

OpCount count_image_bp(const ArchitectureGraph& graph) {
  return sum_over_nodes(graph, count_layer_bp);
}

OpCount count_training_epoch(const ArchitectureGraph& graph,
                             const DatasetDescriptor& data) {
  validate(data);
  OpCount per_image = count_image_fp(graph) + count_image_bp(graph);
  return per_image.scaled(data.train_images);
}

OpCount count_validation_epoch(const ArchitectureGraph& graph,
                               const DatasetDescriptor& data) {
  validate(data);
  return count_image_fp(graph).scaled(data.val_images);
}

std::map<LayerKind, ClassCount> count_by_class(const ArchitectureGraph& graph) {
  ShapeMap shapes = infer_shapes(graph);
  std::map<LayerKind, ClassCount> classes;
  for (const auto& n : graph.nodes()) {
    const auto& [in, out] = shapes.at(n.id);
    ClassCount& c = classes[n.spec.kind];
    c.fp += count_layer_fp(n.spec, in, out);
    c.bp += count_layer_bp(n.spec, in, out);
  }
  return classes;
}

}  // namespace aiperf
