#pragma once

#include <map>
#include <stdexcept>

#include "aiperf/arch_graph.hpp"
#include "aiperf/util.hpp"

namespace aiperf {

/// Dimensionless multipliers applied when collapsing an OpCount to a single
/// scalar: one MACC counts as 2 operations, add/subtract/multiply/comparison
/// as 1, divide/sqrt as 4, special functions (exp) as 8.
struct OpWeights {
  int macc = 2;
  int add_sub_mul_cmp = 1;
  int div_sqrt = 4;
  int special = 8;

  bool operator==(const OpWeights&) const = default;
};

/// Per-operation-class tallies. Component-wise additive; the weighted total
/// is computed in 128-bit arithmetic so cluster-scale sums cannot silently
/// overflow.
struct OpCount {
  u64 macc = 0;
  u64 add = 0;
  u64 div = 0;
  u64 comparison = 0;
  u64 exp = 0;

  u128 weighted_total(const OpWeights& w = {}) const {
    return static_cast<u128>(w.macc) * macc +
           static_cast<u128>(w.add_sub_mul_cmp) * (add + comparison) +
           static_cast<u128>(w.div_sqrt) * div + static_cast<u128>(w.special) * exp;
  }

  OpCount& operator+=(const OpCount& o) {
    macc += o.macc;
    add += o.add;
    div += o.div;
    comparison += o.comparison;
    exp += o.exp;
    return *this;
  }
  friend OpCount operator+(OpCount a, const OpCount& b) { return a += b; }

  /// Component-wise multiplication by an image count, overflow-checked.
  OpCount scaled(u64 images) const;

  bool operator==(const OpCount&) const = default;
};

struct UnsupportedLayerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetDescriptor {
  u64 train_images = 1281167;
  u64 val_images = 50000;
  TensorShape image_shape{224, 224, 3};

  static DatasetDescriptor imagenet() { return {}; }
  bool operator==(const DatasetDescriptor&) const = default;
};

void validate(const DatasetDescriptor& data);  // throws InvalidDatasetError

/// Forward-pass operation count of one layer, per image:
///   Convolution   MACC = K*K*Ci*Ho*Wo*Co
///   Dense         MACC = Ci*Co (Ci = flattened input features)
///   BatchNorm     MACC = Add = Div = Hi*Wi*Ci
///   ReLU          Comparison = Ho*Wo*Co
///   Add           Add = Ho*Wo*Co
///   MaxPool       Comparison = K*K*Ho*Wo*Co
///   GlobalAvgPool Add = Hi*Wi*Ci, Div = Ci
///   Softmax       Exp = Add = Div = Co
OpCount count_layer_fp(const LayerSpec& layer, const TensorShape& in,
                       const TensorShape& out);

/// Backward-pass operation count of one layer, per image. Includes the
/// parameter update (one MACC per parameter):
///   Convolution   MACC = 2*(K*K*Ci*Ho*Wo*Co) + K*K*Ci*Co
///   Dense         MACC = 2*Ci*Co + (Ci+1)*Co
/// All remaining layer kinds cost nothing in BP.
OpCount count_layer_bp(const LayerSpec& layer, const TensorShape& in,
                       const TensorShape& out);

OpCount count_image_fp(const ArchitectureGraph& graph);
OpCount count_image_bp(const ArchitectureGraph& graph);

/// (FP + BP) per image times train_images. Per-image accounting: independent
/// of batch size.
OpCount count_training_epoch(const ArchitectureGraph& graph,
                             const DatasetDescriptor& data);

/// FP per image times val_images; validation runs no backward pass.
OpCount count_validation_epoch(const ArchitectureGraph& graph,
                               const DatasetDescriptor& data);

struct ClassCount {
  OpCount fp;
  OpCount bp;
};

/// Per-layer-class FP/BP subtotals, one entry per layer kind present.
std::map<LayerKind, ClassCount> count_by_class(const ArchitectureGraph& graph);

}  // namespace aiperf
