#pragma once

#include <array>
#include <vector>

#include "aiperf/util.hpp"

namespace aiperf {

struct HistoryRecord;  // nas_morphism.hpp

inline constexpr std::array<int, 6> kBatchSizeDomain{32, 64, 128, 256, 448, 512};
inline constexpr std::array<int, 4> kKernelSizeDomain{1, 3, 5, 7};

struct HyperParams {
  int batch_size = 448;
  int kernel_size = 3;

  bool operator==(const HyperParams&) const = default;
};

bool in_domain(const HyperParams& p);

struct HpoObservation {
  HyperParams params;
  double error = 0.5;      // validation error in (0,1)
  bool predicted = false;  // true for warm-up rounds
};

/// Next point to try. With fewer than 4 observations this walks a seeded
/// low-discrepancy sequence over the 24-point grid (warm-up: errors are
/// ignored entirely). From 4 observations on it is TPE: observations are
/// split at the gamma=0.25 error quantile into good/bad sets, each dimension
/// modeled as a categorical density with add-one smoothing, and the grid
/// point maximizing density_good/density_bad wins (ties: first in grid
/// order). Pure function of (observations, rng_seed).
HyperParams suggest(const std::vector<HpoObservation>& observations, u64 rng_seed);

/// Warm-up stand-in for a measured error: mean best_error of the 3 history
/// records nearest in hyperparameter space (range-normalized L1 distance),
/// 0.9 when history is empty, clamped to (0.01, 0.99).
double predict_warmup_error(const std::vector<HistoryRecord>& history,
                            const HyperParams& params);

}  // namespace aiperf
