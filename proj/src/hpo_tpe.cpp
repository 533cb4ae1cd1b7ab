#include "aiperf/hpo_tpe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aiperf/nas_morphism.hpp"

namespace aiperf {

namespace {

constexpr int kGridSize = 24;  // 6 batch sizes x 4 kernel sizes
constexpr int kWarmupThreshold = 4;
constexpr double kGamma = 0.25;

// Grid order is batch-major: index = batch_index * 4 + kernel_index.
HyperParams grid_point(int index) {
  return {kBatchSizeDomain[index / 4], kKernelSizeDomain[index % 4]};
}

int domain_index(const std::array<int, 6>& domain, int value) {
  for (int i = 0; i < 6; ++i) {
    if (domain[i] == value) return i;
  }
  return -1;
}

int domain_index(const std::array<int, 4>& domain, int value) {
  for (int i = 0; i < 4; ++i) {
    if (domain[i] == value) return i;
  }
  return -1;
}

}  // namespace

bool in_domain(const HyperParams& p) {
  return domain_index(kBatchSizeDomain, p.batch_size) >= 0 &&
         domain_index(kKernelSizeDomain, p.kernel_size) >= 0;
}

HyperParams suggest(const std::vector<HpoObservation>& observations, u64 rng_seed) {
  int n = static_cast<int>(observations.size());
  if (n < kWarmupThreshold) {
    // Warm-up: k-th element of a seeded low-discrepancy walk over the grid
    // (stride 13 is coprime with 24, so 24 steps cover every point).
    u64 start = SplitMix64(rng_seed).below(kGridSize);
    return grid_point(static_cast<int>((start + 13ULL * n) % kGridSize));
  }

  // TPE over the finite grid: good = lowest ceil(gamma*n) errors (stable on
  // ties), each dimension a smoothed categorical; maximize good/bad density.
  std::vector<int> order(observations.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return observations[a].error < observations[b].error;
  });
  int n_good = std::max(1, static_cast<int>(std::ceil(kGamma * n)));

  std::array<double, 6> good_batch{}, bad_batch{};
  std::array<double, 4> good_kernel{}, bad_kernel{};
  int n_bad = n - n_good;
  for (int rank = 0; rank < n; ++rank) {
    const HpoObservation& obs = observations[order[rank]];
    int bi = domain_index(kBatchSizeDomain, obs.params.batch_size);
    int ki = domain_index(kKernelSizeDomain, obs.params.kernel_size);
    if (bi < 0 || ki < 0) continue;  // out-of-domain observations carry no mass
    if (rank < n_good) {
      good_batch[bi] += 1;
      good_kernel[ki] += 1;
    } else {
      bad_batch[bi] += 1;
      bad_kernel[ki] += 1;
    }
  }

  auto density = [](double count, int total, int domain) {
    return (count + 1.0) / (total + domain);
  };

  int best_index = 0;
  double best_ratio = -1.0;
  for (int i = 0; i < kGridSize; ++i) {
    int bi = i / 4, ki = i % 4;
    double g = density(good_batch[bi], n_good, 6) * density(good_kernel[ki], n_good, 4);
    double b = density(bad_batch[bi], n_bad, 6) * density(bad_kernel[ki], n_bad, 4);
    double ratio = g / b;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_index = i;
    }
  }
  return grid_point(best_index);
}

double predict_warmup_error(const std::vector<HistoryRecord>& history,
                            const HyperParams& params) {
  if (history.empty()) return 0.9;

  // Range-normalized L1 distance in hyperparameter space.
  auto distance = [&](const HyperParams& other) {
    return std::abs(params.batch_size - other.batch_size) / 480.0 +
           std::abs(params.kernel_size - other.kernel_size) / 6.0;
  };
  std::vector<int> order(history.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return distance(history[a].hyperparams) < distance(history[b].hyperparams);
  });
  int k = std::min<int>(3, static_cast<int>(history.size()));
  double sum = 0;
  for (int i = 0; i < k; ++i) sum += history[order[i]].best_error;
  return std::clamp(sum / k, 0.01, 0.99);
}

}  // namespace aiperf
