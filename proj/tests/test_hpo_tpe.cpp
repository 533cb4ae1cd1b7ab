#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "aiperf/hpo_tpe.hpp"
#include "aiperf/nas_morphism.hpp"

using namespace aiperf;

namespace {

HistoryRecord record_with(double error, HyperParams hp) {
  HistoryRecord r;
  r.digest = std::to_string(hp.batch_size) + "-" + std::to_string(hp.kernel_size);
  r.hyperparams = hp;
  r.best_error = error;
  return r;
}

// Brute-force TPE oracle: re-derives the good/bad densities and scans the
// grid, structured independently of the implementation.
HyperParams brute_force_tpe(std::vector<HpoObservation> obs) {
  std::stable_sort(obs.begin(), obs.end(),
                   [](const HpoObservation& a, const HpoObservation& b) {
                     return a.error < b.error;
                   });
  int n = static_cast<int>(obs.size());
  int n_good = std::max(1, static_cast<int>(std::ceil(0.25 * n)));
  auto count_good = [&](auto pred) {
    double c = 0;
    for (int i = 0; i < n_good; ++i) c += pred(obs[i].params) ? 1 : 0;
    return c;
  };
  auto count_bad = [&](auto pred) {
    double c = 0;
    for (int i = n_good; i < n; ++i) c += pred(obs[i].params) ? 1 : 0;
    return c;
  };
  double best_ratio = -1;
  HyperParams best;
  for (int b : kBatchSizeDomain) {
    for (int k : kKernelSizeDomain) {
      double gb = (count_good([&](const HyperParams& p) { return p.batch_size == b; }) + 1) /
                  (n_good + 6.0);
      double gk = (count_good([&](const HyperParams& p) { return p.kernel_size == k; }) + 1) /
                  (n_good + 4.0);
      double bb = (count_bad([&](const HyperParams& p) { return p.batch_size == b; }) + 1) /
                  (n - n_good + 6.0);
      double bk = (count_bad([&](const HyperParams& p) { return p.kernel_size == k; }) + 1) /
                  (n - n_good + 4.0);
      double ratio = (gb * gk) / (bb * bk);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = {b, k};
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("warm-up suggestions are deterministic and in-domain") {
  std::vector<HpoObservation> empty;
  HyperParams a = suggest(empty, 0);
  HyperParams b = suggest(empty, 0);
  CHECK(a == b);
  CHECK(in_domain(a));

  // distinct warm-up rounds walk distinct grid points
  std::vector<HpoObservation> obs;
  std::vector<HyperParams> seen;
  for (int round = 0; round < 4; ++round) {
    HyperParams p = suggest(obs, 123);
    CHECK(in_domain(p));
    for (const auto& q : seen) CHECK(!(q == p));
    seen.push_back(p);
    obs.push_back({p, 0.5, true});
  }
}

TEST_CASE("warm-up ignores observation errors entirely") {
  std::vector<HpoObservation> low{{{32, 1}, 0.01, false},
                                  {{64, 3}, 0.02, false},
                                  {{128, 5}, 0.03, false}};
  std::vector<HpoObservation> high{{{32, 1}, 0.99, false},
                                   {{64, 3}, 0.98, false},
                                   {{128, 5}, 0.97, false}};
  CHECK(suggest(low, 42) == suggest(high, 42));
}

TEST_CASE("tpe prefers the dimension values of the good set") {
  // batch 448 always good, everything else bad; 8 observations.
  std::vector<HpoObservation> obs;
  obs.push_back({{448, 3}, 0.1, false});
  obs.push_back({{448, 5}, 0.1, false});
  obs.push_back({{32, 1}, 0.9, false});
  obs.push_back({{64, 3}, 0.9, false});
  obs.push_back({{128, 5}, 0.9, false});
  obs.push_back({{256, 7}, 0.9, false});
  obs.push_back({{512, 1}, 0.9, false});
  obs.push_back({{32, 3}, 0.9, false});

  HyperParams got = suggest(obs, 7);
  CHECK(got.batch_size == 448);
  CHECK(got == brute_force_tpe(obs));
}

TEST_CASE("tpe agrees with the brute-force oracle on random observation sets") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<HpoObservation> obs;
    int n = 4 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i) {
      HyperParams p{kBatchSizeDomain[rng.below(6)], kKernelSizeDomain[rng.below(4)]};
      obs.push_back({p, 0.05 + 0.9 * rng.unit(), false});
    }
    CHECK(suggest(obs, 1) == brute_force_tpe(obs));
  }
}

TEST_CASE("suggestions always stay inside the declared domains") {
  SplitMix64 rng(5);
  std::vector<HpoObservation> obs;
  for (int i = 0; i < 60; ++i) {
    HyperParams p = suggest(obs, rng.next());
    CHECK(in_domain(p));
    obs.push_back({p, 0.05 + 0.9 * rng.unit(), false});
  }
}

TEST_CASE("identical inputs give identical suggestions") {
  SplitMix64 rng(17);
  std::vector<HpoObservation> obs;
  for (int i = 0; i < 10; ++i) {
    obs.push_back({{kBatchSizeDomain[rng.below(6)], kKernelSizeDomain[rng.below(4)]},
                   0.1 + 0.8 * rng.unit(), false});
  }
  CHECK(suggest(obs, 99) == suggest(obs, 99));
}

TEST_CASE("tpe concentrates on the synthetic objective") {
  auto objective = [](const HyperParams& p) {
    return 1e-3 + std::abs(p.batch_size - 256) / 512.0 +
           std::abs(p.kernel_size - 3) / 10.0;
  };
  std::vector<std::pair<double, HyperParams>> ranked;
  for (int b : kBatchSizeDomain) {
    for (int k : kKernelSizeDomain) ranked.push_back({objective({b, k}), {b, k}});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  auto in_top_quartile = [&](const HyperParams& p) {
    for (int i = 0; i < 6; ++i) {
      if (ranked[i].second == p) return true;
    }
    return false;
  };

  int seeds_passed = 0;
  for (u64 seed = 0; seed < 10; ++seed) {
    std::vector<HpoObservation> obs;
    int hits = 0;
    for (int round = 0; round < 40; ++round) {
      HyperParams p = suggest(obs, mix64(seed, round));
      if (round >= 20 && in_top_quartile(p)) ++hits;
      obs.push_back({p, objective(p), false});
    }
    if (hits >= 10) ++seeds_passed;  // >= 50% of the last 20
  }
  CHECK(seeds_passed >= 8);
}

TEST_CASE("warm-up error prediction") {
  std::vector<HistoryRecord> empty;
  CHECK(predict_warmup_error(empty, {448, 3}) == 0.9);

  std::vector<HistoryRecord> one{record_with(0.4, {448, 3})};
  CHECK(predict_warmup_error(one, {64, 7}) == doctest::Approx(0.4));

  std::vector<HistoryRecord> three{record_with(0.2, {448, 3}),
                                   record_with(0.4, {448, 3}),
                                   record_with(0.6, {448, 3})};
  CHECK(predict_warmup_error(three, {448, 3}) == doctest::Approx(0.4));

  // nearest-3 rule: the distant record is ignored
  std::vector<HistoryRecord> four{record_with(0.2, {448, 3}),
                                  record_with(0.3, {448, 5}),
                                  record_with(0.4, {448, 1}),
                                  record_with(0.9, {32, 7})};
  CHECK(predict_warmup_error(four, {448, 3}) == doctest::Approx(0.3));

  // clamped to (0.01, 0.99)
  std::vector<HistoryRecord> tiny{record_with(0.001, {448, 3})};
  CHECK(predict_warmup_error(tiny, {448, 3}) == doctest::Approx(0.01));
}
