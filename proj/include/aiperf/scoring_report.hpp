#pragma once

#include <filesystem>

#include "aiperf/cluster_harness.hpp"

namespace aiperf {

struct MalformedLogError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ScoreDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScorePoint {
  double t_seconds = 0;        // exact multiple of the step
  u128 cumulative_ops = 0;     // all epoch ops ended at <= t
  double ops_per_second = 0;   // cumulative_ops / t
  double min_error = 1.0;      // best validation error seen at <= t
  double regulated_score = 0;  // -ln(min_error) * ops_per_second
};

struct ScoreSeries {
  static constexpr double kStepSeconds = 360.0;  // 0.1 hour

  std::vector<ScorePoint> points;
  double final_score = 0;  // ops/second at the last step
  bool valid = false;      // min_error at the final step <= 0.30
};

inline constexpr double kMaxError = 0.30;

/// Cumulative OPS sampled at 0.1-hour steps up to the last multiple of the
/// step at or after the final event. An epoch's ops count entirely at its
/// end timestamp. Throws MalformedLogError on per-replica timestamp
/// regressions or nonsense records.
ScoreSeries compute_score_series(const RunLog& log);

/// -ln(error) * ops_per_second: rewards computation and low error jointly.
/// Throws ScoreDomainError unless error is strictly inside (0,1).
double regulated_score(double error, double ops_per_second);

/// Writes score.csv, summary.txt and score.svg into out_dir.
void emit_report(const ScoreSeries& series, const RunLog& log,
                 const std::filesystem::path& out_dir);

}  // namespace aiperf
