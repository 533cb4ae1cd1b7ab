#include "aiperf/scoring_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace aiperf {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double regulated_score(double error, double ops_per_second) {
  if (!(error > 0.0 && error < 1.0)) {
    throw ScoreDomainError("error must lie strictly in (0,1), got " +
                           fmt("%.6g", error));
  }
  return -std::log(error) * ops_per_second;
}

ScoreSeries compute_score_series(const RunLog& log) {
  std::map<int, double> last_ts;
  double final_ts = 0;
  for (const auto& e : log.events) {
    if (!(e.ts_seconds >= 0) || !std::isfinite(e.ts_seconds)) {
      throw MalformedLogError("bad timestamp in log");
    }
    auto it = last_ts.find(e.replica_id);
    if (it != last_ts.end() && e.ts_seconds < it->second) {
      throw MalformedLogError("timestamps regress for replica " +
                              std::to_string(e.replica_id));
    }
    last_ts[e.replica_id] = e.ts_seconds;
    final_ts = std::max(final_ts, e.ts_seconds);
  }

  ScoreSeries series;
  if (log.events.empty()) return series;  // empty: score 0, invalid

  // Epoch events sorted by end timestamp drive the accumulation.
  std::vector<const RunEvent*> epochs;
  for (const auto& e : log.events) {
    if (e.event == EventKind::Epoch) epochs.push_back(&e);
  }
  std::stable_sort(epochs.begin(), epochs.end(),
                   [](const RunEvent* a, const RunEvent* b) {
                     return a->ts_seconds < b->ts_seconds;
                   });

  const double step = ScoreSeries::kStepSeconds;
  long long steps = std::max(1LL, static_cast<long long>(std::ceil(final_ts / step)));
  u128 cumulative = 0;
  double min_error = 1.0;
  std::size_t next = 0;
  for (long long i = 1; i <= steps; ++i) {
    double t = static_cast<double>(i) * step;
    while (next < epochs.size() && epochs[next]->ts_seconds <= t) {
      cumulative += epochs[next]->epoch_ops;
      min_error = std::min(min_error, epochs[next]->error);
      ++next;
    }
    ScorePoint p;
    p.t_seconds = t;
    p.cumulative_ops = cumulative;
    p.ops_per_second = u128_to_double(cumulative) / t;
    p.min_error = min_error;
    p.regulated_score = (min_error > 0.0 && min_error < 1.0)
                            ? regulated_score(min_error, p.ops_per_second)
                            : 0.0;
    series.points.push_back(p);
  }
  series.final_score = series.points.back().ops_per_second;
  series.valid = series.points.back().min_error <= kMaxError;
  return series;
}

namespace {

void write_csv(const ScoreSeries& series, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "t_seconds,cumulative_ops,ops_per_second,min_error,regulated_score\n";
  for (const auto& p : series.points) {
    out << fmt("%.0f", p.t_seconds) << ',' << u128_to_string(p.cumulative_ops) << ','
        << fmt("%.12g", p.ops_per_second) << ',' << fmt("%.6f", p.min_error) << ','
        << fmt("%.12g", p.regulated_score) << '\n';
  }
}

void write_summary(const ScoreSeries& series, const RunLog& log,
                   const std::filesystem::path& file) {
  int trials = 0;
  double best_error = 1.0;
  std::string best_digest;
  for (const auto& e : log.events) {
    if (e.event == EventKind::Proposed) ++trials;
    if (e.event == EventKind::Epoch && e.error < best_error) {
      best_error = e.error;
      best_digest = e.trial_digest;
    }
  }
  double final_regulated =
      series.points.empty() ? 0.0 : series.points.back().regulated_score;

  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "final_score_ops_per_second=" << fmt("%.12g", series.final_score) << '\n';
  out << "regulated_score=" << fmt("%.12g", final_regulated) << '\n';
  out << "valid=" << (series.valid ? "true" : "false") << '\n';
  out << "trials=" << trials << '\n';
  out << "best_error=" << fmt("%.6f", best_error) << '\n';
  out << "best_architecture=" << (best_digest.empty() ? "none" : best_digest) << '\n';
  out << "nonstandard=" << log.header_value("nonstandard").value_or("false") << '\n';
  if (!series.valid) out << "status=INVALID (error > 30%)\n";
}

// Minimal static chart: score and regulated score against time, each scaled
// to its own maximum, final values in the legend.
void write_svg(const ScoreSeries& series, const std::filesystem::path& file) {
  const int width = 860, height = 460;
  const int left = 70, right = 820, top = 40, bottom = 400;

  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";

  if (!series.points.empty()) {
    double t_max = series.points.back().t_seconds;
    double s_max = 0, r_max = 0;
    for (const auto& p : series.points) {
      s_max = std::max(s_max, p.ops_per_second);
      r_max = std::max(r_max, p.regulated_score);
    }
    auto x_of = [&](double t) { return left + (right - left) * (t / t_max); };
    auto y_of = [&](double v, double vmax) {
      return vmax > 0 ? bottom - (bottom - top) * (v / vmax) : bottom;
    };
    auto polyline = [&](const char* color, auto value, double vmax) {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : series.points) {
        out << fmt("%.2f", x_of(p.t_seconds)) << ',' << fmt("%.2f", y_of(value(p), vmax))
            << ' ';
      }
      out << "\"/>\n";
    };
    polyline("#4682b4", [](const ScorePoint& p) { return p.ops_per_second; }, s_max);
    polyline("#e07b39", [](const ScorePoint& p) { return p.regulated_score; }, r_max);

    for (int i = 0; i <= 4; ++i) {
      double t = t_max * i / 4.0;
      out << "<text x=\"" << fmt("%.2f", x_of(t)) << "\" y=\"" << bottom + 20
          << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt("%.1f", t / 3600.0)
          << "h</text>\n";
    }
    out << "<text x=\"" << left << "\" y=\"" << top - 15
        << "\" font-size=\"13\" fill=\"#4682b4\">score "
        << fmt("%.6g", series.final_score) << " ops/s</text>\n";
    out << "<text x=\"" << left + 260 << "\" y=\"" << top - 15
        << "\" font-size=\"13\" fill=\"#e07b39\">regulated "
        << fmt("%.6g", series.points.back().regulated_score) << "</text>\n";
  } else {
    out << "<text x=\"" << width / 2 << "\" y=\"" << height / 2
        << "\" font-size=\"14\" text-anchor=\"middle\">empty run</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void emit_report(const ScoreSeries& series, const RunLog& log,
                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_csv(series, out_dir / "score.csv");
  write_summary(series, log, out_dir / "summary.txt");
  write_svg(series, out_dir / "score.svg");
}

}  // namespace aiperf
