#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "glintgaze/eye_sim.hpp"
#include "glintgaze/geometry.hpp"
#include "glintgaze/rng.hpp"

namespace glintgaze {

inline double angular_error_arcmin(const UnitVec3& a, const UnitVec3& b) {
  return rad_to_deg(std::acos(std::clamp(a.dot(b), -1.0, 1.0))) * 60.0;
}

struct LeeResult {
  double sum_px = 0.0;
  std::size_t pairs = 0;     // labels present on both sides
  std::size_t excluded = 0;  // labels present on exactly one side
};

/// Labeled Euclidean error: sum over labels of |G_i - g_i| for labels present
/// in both sets. A swapped label is charged the full distance to the wrong glint.
inline LeeResult labeled_euclidean_error(std::span<const GlintObservation> truth,
                                         std::span<const GlintObservation> predicted) {
  LeeResult r;
  for (const auto& t : truth) {
    const auto it = std::find_if(predicted.begin(), predicted.end(), [&](const auto& p) { return p.led == t.led; });
    const bool have_pred = it != predicted.end() && it->present;
    if (t.present && have_pred) {
      r.sum_px += distance(t.position, it->position);
      ++r.pairs;
    } else if (t.present != have_pred) {
      ++r.excluded;
    }
  }
  return r;
}

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quantile of sorted data (the usual "type 7" rule).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  s.q1 = quantile_sorted(values, 0.25);
  s.q2 = quantile_sorted(values, 0.50);
  s.q3 = quantile_sorted(values, 0.75);
  s.max = values.back();
  return s;
}

/// True when no entry exceeds its predecessor by more than `rel_tol` times the
/// first entry. The tolerance absorbs floating-point rounding at a minimum.
inline bool is_non_increasing(std::span<const double> trace, double rel_tol = 1e-12) {
  if (trace.empty()) return true;
  const double tol = rel_tol * std::abs(trace.front());
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] > trace[i - 1] + tol) return false;
  }
  return true;
}

struct ConfidenceInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap interval for the mean.
inline ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, int resamples = 1000, double level = 0.95,
                                            std::uint64_t seed = 0) {
  ConfidenceInterval ci;
  if (values.empty()) return ci;
  double sum = 0.0;
  for (double v : values) sum += v;
  ci.mean = sum / static_cast<double>(values.size());
  Rng rng = make_rng(seed, {0xB007ULL});
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  ci.lower = quantile_sorted(means, (1.0 - level) / 2.0);
  ci.upper = quantile_sorted(means, 1.0 - (1.0 - level) / 2.0);
  return ci;
}

}  // namespace glintgaze
