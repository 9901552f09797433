#pragma once

// Cornea centre estimation from labeled glints and known LED positions:
//  * the cornea ray, null direction of the glint/LED reflection planes;
//  * joint 2D refinement of the cornea projection and the glints against the
//    LED-glint image lines;
//  * lifting the 2D cornea to 3D by a discretized search along its ray for the
//    depth whose reflected glint rays pass closest to the LEDs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glintgaze/error.hpp"
#include "glintgaze/eye_sim.hpp"
#include "glintgaze/geometry.hpp"

namespace glintgaze {

struct LabeledGlint {
  int led = 0;
  Point2 position;
};

inline std::vector<LabeledGlint> present_glints(const FrameObservation& obs) {
  std::vector<LabeledGlint> out;
  for (const auto& g : obs.glints) {
    if (g.present) out.push_back({g.led, g.position});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cornea ray.

inline std::vector<Vec3> reflection_plane_normals(std::span<const LabeledGlint> glints, const LedRig& rig,
                                                  const PinholeCamera& cam) {
  std::vector<Vec3> normals;
  normals.reserve(glints.size());
  for (const auto& g : glints) {
    const Vec3 glint_dir = back_project(cam, g.position).vec();
    normals.push_back(glint_dir.cross(rig.leds.at(static_cast<std::size_t>(g.led)).normalized()));
  }
  return normals;
}

inline Ray3 cornea_ray_from_glints(std::span<const LabeledGlint> glints, const LedRig& rig, const PinholeCamera& cam) {
  if (glints.size() < 2) throw Error(ErrorCode::InsufficientGlints, "cornea ray needs two or more labeled glints");
  const auto normals = reflection_plane_normals(glints, rig, cam);
  return Ray3{Point3::Zero(), solve_null_ray(normals)};
}

inline Ray3 cornea_ray_from_glints(const FrameObservation& obs, const LedRig& rig, const PinholeCamera& cam) {
  const auto glints = present_glints(obs);
  return cornea_ray_from_glints(glints, rig, cam);
}

inline Point2 cornea_2d_from_ray(const Ray3& ray, const PinholeCamera& cam) { return project(cam, ray.at(1.0)); }

// ---------------------------------------------------------------------------
// 2D refinement.

struct RefinementConfig {
  int steps = 100;
  double step_size = 0.3;
  bool glint_freedom = true;
  double tether_weight = 0.1;
};

/// Image of an LED normalized to (u, v, 1), or to a unit direction (du, dv, 0)
/// when the LED lies in the camera plane.
inline Vec3 normalized_led_image(const PinholeCamera& cam, const Point3& led) {
  const Vec3 h = project_homogeneous(cam, led);
  if (std::abs(h.z()) > 1e-12) return h / h.z();
  const double n = h.head<2>().norm();
  if (n == 0.0) throw Error(ErrorCode::DegenerateGeometry, "LED at the camera centre has no image");
  return {h.x() / n, h.y() / n, 0.0};
}

inline std::vector<Vec3> led_images(const PinholeCamera& cam, const LedRig& rig) {
  std::vector<Vec3> out;
  for (const auto& l : rig.leds) out.push_back(normalized_led_image(cam, l));
  return out;
}

/// Loss over the cornea point p and glints g_i:
///   (1/N) sum_i dist(p, line(l_i, g_i))^2 + tether * sum_i |g_i - g0_i|^2,
/// the tether term only when glints are free.
class RefinementProblem {
 public:
  RefinementProblem(std::vector<Vec3> led_images, std::vector<Point2> anchors, bool glint_freedom, double tether)
      : leds_(std::move(led_images)), anchors_(std::move(anchors)), glint_freedom_(glint_freedom), tether_(tether) {}

  std::size_t size() const { return leds_.size(); }
  bool glint_freedom() const { return glint_freedom_; }
  const std::vector<Point2>& anchors() const { return anchors_; }

  /// Signed distance of p to the line through g and the LED image l.
  static double line_residual(Point2 p, Point2 g, const Vec3& l) {
    double a, b, c, s;
    line_coefficients(g, l, a, b, c, s);
    return (a * p.u + b * p.v + c) / s;
  }

  double loss(Point2 cornea, std::span<const Point2> glints) const {
    const double n = static_cast<double>(leds_.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < leds_.size(); ++i) {
      const double e = line_residual(cornea, glints[i], leds_[i]);
      sum += e * e;
    }
    double total = sum / n;
    if (glint_freedom_) {
      for (std::size_t i = 0; i < leds_.size(); ++i) {
        const Point2 d = glints[i] - anchors_[i];
        total += tether_ * (d.u * d.u + d.v * d.v);
      }
    }
    return total;
  }

  /// Analytic gradient; glint components are zero unless glints are free.
  void gradient(Point2 cornea, std::span<const Point2> glints, Point2& d_cornea, std::span<Point2> d_glints) const {
    const double n = static_cast<double>(leds_.size());
    d_cornea = {0.0, 0.0};
    for (std::size_t i = 0; i < leds_.size(); ++i) {
      const Vec3& l = leds_[i];
      const Point2 g = glints[i];
      double a, b, c, s;
      line_coefficients(g, l, a, b, c, s);
      const double num = a * cornea.u + b * cornea.v + c;
      const double e = num / s;
      const double k = 2.0 * e / n;
      d_cornea.u += k * a / s;
      d_cornea.v += k * b / s;
      if (!glint_freedom_) {
        d_glints[i] = {0.0, 0.0};
        continue;
      }
      const double lw = l.z();
      const double dnum_du = -lw * cornea.v + l.y();
      const double dnum_dv = lw * cornea.u - l.x();
      const double ds_du = -b * lw / s;
      const double ds_dv = a * lw / s;
      const double de_du = (dnum_du * s - num * ds_du) / (s * s);
      const double de_dv = (dnum_dv * s - num * ds_dv) / (s * s);
      const Point2 d = g - anchors_[i];
      d_glints[i] = {k * de_du + 2.0 * tether_ * d.u, k * de_dv + 2.0 * tether_ * d.v};
    }
  }

 private:
  // Line l_h x g_h = (a, b, c) with s = |(a, b)|.
  static void line_coefficients(Point2 g, const Vec3& l, double& a, double& b, double& c, double& s) {
    a = g.v * l.z() - l.y();
    b = l.x() - g.u * l.z();
    c = g.u * l.y() - g.v * l.x();
    s = std::hypot(a, b);
  }

  std::vector<Vec3> leds_;
  std::vector<Point2> anchors_;
  bool glint_freedom_;
  double tether_;
};

struct RefinementResult {
  Point2 cornea_2d;
  std::vector<LabeledGlint> glints;
  std::vector<double> trace;  // loss before the first step and after each step
  std::vector<int> excluded_leds;
};

/// Gradient descent for exactly `config.steps` steps. Pairs whose glint and
/// LED image coincide are excluded.
inline RefinementResult refine_cornea2d_and_glints(Point2 initial_cornea, std::span<const LabeledGlint> glints,
                                                   std::span<const Vec3> led_images_by_label,
                                                   const RefinementConfig& config) {
  if (config.steps < 0) throw Error(ErrorCode::InvalidArgument, "refinement steps must be non-negative");
  if (!is_finite(initial_cornea)) throw Error(ErrorCode::InvalidArgument, "non-finite initial cornea");
  RefinementResult result;
  std::vector<Vec3> leds;
  std::vector<Point2> anchors;
  std::vector<int> labels;
  for (const auto& g : glints) {
    if (!is_finite(g.position)) throw Error(ErrorCode::InvalidArgument, "non-finite glint");
    const Vec3& l = led_images_by_label[static_cast<std::size_t>(g.led)];
    if (l.z() != 0.0 && std::hypot(g.position.u - l.x(), g.position.v - l.y()) < 1e-6) {
      result.excluded_leds.push_back(g.led);
      continue;
    }
    leds.push_back(l);
    anchors.push_back(g.position);
    labels.push_back(g.led);
  }
  if (leds.size() < 2) throw Error(ErrorCode::InsufficientGlints, "fewer than two usable LED-glint lines");

  const RefinementProblem problem(leds, anchors, config.glint_freedom, config.tether_weight);
  Point2 cornea = initial_cornea;
  std::vector<Point2> state = anchors;
  std::vector<Point2> grad(state.size());
  Point2 grad_c;
  result.trace.reserve(static_cast<std::size_t>(config.steps) + 1);
  result.trace.push_back(problem.loss(cornea, state));
  for (int step = 0; step < config.steps; ++step) {
    problem.gradient(cornea, state, grad_c, grad);
    cornea = cornea - config.step_size * grad_c;
    if (config.glint_freedom) {
      for (std::size_t i = 0; i < state.size(); ++i) state[i] = state[i] - config.step_size * grad[i];
    }
    result.trace.push_back(problem.loss(cornea, state));
  }
  result.cornea_2d = cornea;
  for (std::size_t i = 0; i < state.size(); ++i) result.glints.push_back({labels[i], state[i]});
  return result;
}

// ---------------------------------------------------------------------------
// Lifting to 3D.

struct LiftConfig {
  double radius = 8.0;    // mm
  double z_min = 10.0;    // mm
  double z_max = 50.0;    // mm
  double z_step = 0.001;  // mm
  bool coarse_to_fine = false;
  int coarse_points = 400;
  RayExtent extent = RayExtent::Line;
};

struct LiftResult {
  Point3 cornea_3d = Point3::Zero();
  double z = 0.0;
  double loss = 0.0;
};

/// LED loss 0.5 * sum_i d_{L_i}^2 as a function of the cornea depth z along
/// the ray through `cornea_2d`, over valid glints only.
class LiftProblem {
 public:
  LiftProblem(Point2 cornea_2d, std::span<const LabeledGlint> glints, const LedRig& rig, const PinholeCamera& cam,
              double radius, RayExtent extent = RayExtent::Line)
      : cornea_dir_(back_project(cam, cornea_2d)), radius_(radius), extent_(extent) {
    if (glints.empty()) throw Error(ErrorCode::InsufficientGlints, "lifting needs at least one valid glint");
    for (const auto& g : glints) {
      glint_dirs_.push_back(back_project(cam, g.position));
      leds_.push_back(rig.leds.at(static_cast<std::size_t>(g.led)));
    }
  }

  Point3 cornea_at(double z) const { return cornea_dir_.vec() * (z / cornea_dir_.z()); }

  /// nullopt where some glint ray misses the sphere.
  std::optional<double> loss_at(double z) const {
    const Point3 c = cornea_at(z);
    const double cc = c.squaredNorm() - radius_ * radius_;
    double sum = 0.0;
    for (std::size_t i = 0; i < glint_dirs_.size(); ++i) {
      const Vec3& g = glint_dirs_[i].vec();
      const double b = g.dot(c);
      const double disc = b * b - cc;
      if (disc < 0.0) return std::nullopt;
      const double t = b - std::sqrt(disc);
      if (!(t > 0.0)) return std::nullopt;
      const Point3 hit = g * t;
      const Vec3 n = (c - hit).normalized();
      const Vec3 reflected = 2.0 * n.dot(g) * n - g;
      const Vec3 w = hit - leds_[i];
      const double along = w.dot(reflected);
      // The printed reflection points from the LED towards the glint, so the
      // physical outgoing half-line is the -reflected side.
      const double d2 = (extent_ == RayExtent::HalfLine && along > 0.0) ? w.squaredNorm()
                                                                         : (w - along * reflected).squaredNorm();
      sum += d2;
    }
    return 0.5 * sum;
  }

 private:
  UnitVec3 cornea_dir_;
  std::vector<UnitVec3> glint_dirs_;
  std::vector<Point3> leds_;
  double radius_;
  RayExtent extent_;
};

inline std::int64_t lift_grid_size(const LiftConfig& cfg) {
  return static_cast<std::int64_t>(std::llround((cfg.z_max - cfg.z_min) / cfg.z_step)) + 1;
}

inline double lift_grid_z(const LiftConfig& cfg, std::int64_t k) { return cfg.z_min + static_cast<double>(k) * cfg.z_step; }

inline LiftResult lift_cornea_to_3d(const LiftProblem& problem, const LiftConfig& cfg) {
  if (!(cfg.z_step > 0.0) || !(cfg.z_max > cfg.z_min)) throw Error(ErrorCode::InvalidArgument, "bad z grid");
  const std::int64_t n = lift_grid_size(cfg);
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_k = -1;
  auto scan = [&](std::int64_t from, std::int64_t to, std::int64_t stride) {
    for (std::int64_t k = from; k < to; k += stride) {
      const auto l = problem.loss_at(lift_grid_z(cfg, k));
      if (l && *l < best) {  // strict: ties resolve to the smaller z
        best = *l;
        best_k = k;
      }
    }
  };
  if (cfg.coarse_to_fine && cfg.coarse_points > 1) {
    const std::int64_t stride = std::max<std::int64_t>(1, n / cfg.coarse_points);
    scan(0, n, stride);
    if (best_k >= 0) {
      const std::int64_t centre = best_k;
      best = std::numeric_limits<double>::infinity();
      best_k = -1;
      scan(std::max<std::int64_t>(0, centre - stride), std::min<std::int64_t>(n, centre + stride + 1), 1);
    }
  } else {
    scan(0, n, 1);
  }
  if (best_k < 0) throw Error(ErrorCode::NoFeasibleZ, "every depth on the search grid is infeasible");
  const double z = lift_grid_z(cfg, best_k);
  return {problem.cornea_at(z), z, best};
}

inline LiftResult lift_cornea_to_3d(Point2 cornea_2d, std::span<const LabeledGlint> glints, const LedRig& rig,
                                    const PinholeCamera& cam, const LiftConfig& cfg = {}) {
  const LiftProblem problem(cornea_2d, glints, rig, cam, cfg.radius, cfg.extent);
  return lift_cornea_to_3d(problem, cfg);
}

// ---------------------------------------------------------------------------
// Per-frame estimation.

enum class CorneaMode { SvdLift, RefineLift, RawLift };

inline std::string to_string(CorneaMode m) {
  switch (m) {
    case CorneaMode::SvdLift: return "svd-lift";
    case CorneaMode::RefineLift: return "refine-lift";
    case CorneaMode::RawLift: return "raw-lift";
  }
  return "?";
}

inline CorneaMode cornea_mode_from_string(const std::string& s) {
  if (s == "svd-lift") return CorneaMode::SvdLift;
  if (s == "refine-lift") return CorneaMode::RefineLift;
  if (s == "raw-lift") return CorneaMode::RawLift;
  throw Error(ErrorCode::Config, "unknown cornea mode '" + s + "'");
}

struct CorneaSolverConfig {
  CorneaMode mode = CorneaMode::SvdLift;
  RefinementConfig refinement;
  LiftConfig lift;
};

struct CorneaEstimate {
  std::optional<Ray3> cornea_ray;
  Point2 cornea_2d;
  Point3 cornea_3d = Point3::Zero();
  double led_loss = 0.0;
  std::vector<double> refinement_trace;
  std::vector<LabeledGlint> glints;  // glints used for lifting
};

inline CorneaEstimate estimate_cornea(std::span<const LabeledGlint> glints, std::optional<Point2> direct_estimate,
                                      const LedRig& rig, const PinholeCamera& cam, const CorneaSolverConfig& cfg) {
  if (glints.size() < 2) throw Error(ErrorCode::InsufficientGlints, "need two or more labeled glints");
  CorneaEstimate est;
  est.glints.assign(glints.begin(), glints.end());
  switch (cfg.mode) {
    case CorneaMode::SvdLift: {
      est.cornea_ray = cornea_ray_from_glints(glints, rig, cam);
      est.cornea_2d = cornea_2d_from_ray(*est.cornea_ray, cam);
      break;
    }
    case CorneaMode::RawLift: {
      if (!direct_estimate) throw Error(ErrorCode::InvalidArgument, "raw-lift needs a direct cornea estimate");
      est.cornea_2d = *direct_estimate;
      break;
    }
    case CorneaMode::RefineLift: {
      Point2 init;
      if (direct_estimate) {
        init = *direct_estimate;
      } else {
        est.cornea_ray = cornea_ray_from_glints(glints, rig, cam);
        init = cornea_2d_from_ray(*est.cornea_ray, cam);
      }
      const auto leds = led_images(cam, rig);
      auto refined = refine_cornea2d_and_glints(init, glints, leds, cfg.refinement);
      est.cornea_2d = refined.cornea_2d;
      est.glints = std::move(refined.glints);
      est.refinement_trace = std::move(refined.trace);
      break;
    }
  }
  if (!est.cornea_ray) est.cornea_ray = Ray3{Point3::Zero(), back_project(cam, est.cornea_2d)};
  const LiftResult lift = lift_cornea_to_3d(est.cornea_2d, est.glints, rig, cam, cfg.lift);
  est.cornea_3d = lift.cornea_3d;
  est.led_loss = lift.loss;
  return est;
}

inline CorneaEstimate estimate_cornea(const FrameObservation& obs, const LedRig& rig, const PinholeCamera& cam,
                                      const CorneaSolverConfig& cfg) {
  const auto glints = present_glints(obs);
  return estimate_cornea(glints, obs.cornea_2d_estimate, rig, cam, cfg);
}

struct SupervisionLabel {
  std::size_t frame = 0;
  std::optional<Point2> cornea_2d;
  std::string failure;
};

/// Cornea-2D labels from labeled glints and known LEDs; frames that cannot be
/// solved get no label and a failure reason.
inline std::vector<SupervisionLabel> supervise_cornea2d(std::span<const FrameObservation> frames, const LedRig& rig,
                                                        const PinholeCamera& cam) {
  std::vector<SupervisionLabel> labels;
  labels.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    SupervisionLabel label;
    label.frame = i;
    try {
      label.cornea_2d = cornea_2d_from_ray(cornea_ray_from_glints(frames[i], rig, cam), cam);
    } catch (const Error& e) {
      label.failure = e.what();
    }
    labels.push_back(std::move(label));
  }
  return labels;
}

}  // namespace glintgaze
