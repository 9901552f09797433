#pragma once

// Forward model of a spherical-cornea eye in front of a camera with an LED
// rig: eye poses for fixation targets, glint reflection points, noisy 2D
// observations and the 54-target collection protocol.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "glintgaze/error.hpp"
#include "glintgaze/geometry.hpp"
#include "glintgaze/rng.hpp"

namespace glintgaze {

enum class PupilPlacement { OnCornea, Anatomical };

struct EyeAnatomy {
  double cornea_radius = 8.0;        // mm
  double eyeball_to_cornea = 5.3;    // mm, eyeball centre to cornea centre
  double pupil_radius = 2.0;         // mm, rendering only
  double iris_radius = 6.0;          // mm
  double eyeball_radius = 12.0;      // mm, rendering only
  PupilPlacement pupil_placement = PupilPlacement::OnCornea;
  double anatomical_pupil_depth = 4.2;  // mm from cornea centre in Anatomical mode
};

struct Kappa {
  double horizontal_deg = 0.0;
  double vertical_deg = 0.0;

  /// Magnitude of the optical/visual axis offset this kappa produces.
  double magnitude_deg() const {
    return rad_to_deg(std::acos(std::cos(deg_to_rad(horizontal_deg)) * std::cos(deg_to_rad(vertical_deg))));
  }
};

struct SubjectParams {
  int id = 0;
  Point3 eyeball_center{0.0, 0.0, 40.0};
  Kappa kappa;
  EyeAnatomy anatomy;
};

struct EyeState {
  Point3 eyeball_center = Point3::Zero();
  UnitVec3 optical_axis{0.0, 0.0, -1.0};
  UnitVec3 visual_axis{0.0, 0.0, -1.0};
  Kappa kappa;
  Sphere cornea;
  Point3 pupil_center_3d = Point3::Zero();
};

struct LedRig {
  std::vector<Point3> leds;

  /// Square of the given side centred on the camera in its z = 0 plane.
  /// Labels run counter-clockwise in the image starting top-left.
  static LedRig square(double side_mm = 30.0, double z_mm = 0.0) {
    const double h = side_mm / 2.0;
    return LedRig{{Point3(-h, -h, z_mm), Point3(h, -h, z_mm), Point3(h, h, z_mm), Point3(-h, h, z_mm)}};
  }

  std::size_t size() const { return leds.size(); }

  void validate() const {
    if (leds.size() < 2) throw Error(ErrorCode::InvalidArgument, "rig needs at least two LEDs");
    for (std::size_t i = 0; i < leds.size(); ++i) {
      for (std::size_t j = i + 1; j < leds.size(); ++j) {
        if ((leds[i] - leds[j]).norm() == 0.0) throw Error(ErrorCode::InvalidArgument, "LED positions must be distinct");
      }
    }
  }
};

struct GazeTarget {
  int index = 0;          // 0..53
  Point3 position = Point3::Zero();  // camera coordinates, mm
  double depth_m = 0.5;
  int row = 0;
  int col = 0;

  int direction_index() const { return row * 3 + col; }
};

struct GlintObservation {
  int led = 0;
  bool present = false;
  Point2 position;
};

struct FrameTruth {
  Point2 cornea_2d;
  Point3 cornea_3d = Point3::Zero();
  Point2 pupil_2d;
  Point3 pupil_3d = Point3::Zero();
  UnitVec3 optical_axis;
  UnitVec3 visual_axis;
  std::vector<GlintObservation> glints;  // before noise and dropout
};

struct FrameObservation {
  bool pupil_present = false;
  Point2 pupil_2d;
  std::vector<GlintObservation> glints;  // one per LED, glints[i].led == i
  std::vector<Point2> distractors;       // unlabeled reflections
  std::optional<Point2> cornea_2d_estimate;  // direct, unrefined cornea estimate
  std::optional<FrameTruth> truth;

  std::size_t present_glint_count() const {
    return static_cast<std::size_t>(std::count_if(glints.begin(), glints.end(), [](const auto& g) { return g.present; }));
  }
};

struct NoiseSpec {
  double keypoint_sigma = 0.0;       // px, per coordinate
  double glint_dropout_prob = 0.0;
  double distractor_count_mean = 0.0;
  double cornea_sigma = 2.0;         // px, noise of the direct cornea estimate
  std::uint64_t seed = 0;

  bool noiseless() const {
    return keypoint_sigma == 0.0 && glint_dropout_prob == 0.0 && distractor_count_mean == 0.0 && cornea_sigma == 0.0;
  }
};

// ---------------------------------------------------------------------------
// Axis parametrization. Gaze "forward" is -z (towards the camera). An axis is
// given a right/up frame without roll; kappa is a fixed offset expressed in
// that frame, so the optical/visual angle is exactly kappa.magnitude_deg().

namespace detail {

struct AxisFrame {
  Vec3 right;
  Vec3 up;
  Vec3 forward;
};

inline AxisFrame axis_frame(const Vec3& d) {
  Vec3 right(-d.z(), 0.0, d.x());
  const double n = right.norm();
  if (n < 1e-12) throw Error(ErrorCode::DegenerateGeometry, "axis parallel to the vertical");
  right /= n;
  return {right, right.cross(d), d};
}

inline Vec3 apply_kappa(const Vec3& optical, const Kappa& k) {
  const double kh = deg_to_rad(k.horizontal_deg);
  const double kv = deg_to_rad(k.vertical_deg);
  const AxisFrame f = axis_frame(optical);
  return std::cos(kv) * std::sin(kh) * f.right + std::sin(kv) * f.up + std::cos(kv) * std::cos(kh) * f.forward;
}

}  // namespace detail

/// Visual axis for an optical axis under the subject's kappa.
inline UnitVec3 visual_from_optical(const UnitVec3& optical, const Kappa& kappa) {
  return UnitVec3(detail::apply_kappa(optical.vec(), kappa));
}

/// Inverse of visual_from_optical by fixed-point iteration.
inline UnitVec3 optical_from_visual(const UnitVec3& visual, const Kappa& kappa) {
  Vec3 o = visual.vec();
  for (int it = 0; it < 200; ++it) {
    const Vec3 residual = visual.vec() - detail::apply_kappa(o, kappa);
    o = (o + residual).normalized();
    if (residual.norm() < 1e-15) return UnitVec3(o);
  }
  const Vec3 residual = visual.vec() - detail::apply_kappa(o, kappa);
  if (residual.norm() > 1e-12) throw Error(ErrorCode::NoConvergence, "kappa inversion did not converge");
  return UnitVec3(o);
}

inline Point3 pupil_center_for(const Point3& cornea_center, const UnitVec3& optical, const EyeAnatomy& a) {
  const double depth = a.pupil_placement == PupilPlacement::OnCornea ? a.cornea_radius : a.anatomical_pupil_depth;
  return cornea_center + depth * optical.vec();
}

/// Eye pose fixating a target. The visual axis runs from the cornea centre
/// to the target while the cornea centre itself moves with the optical axis,
/// so the pair is solved by fixed-point iteration.
inline EyeState eye_pose_for_target(const Point3& target, const SubjectParams& subject, int max_iterations = 100,
                                    double tolerance_mm = 1e-9) {
  const EyeAnatomy& a = subject.anatomy;
  const Point3& e = subject.eyeball_center;
  if ((target - e).norm() <= a.eyeball_to_cornea + a.cornea_radius) {
    throw Error(ErrorCode::InvalidArgument, "target must lie in front of the eye");
  }
  UnitVec3 optical(target - e);
  Point3 cornea = e + a.eyeball_to_cornea * optical.vec();
  for (int it = 0; it < max_iterations; ++it) {
    const UnitVec3 visual(target - cornea);
    optical = optical_from_visual(visual, subject.kappa);
    const Point3 next = e + a.eyeball_to_cornea * optical.vec();
    const double step = (next - cornea).norm();
    cornea = next;
    if (step < tolerance_mm) {
      EyeState s;
      s.eyeball_center = e;
      s.optical_axis = optical;
      s.visual_axis = visual_from_optical(optical, subject.kappa);
      s.kappa = subject.kappa;
      s.cornea = Sphere(cornea, a.cornea_radius);
      s.pupil_center_3d = pupil_center_for(cornea, optical, a);
      return s;
    }
  }
  throw Error(ErrorCode::NoConvergence, "eye pose iteration exceeded its step budget");
}

/// Reflection point on the sphere for the path LED -> G -> camera centre.
/// G lies in the plane (O, L, C); it is located by bisection on the arc angle
/// until incidence and reflection angles agree to `tolerance_rad`. Returns
/// nullopt when the point is not on the camera-facing side.
inline std::optional<Point3> solve_glint_reflection(const Point3& led, const Sphere& cornea,
                                                    const Point3& camera_origin = Point3::Zero(),
                                                    double tolerance_rad = 1e-10) {
  const Point3& c = cornea.center;
  const double r = cornea.radius;
  if ((camera_origin - c).norm() <= r || (led - c).norm() <= r) {
    throw Error(ErrorCode::InvalidArgument, "camera and LED must be outside the sphere");
  }
  const Vec3 u = (camera_origin - c).normalized();
  const Vec3 to_led = (led - c).normalized();
  Vec3 w = to_led - to_led.dot(u) * u;
  const double wn = w.norm();
  if (wn < 1e-12) {
    if ((led - camera_origin).norm() == 0.0 || to_led.dot(u) > 0.0) return c + r * u;
    throw Error(ErrorCode::DegenerateGeometry, "camera, LED and cornea centre are collinear");
  }
  w /= wn;
  const double beta = std::atan2(to_led.dot(w), to_led.dot(u));  // arc angle of the LED direction

  auto point_at = [&](double alpha) -> Point3 { return c + r * (std::cos(alpha) * u + std::sin(alpha) * w); };
  auto mismatch = [&](double alpha) {
    const Point3 g = point_at(alpha);
    const Vec3 n = (g - c) / r;
    return angle_between(n, camera_origin - g) - angle_between(n, led - g);
  };

  // mismatch(0) < 0 (normal points at the camera), mismatch(beta) > 0.
  double lo = 0.0;
  double hi = beta;
  for (int it = 0; it < 200 && (hi - lo) > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = mismatch(mid);
    if (std::abs(m) < tolerance_rad * 1e-3) {
      lo = hi = mid;
      break;
    }
    (m < 0.0 ? lo : hi) = mid;
  }
  const double alpha = 0.5 * (lo + hi);
  const Point3 g = point_at(alpha);
  const Vec3 n = (g - c) / r;
  if (n.dot(camera_origin - g) <= 0.0 || n.dot(led - g) <= 0.0) return std::nullopt;
  return g;
}

inline FrameTruth frame_truth(const EyeState& eye, const LedRig& rig, const PinholeCamera& cam) {
  FrameTruth t;
  t.cornea_3d = eye.cornea.center;
  t.cornea_2d = project(cam, eye.cornea.center);
  t.pupil_3d = eye.pupil_center_3d;
  t.pupil_2d = project(cam, eye.pupil_center_3d);
  t.optical_axis = eye.optical_axis;
  t.visual_axis = eye.visual_axis;
  t.glints.resize(rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) {
    auto& g = t.glints[i];
    g.led = static_cast<int>(i);
    if (auto p = solve_glint_reflection(rig.leds[i], eye.cornea)) {
      const Point2 q = project(cam, *p);
      if (cam.contains(q)) {
        g.present = true;
        g.position = q;
      }
    }
  }
  return t;
}

/// Approximate image radius (px) of the iris disc; used to place distractors.
inline double iris_radius_px(const EyeState& eye, const EyeAnatomy& anatomy, const PinholeCamera& cam) {
  return cam.focal_px * anatomy.iris_radius / eye.pupil_center_3d.z();
}

/// Exact observations from the forward model, then noise, dropout and
/// distractors drawn from `rng`. The truth block is filled before corruption.
inline FrameObservation synthesize_frame(const EyeState& eye, const EyeAnatomy& anatomy, const LedRig& rig,
                                         const PinholeCamera& cam, const NoiseSpec& noise, Rng& rng) {
  FrameObservation obs;
  FrameTruth truth = frame_truth(eye, rig, cam);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](Point2 p, double sigma) {
    if (sigma == 0.0) return p;
    const double du = sigma * gauss(rng);
    const double dv = sigma * gauss(rng);
    return Point2{p.u + du, p.v + dv};
  };

  obs.pupil_present = true;
  obs.pupil_2d = jitter(truth.pupil_2d, noise.keypoint_sigma);
  obs.glints.resize(rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) {
    auto& g = obs.glints[i];
    g.led = static_cast<int>(i);
    g.present = truth.glints[i].present;
    if (noise.glint_dropout_prob > 0.0 && unit(rng) < noise.glint_dropout_prob) g.present = false;
    if (g.present) g.position = jitter(truth.glints[i].position, noise.keypoint_sigma);
  }
  obs.cornea_2d_estimate = jitter(truth.cornea_2d, noise.cornea_sigma);
  if (noise.distractor_count_mean > 0.0) {
    std::poisson_distribution<int> count(noise.distractor_count_mean);
    const int n = count(rng);
    const double radius = iris_radius_px(eye, anatomy, cam);
    for (int k = 0; k < n; ++k) {
      const double rho = radius * std::sqrt(unit(rng));
      const double phi = 2.0 * kPi * unit(rng);
      obs.distractors.push_back({truth.pupil_2d.u + rho * std::cos(phi), truth.pupil_2d.v + rho * std::sin(phi)});
    }
  }
  obs.truth = std::move(truth);
  return obs;
}

// ---------------------------------------------------------------------------
// Collection protocol.

/// Rigid map from device coordinates to camera coordinates.
struct DeviceExtrinsics {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Point3 to_camera(const Point3& p) const { return rotation * p + translation; }

  static DeviceExtrinsics from_euler_deg(double yaw, double pitch, double roll, const Vec3& t) {
    DeviceExtrinsics e;
    e.rotation = (Eigen::AngleAxisd(deg_to_rad(yaw), Vec3::UnitY()) * Eigen::AngleAxisd(deg_to_rad(pitch), Vec3::UnitX()) *
                  Eigen::AngleAxisd(deg_to_rad(roll), Vec3::UnitZ()))
                     .toRotationMatrix();
    e.translation = t;
    return e;
  }
};

struct ProtocolConfig {
  std::vector<double> depths_m{0.33, 0.5, 1.0, 1.5, 2.0, 3.0};
  double calibration_depth_m = 0.5;
  // Half-extent of the 3x3 grid, degrees as seen from `viewpoint`. Planes
  // nearer than `far_from_m` use the near grid, the rest the far grid, so the
  // protocol has 18 distinct target directions.
  double near_grid_h_deg = 10.0;
  double near_grid_v_deg = 8.0;
  double far_grid_h_deg = 7.0;
  double far_grid_v_deg = 5.0;
  double far_grid_v_offset_deg = 2.0;  // shifts the far grid off the shared centre
  double far_from_m = 1.5;
  Point3 viewpoint{0.0, 0.0, 40.0};  // device coordinates
  DeviceExtrinsics extrinsics;
  int frames_per_target = 1;
};

struct SubjectRanges {
  Point3 nominal_eyeball_center{0.0, 0.0, 40.0};
  Vec3 eyeball_jitter_mm{2.0, 2.0, 3.0};  // uniform +/- per axis
  Kappa kappa_mean{5.0, 1.5};
  double kappa_jitter_deg = 1.0;
  double cornea_radius_jitter_mm = 0.0;
  EyeAnatomy anatomy;
};

inline std::vector<GazeTarget> protocol_targets(const ProtocolConfig& cfg) {
  std::vector<GazeTarget> targets;
  int index = 0;
  for (double depth : cfg.depths_m) {
    const bool far = depth >= cfg.far_from_m;
    const double h = deg_to_rad(far ? cfg.far_grid_h_deg : cfg.near_grid_h_deg);
    const double v = deg_to_rad(far ? cfg.far_grid_v_deg : cfg.near_grid_v_deg);
    const double v0 = far ? deg_to_rad(cfg.far_grid_v_offset_deg) : 0.0;
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        // Image rows grow downward (+y), so row 0 is the top of the grid.
        const Vec3 dir = Vec3(std::tan((col - 1) * h), std::tan((row - 1) * v + v0), -1.0).normalized();
        GazeTarget t;
        t.index = index++;
        t.depth_m = depth;
        t.row = row;
        t.col = col;
        t.position = cfg.extrinsics.to_camera(cfg.viewpoint + depth * 1000.0 * dir);
        targets.push_back(t);
      }
    }
  }
  return targets;
}

inline SubjectParams draw_subject(int id, const SubjectRanges& ranges, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x5B1EC7ULL, static_cast<std::uint64_t>(id)});
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  SubjectParams s;
  s.id = id;
  s.anatomy = ranges.anatomy;
  for (int k = 0; k < 3; ++k) {
    s.eyeball_center[k] = ranges.nominal_eyeball_center[k] + ranges.eyeball_jitter_mm[k] * sym(rng);
  }
  s.kappa.horizontal_deg = ranges.kappa_mean.horizontal_deg + ranges.kappa_jitter_deg * sym(rng);
  s.kappa.vertical_deg = ranges.kappa_mean.vertical_deg + ranges.kappa_jitter_deg * sym(rng);
  s.anatomy.cornea_radius += ranges.cornea_radius_jitter_mm * sym(rng);
  return s;
}

struct ProtocolFrame {
  int subject = 0;
  int target = 0;
  int frame = 0;
  bool calibration = false;
  GazeTarget gaze_target;
  EyeState eye;
  FrameObservation observation;
};

struct Dataset {
  std::vector<SubjectParams> subjects;
  std::vector<GazeTarget> targets;
  std::vector<ProtocolFrame> frames;  // sorted by (subject, target, frame)
};

struct SimulationSetup {
  PinholeCamera camera;
  LedRig rig = LedRig::square();
  ProtocolConfig protocol;
  SubjectRanges subjects;
  NoiseSpec noise;
};

inline std::uint64_t frame_seed(std::uint64_t seed, int subject, int target, int frame) {
  return derive_seed(seed, {0xF7A3EULL, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(target),
                            static_cast<std::uint64_t>(frame)});
}

/// Full protocol dataset: per subject, every target x frames_per_target.
/// Frames on the calibration plane are tagged for mapper fitting.
inline Dataset generate_protocol_dataset(int n_subjects, const SimulationSetup& setup) {
  if (n_subjects < 1) throw Error(ErrorCode::InvalidArgument, "need at least one subject");
  setup.camera.validate();
  setup.rig.validate();
  Dataset ds;
  ds.targets = protocol_targets(setup.protocol);
  for (int s = 0; s < n_subjects; ++s) {
    const SubjectParams subject = draw_subject(s, setup.subjects, setup.noise.seed);
    ds.subjects.push_back(subject);
    for (const GazeTarget& target : ds.targets) {
      const EyeState eye = eye_pose_for_target(target.position, subject);
      for (int f = 0; f < setup.protocol.frames_per_target; ++f) {
        Rng rng(frame_seed(setup.noise.seed, s, target.index, f));
        ProtocolFrame pf;
        pf.subject = s;
        pf.target = target.index;
        pf.frame = f;
        pf.calibration = std::abs(target.depth_m - setup.protocol.calibration_depth_m) < 1e-12;
        pf.gaze_target = target;
        pf.eye = eye;
        pf.observation = synthesize_frame(eye, subject.anatomy, setup.rig, setup.camera, setup.noise, rng);
        ds.frames.push_back(std::move(pf));
      }
    }
  }
  return ds;
}

}  // namespace glintgaze
