#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "glintgaze/eye_sim.hpp"

using namespace glintgaze;

namespace {

SubjectParams subject_with_kappa(double kh, double kv) {
  SubjectParams s;
  s.eyeball_center = Point3(0, 0, 40);
  s.kappa = {kh, kv};
  return s;
}

double angle_deg(const UnitVec3& a, const UnitVec3& b) { return rad_to_deg(angle_between(a.vec(), b.vec())); }

// Direction error of the specular path L -> G -> O at a surface point G.
double path_error(const Point3& g, const Point3& led, const Sphere& s) {
  const Vec3 n = (s.center - g).normalized();
  const Vec3 in = (led - g).normalized();
  const Vec3 mirrored = 2.0 * n.dot(in) * n - in;
  return angle_between(mirrored, (Point3::Zero() - g).normalized());
}

}  // namespace

TEST(EyePose, ZeroKappaOnForwardAxis) {
  const SubjectParams s = subject_with_kappa(0, 0);
  const EyeState e = eye_pose_for_target(Point3(0, 0, -500), s);
  EXPECT_LT(angle_deg(e.optical_axis, e.visual_axis), 1e-12);
  EXPECT_NEAR((e.optical_axis.vec() - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(EyePose, HorizontalKappaAngle) {
  const EyeState e = eye_pose_for_target(Point3(30, -20, -800), subject_with_kappa(5, 0));
  EXPECT_NEAR(angle_deg(e.optical_axis, e.visual_axis), 5.0, 1e-9);
}

TEST(EyePose, CombinedKappaAngle) {
  const EyeState e = eye_pose_for_target(Point3(-60, 40, -1500), subject_with_kappa(5, 1.5));
  const double expected = rad_to_deg(std::acos(std::cos(deg_to_rad(5.0)) * std::cos(deg_to_rad(1.5))));
  EXPECT_NEAR(angle_deg(e.optical_axis, e.visual_axis), expected, 1e-9);
}

TEST(EyePose, StructuralInvariants) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> xy(-300, 300), z(-3000, -300), k(-6, 6);
  for (int i = 0; i < 200; ++i) {
    const SubjectParams s = subject_with_kappa(k(rng), k(rng));
    const Point3 target(xy(rng), xy(rng), z(rng));
    const EyeState e = eye_pose_for_target(target, s);
    const Vec3 offset = e.cornea.center - e.eyeball_center;
    ASSERT_NEAR(offset.norm(), s.anatomy.eyeball_to_cornea, 1e-12);
    ASSERT_LT(offset.normalized().cross(e.optical_axis.vec()).norm(), 1e-12);
    ASSERT_NEAR((e.pupil_center_3d - e.cornea.center).norm(), e.cornea.radius, 1e-9);
    // The visual axis aims at the target from the converged cornea centre.
    ASSERT_LT(angle_between(e.visual_axis.vec(), target - e.cornea.center), 1e-9);
  }
}

TEST(EyePose, AnatomicalPupilPlacement) {
  SubjectParams s = subject_with_kappa(5, 1.5);
  s.anatomy.pupil_placement = PupilPlacement::Anatomical;
  const EyeState e = eye_pose_for_target(Point3(0, 0, -500), s);
  EXPECT_NEAR((e.pupil_center_3d - e.cornea.center).norm(), 4.2, 1e-12);
}

TEST(EyePose, IterationBudgetExhausted) {
  try {
    eye_pose_for_target(Point3(200, 100, -330), subject_with_kappa(5, 1.5), 1);
    FAIL() << "expected NoConvergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
}

TEST(EyePose, KappaInversionRoundTrip) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 200; ++i) {
    const UnitVec3 v(0.3 * n(rng), 0.3 * n(rng), -1.0);
    const Kappa k{5 + n(rng), 1.5 + n(rng)};
    const UnitVec3 o = optical_from_visual(v, k);
    ASSERT_LT((visual_from_optical(o, k).vec() - v.vec()).norm(), 1e-12);
  }
}

TEST(GlintReflection, ColocatedSourceRetroreflects) {
  const auto g = solve_glint_reflection(Point3::Zero(), Sphere(Point3(0, 0, 35), 8));
  ASSERT_TRUE(g.has_value());
  EXPECT_NEAR((*g - Point3(0, 0, 27)).norm(), 0.0, 1e-12);
}

TEST(GlintReflection, OffsetLedCoplanarWithEqualAngles) {
  const Sphere s(Point3(0, 0, 35), 8);
  const Point3 led(20, 0, 0);
  const auto g = solve_glint_reflection(led, s);
  ASSERT_TRUE(g.has_value());
  EXPECT_NEAR(g->y(), 0.0, 1e-12);
  const Vec3 n = (*g - s.center).normalized();
  EXPECT_NEAR(angle_between(n, -*g), angle_between(n, led - *g), 1e-10);
  const Point3 c = s.center;
  const UnitVec3 ghat(*g);
  const UnitVec3 refl = reflect_about_normal(ghat, surface_normal(s, *g));
  EXPECT_LT(point_to_ray_distance(led, *g, refl), 1e-8);
  EXPECT_NEAR((*g - c).norm(), 8.0, 1e-12);
}

TEST(GlintReflection, AgreesWithSphereSearch) {
  const Sphere s(Point3(0, 0, 35), 8);
  const Point3 led(20, 0, 0);
  const Point3 solved = *solve_glint_reflection(led, s);

  // Coarse pass: 10^6 points of a Fibonacci lattice over the whole sphere.
  const int n = 1000000;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  Point3 best = s.center;
  double best_err = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double zz = 1.0 - 2.0 * (i + 0.5) / n;
    const double rr = std::sqrt(1.0 - zz * zz);
    const Point3 p = s.center + 8.0 * Vec3(rr * std::cos(golden * i), rr * std::sin(golden * i), zz);
    if ((p - s.center).dot(-s.center) <= 0.0) continue;  // facing away from the camera
    const double err = path_error(p, led, s);
    if (err < best_err) {
      best_err = err;
      best = p;
    }
  }
  // Fine pass: 10^6 samples on a tangent patch around the coarse optimum.
  const Vec3 nrm = (best - s.center).normalized();
  const Vec3 t1 = nrm.cross(Vec3::UnitY()).normalized();
  const Vec3 t2 = nrm.cross(t1);
  const Point3 seed = best;
  for (int a = -500; a <= 500; ++a) {
    for (int b = -500; b <= 500; ++b) {
      const Point3 q = seed + 5e-5 * (a * t1 + b * t2);
      const Point3 p = s.center + 8.0 * (q - s.center).normalized();
      const double err = path_error(p, led, s);
      if (err < best_err) {
        best_err = err;
        best = p;
      }
    }
  }
  EXPECT_LT((best - solved).norm(), 1e-4);
}

TEST(GlintReflection, CollinearLedBehindSphereIsDegenerate) {
  try {
    solve_glint_reflection(Point3(0, 0, 80), Sphere(Point3(0, 0, 35), 8));
    FAIL() << "expected DegenerateGeometry";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateGeometry);
  }
}

TEST(GlintReflection, BackHemisphereIsAbsent) {
  // An LED far to the side of the eye cannot produce a camera-visible glint.
  EXPECT_FALSE(solve_glint_reflection(Point3(0, 0, 200), Sphere(Point3(3, 0, 35), 8)).has_value());
}

TEST(GlintReflection, InsideSphereRejected) {
  EXPECT_THROW(solve_glint_reflection(Point3(0, 0, 33), Sphere(Point3(0, 0, 35), 8)), Error);
}

class SynthesizeTest : public ::testing::Test {
 protected:
  PinholeCamera cam;
  LedRig rig = LedRig::square();
  SubjectParams subject = subject_with_kappa(5, 1.5);
  EyeState eye = eye_pose_for_target(Point3(40, -30, -700), subject);
};

TEST_F(SynthesizeTest, NoiselessEqualsTruth) {
  NoiseSpec noise;
  noise.cornea_sigma = 0.0;
  Rng rng(1);
  const FrameObservation obs = synthesize_frame(eye, subject.anatomy, rig, cam, noise, rng);
  ASSERT_TRUE(obs.truth.has_value());
  const FrameTruth& t = *obs.truth;
  EXPECT_TRUE(obs.pupil_present);
  EXPECT_EQ(obs.pupil_2d.u, t.pupil_2d.u);
  EXPECT_EQ(obs.pupil_2d.v, t.pupil_2d.v);
  ASSERT_EQ(obs.glints.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(obs.glints[i].led, static_cast<int>(i));
    EXPECT_TRUE(obs.glints[i].present);
    EXPECT_EQ(obs.glints[i].position.u, t.glints[i].position.u);
    EXPECT_EQ(obs.glints[i].position.v, t.glints[i].position.v);
  }
  EXPECT_EQ(obs.cornea_2d_estimate->u, t.cornea_2d.u);
  EXPECT_TRUE(obs.distractors.empty());
  EXPECT_EQ(t.cornea_2d.u, project(cam, eye.cornea.center).u);
}

TEST_F(SynthesizeTest, FullDropoutKeepsPupil) {
  NoiseSpec noise;
  noise.glint_dropout_prob = 1.0;
  Rng rng(2);
  const FrameObservation obs = synthesize_frame(eye, subject.anatomy, rig, cam, noise, rng);
  EXPECT_TRUE(obs.pupil_present);
  EXPECT_EQ(obs.present_glint_count(), 0u);
}

TEST_F(SynthesizeTest, KeypointNoiseStandardDeviation) {
  NoiseSpec noise;
  noise.keypoint_sigma = 0.5;
  double ss = 0.0;
  std::size_t count = 0;
  const FrameTruth truth = frame_truth(eye, rig, cam);
  for (int f = 0; f < 100000; ++f) {
    Rng rng(frame_seed(99, 0, 0, f));
    const FrameObservation obs = synthesize_frame(eye, subject.anatomy, rig, cam, noise, rng);
    const double du = obs.pupil_2d.u - truth.pupil_2d.u;
    const double dv = obs.pupil_2d.v - truth.pupil_2d.v;
    ss += du * du + dv * dv;
    count += 2;
    for (std::size_t i = 0; i < 4; ++i) {
      const double gu = obs.glints[i].position.u - truth.glints[i].position.u;
      const double gv = obs.glints[i].position.v - truth.glints[i].position.v;
      ss += gu * gu + gv * gv;
      count += 2;
    }
  }
  const double sigma = std::sqrt(ss / static_cast<double>(count));
  EXPECT_NEAR(sigma, 0.5, 0.01);
}

TEST_F(SynthesizeTest, DistractorsInsideIrisDisc) {
  NoiseSpec noise;
  noise.distractor_count_mean = 3.0;
  const double radius = iris_radius_px(eye, subject.anatomy, cam);
  std::size_t total = 0;
  for (int f = 0; f < 200; ++f) {
    Rng rng(frame_seed(5, 0, 0, f));
    const FrameObservation obs = synthesize_frame(eye, subject.anatomy, rig, cam, noise, rng);
    for (const auto& d : obs.distractors) ASSERT_LE(distance(d, obs.truth->pupil_2d), radius + 1e-9);
    total += obs.distractors.size();
  }
  EXPECT_NEAR(static_cast<double>(total) / 200.0, 3.0, 0.5);
}

TEST(SynthesizeProperties, CoplanarityAndLineIntersection) {
  const PinholeCamera cam;
  const LedRig rig = LedRig::square();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> xy(-400, 400), z(-3000, -330);
  SubjectRanges ranges;
  for (int i = 0; i < 200; ++i) {
    const SubjectParams s = draw_subject(i, ranges, 3);
    const EyeState e = eye_pose_for_target(Point3(xy(rng), xy(rng), z(rng)), s);
    const FrameTruth t = frame_truth(e, rig, cam);
    const UnitVec3 chat(e.cornea.center);
    for (std::size_t k = 0; k < rig.size(); ++k) {
      ASSERT_TRUE(t.glints[k].present);
      const auto g3 = solve_glint_reflection(rig.leds[k], e.cornea);
      const Vec3 ghat = g3->normalized();
      const Vec3 lhat = rig.leds[k].normalized();
      ASSERT_LT(std::abs(ghat.cross(lhat).dot(chat.vec())), 1e-9);
      // Image line through the glint and the LED's homogeneous image K L.
      const Vec3 ghom(t.glints[k].position.u, t.glints[k].position.v, 1.0);
      const Point3& L = rig.leds[k];
      const Vec3 lhom(cam.focal_px * L.x() + cam.principal.u * L.z(), cam.focal_px * L.y() + cam.principal.v * L.z(), L.z());
      const Vec3 line = ghom.cross(lhom);
      const double dist = std::abs(line.dot(Vec3(t.cornea_2d.u, t.cornea_2d.v, 1.0))) / line.head<2>().norm();
      ASSERT_LT(dist, 1e-6);
    }
  }
}

TEST(Protocol, SingleSubjectCounts) {
  SimulationSetup setup;
  const Dataset ds = generate_protocol_dataset(1, setup);
  ASSERT_EQ(ds.frames.size(), 54u);
  std::size_t calib = 0;
  for (const auto& f : ds.frames) {
    if (f.calibration) {
      ++calib;
      EXPECT_DOUBLE_EQ(f.gaze_target.depth_m, 0.5);
    }
  }
  EXPECT_EQ(calib, 9u);
}

TEST(Protocol, DepthPlanes) {
  const auto targets = protocol_targets(ProtocolConfig{});
  std::set<double> depths;
  for (const auto& t : targets) depths.insert(t.depth_m);
  EXPECT_EQ(depths, (std::set<double>{0.33, 0.5, 1.0, 1.5, 2.0, 3.0}));
  ASSERT_EQ(targets.size(), 54u);
  for (const auto& t : targets) {
    const double dist = (t.position - ProtocolConfig{}.viewpoint).norm();
    EXPECT_NEAR(dist, t.depth_m * 1000.0, 1e-9);
  }
}

TEST(Protocol, EighteenUniqueDirections) {
  const ProtocolConfig cfg;
  const auto targets = protocol_targets(cfg);
  std::vector<Vec3> unique;
  for (const auto& t : targets) {
    const Vec3 d = (t.position - cfg.viewpoint).normalized();
    bool seen = false;
    for (const auto& u : unique) seen = seen || (u - d).norm() < 1e-12;
    if (!seen) unique.push_back(d);
  }
  EXPECT_EQ(unique.size(), 18u);
}

TEST(Protocol, DeterministicAndSubjectConstantKappa) {
  SimulationSetup setup;
  setup.noise.keypoint_sigma = 0.5;
  setup.noise.glint_dropout_prob = 0.1;
  setup.noise.seed = 1234;
  setup.protocol.frames_per_target = 2;
  const Dataset a = generate_protocol_dataset(3, setup);
  const Dataset b = generate_protocol_dataset(3, setup);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const auto& fa = a.frames[i].observation;
    const auto& fb = b.frames[i].observation;
    ASSERT_EQ(fa.pupil_2d.u, fb.pupil_2d.u);
    for (std::size_t k = 0; k < fa.glints.size(); ++k) {
      ASSERT_EQ(fa.glints[k].present, fb.glints[k].present);
      ASSERT_EQ(fa.glints[k].position.v, fb.glints[k].position.v);
    }
    const auto& s = a.subjects[static_cast<std::size_t>(a.frames[i].subject)];
    ASSERT_EQ(a.frames[i].eye.kappa.horizontal_deg, s.kappa.horizontal_deg);
    ASSERT_EQ(a.frames[i].eye.kappa.vertical_deg, s.kappa.vertical_deg);
  }
  setup.noise.seed = 1235;
  const Dataset c = generate_protocol_dataset(3, setup);
  EXPECT_NE(a.frames[0].observation.pupil_2d.u, c.frames[0].observation.pupil_2d.u);
}

TEST(Protocol, SubjectsWithinRanges) {
  SubjectRanges ranges;
  for (int i = 0; i < 100; ++i) {
    const SubjectParams s = draw_subject(i, ranges, 77);
    EXPECT_LE(std::abs(s.kappa.horizontal_deg - 5.0), 1.0);
    EXPECT_LE(std::abs(s.kappa.vertical_deg - 1.5), 1.0);
    EXPECT_LE(std::abs(s.eyeball_center.x()), 2.0);
    EXPECT_LE(std::abs(s.eyeball_center.z() - 40.0), 3.0);
    EXPECT_EQ(s.anatomy.cornea_radius, 8.0);
  }
}

TEST(Protocol, RejectsZeroSubjects) { EXPECT_THROW(generate_protocol_dataset(0, SimulationSetup{}), Error); }

TEST(Protocol, DeviceExtrinsicsMoveTargets) {
  ProtocolConfig cfg;
  cfg.extrinsics = DeviceExtrinsics::from_euler_deg(0, 0, 0, Vec3(5, 0, 0));
  const auto moved = protocol_targets(cfg);
  const auto base = protocol_targets(ProtocolConfig{});
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR((moved[i].position - base[i].position - Vec3(5, 0, 0)).norm(), 0.0, 1e-9);
}
