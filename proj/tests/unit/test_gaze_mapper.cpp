#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "glintgaze/cornea.hpp"
#include "glintgaze/gaze_mapper.hpp"
#include "glintgaze/metrics.hpp"
#include "glintgaze/serialize.hpp"

using namespace glintgaze;

namespace {

const PinholeCamera kCam{};

SubjectParams subject(double kh, double kv) {
  SubjectParams s;
  s.kappa = {kh, kv};
  return s;
}

// Calibration pairs at the calibration depth and held-out pairs elsewhere.
void protocol_pairs(const SubjectParams& s, CalibrationSet& calib, CalibrationSet& held_out) {
  const ProtocolConfig cfg;
  for (const auto& t : protocol_targets(cfg)) {
    const EyeState e = eye_pose_for_target(t.position, s);
    (t.depth_m == cfg.calibration_depth_m ? calib : held_out).add(e.optical_axis, e.visual_axis);
  }
}

double max_error_arcmin(const GazeMapper& m, const CalibrationSet& set) {
  double worst = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Axis out = map_gaze(m, Axis{set.optical[i], Point3::Zero()});
    worst = std::max(worst, angular_error_arcmin(out.direction, set.visual[i]));
  }
  return worst;
}

UnitVec3 rotate_z(const UnitVec3& v, double a) {
  return UnitVec3(std::cos(a) * v.x() - std::sin(a) * v.y(), std::sin(a) * v.x() + std::cos(a) * v.y(), v.z());
}

}  // namespace

TEST(PupilLift, Example) {
  const Point3 p = lift_pupil_to_3d(kCam.principal, Point3(0, 0, 35), kCam);
  EXPECT_NEAR((p - Point3(0, 0, 27)).norm(), 0.0, 1e-12);
}

TEST(PupilLift, MatchesSimulatorTruth) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> xy(-400, 400), z(-2500, -300);
  for (int i = 0; i < 200; ++i) {
    const EyeState e = eye_pose_for_target(Point3(xy(rng), xy(rng), z(rng)), subject(5, 1.5));
    const Point3 p = lift_pupil_to_3d(project(kCam, e.pupil_center_3d), e.cornea.center, kCam);
    ASSERT_LT((p - e.pupil_center_3d).norm(), 1e-6);
  }
}

TEST(PupilLift, MissIsNoIntersection) {
  try {
    lift_pupil_to_3d({5, 5}, Point3(0, 0, 35), kCam);
    FAIL() << "expected NoIntersection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoIntersection);
  }
}

TEST(OpticalAxis, Example) {
  const Axis a = optical_axis(Point3(0, 0, 35), Point3(0, 0, 27));
  EXPECT_NEAR((a.direction.vec() - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
  EXPECT_EQ(a.anchor, Point3(0, 0, 35));
}

TEST(OpticalAxis, CoincidentPoints) {
  try {
    optical_axis(Point3(1, 2, 3), Point3(1, 2, 3));
    FAIL() << "expected CoincidentPoints";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CoincidentPoints);
  }
}

TEST(OpticalAxis, FromTrueCorneaIsExact) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> xy(-400, 400), z(-2500, -300);
  for (int i = 0; i < 200; ++i) {
    const EyeState e = eye_pose_for_target(Point3(xy(rng), xy(rng), z(rng)), subject(5, 1.5));
    const Point3 p = lift_pupil_to_3d(project(kCam, e.pupil_center_3d), e.cornea.center, kCam);
    ASSERT_LT(angular_error_arcmin(optical_axis(e.cornea.center, p).direction, e.optical_axis), 1e-4);
  }
}

TEST(OpticalAxis, NoiselessEndToEnd) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> xy(-400, 400), z(-2500, -300);
  const LedRig rig = LedRig::square();
  CorneaSolverConfig cfg;
  cfg.lift.coarse_to_fine = true;
  NoiseSpec noise;
  noise.cornea_sigma = 0.0;
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 100; ++i) {
    const EyeState e = eye_pose_for_target(Point3(xy(rng), xy(rng), z(rng)), subject(5, 1.5));
    Rng frame_rng(static_cast<std::uint64_t>(i));
    const auto obs = synthesize_frame(e, EyeAnatomy{}, rig, kCam, noise, frame_rng);
    if (obs.present_glint_count() < 2) continue;
    const auto est = estimate_cornea(obs, rig, kCam, cfg);
    const Axis a = optical_axis(est.cornea_3d, lift_pupil_to_3d(obs.pupil_2d, est.cornea_3d, kCam));
    const double err = angular_error_arcmin(a.direction, e.optical_axis);
    ASSERT_LT(err, 2.0);
    sum += err;
    ++n;
  }
  ASSERT_GT(n, 50);
  EXPECT_LT(sum / n, 0.5);
}

TEST(PolyMapper, DefaultIsIdentity) {
  const PolyMapper m;
  const UnitVec3 v(0.1, -0.2, -1.0);
  EXPECT_LT((m.map(v).vec() - v.vec()).norm(), 1e-15);
}

TEST(PolyMapper, ZeroKappaFitsIdentity) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(0, 0), calib, held_out);
  ASSERT_EQ(calib.size(), 9u);
  const PolyMapper m = fit_poly_mapper(calib);
  Eigen::Matrix<double, 6, 2> identity = Eigen::Matrix<double, 6, 2>::Zero();
  identity(1, 0) = 1.0;
  identity(2, 1) = 1.0;
  EXPECT_LT((m.coefficients() - identity).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(max_error_arcmin(m, held_out), 0.5);
}

TEST(PolyMapper, KappaHeldOut) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  const PolyMapper m = fit_poly_mapper(calib);
  EXPECT_LT(max_error_arcmin(m, calib), 2.0);
  EXPECT_LT(max_error_arcmin(m, held_out), 2.0);
}

TEST(PolyMapper, TooFewPairsIsRankDeficient) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  CalibrationSet five;
  for (std::size_t i = 0; i < 5; ++i) five.add(calib.optical[i], calib.visual[i]);
  try {
    fit_poly_mapper(five);
    FAIL() << "expected RankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
}

TEST(PolyMapper, CollinearPairsAreRankDeficient) {
  CalibrationSet calib;
  for (int i = 0; i < 9; ++i) {
    const UnitVec3 o(0.02 * i, 0.0, -1.0);
    calib.add(o, o);
  }
  EXPECT_THROW(fit_poly_mapper(calib), Error);
}

TEST(PolyMapper, EquivariantUnderCameraRoll) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  const double a = 0.7;
  CalibrationSet rotated;
  for (std::size_t i = 0; i < calib.size(); ++i) rotated.add(rotate_z(calib.optical[i], a), rotate_z(calib.visual[i], a));
  const PolyMapper m = fit_poly_mapper(calib);
  const PolyMapper mr = fit_poly_mapper(rotated);
  for (const auto& o : held_out.optical) {
    EXPECT_LT((rotate_z(m.map(o), a).vec() - mr.map(rotate_z(o, a)).vec()).norm(), 1e-9);
  }
}

TEST(NetMapper, ParameterCount) {
  const NetMapper net(NetTrainingConfig{}.hidden, 1);
  EXPECT_EQ(net.parameter_count(), 28611u);
  EXPECT_GE(net.parameter_count(), 25000u);
  EXPECT_LE(net.parameter_count(), 35000u);
}

TEST(NetMapper, UntrainedIsIdentity) {
  const NetMapper net(NetTrainingConfig{}.hidden, 2);
  const UnitVec3 v(0.1, 0.05, -1.0);
  EXPECT_LT((net.map(v).vec() - v.vec()).norm(), 1e-15);
}

TEST(NetMapper, ZeroKappaHeldOut) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(0, 0), calib, held_out);
  const NetMapper net = fit_net_mapper(calib);
  EXPECT_LT(max_error_arcmin(net, held_out), 5.0);
}

TEST(NetMapper, KappaCalibrationFit) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  const NetMapper net = fit_net_mapper(calib);
  EXPECT_LT(max_error_arcmin(net, calib), max_error_arcmin(NetMapper(NetTrainingConfig{}.hidden, 0), calib));
}

TEST(NetMapper, Deterministic) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  NetTrainingConfig cfg;
  cfg.iterations = 50;
  cfg.seed = 9;
  const NetMapper a = fit_net_mapper(calib, cfg);
  const NetMapper b = fit_net_mapper(calib, cfg);
  EXPECT_EQ(a.flatten(), b.flatten());
}

TEST(NetMapper, TooFewPairs) {
  CalibrationSet calib;
  for (int i = 0; i < 8; ++i) calib.add(UnitVec3(0.01 * i, 0.0, -1.0), UnitVec3(0.01 * i, 0.0, -1.0));
  EXPECT_THROW(fit_net_mapper(calib), Error);
}

TEST(NetMapper, GradientMatchesFiniteDifferences) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  Eigen::MatrixXd x, t;
  calibration_matrices(calib, x, t);
  std::mt19937_64 rng(64);
  std::normal_distribution<double> gauss(0.0, 0.05);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    NetMapper net(NetTrainingConfig{}.hidden, static_cast<std::uint64_t>(trial));
    Eigen::VectorXd p = net.flatten();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += gauss(rng);
    net.unflatten(p);
    Eigen::VectorXd grad;
    net.loss_and_gradient(x, t, &grad);
    std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
    double diff = 0.0, scale = 0.0;
    for (int k = 0; k < 40; ++k) {
      // Include the output layer, whose gradients are the largest.
      const Eigen::Index i = k < 10 ? p.size() - 1 - k * 7 : pick(rng);
      Eigen::VectorXd q = p;
      q(i) = p(i) + h;
      net.unflatten(q);
      const double fp = net.loss_and_gradient(x, t, nullptr);
      q(i) = p(i) - h;
      net.unflatten(q);
      const double fm = net.loss_and_gradient(x, t, nullptr);
      const double fd = (fp - fm) / (2 * h);
      diff += (fd - grad(i)) * (fd - grad(i));
      scale += fd * fd;
    }
    net.unflatten(p);
    ASSERT_GT(scale, 0.0);
    EXPECT_LT(std::sqrt(diff / scale), 1e-4) << "trial " << trial;
  }
}

TEST(MapperJson, ReloadIsBitExact) {
  CalibrationSet calib, held_out;
  protocol_pairs(subject(5, 1.5), calib, held_out);
  NetTrainingConfig cfg;
  cfg.iterations = 30;
  const std::vector<GazeMapper> mappers{fit_poly_mapper(calib), fit_net_mapper(calib, cfg)};
  for (const auto& m : mappers) {
    const GazeMapper back = gaze_mapper_from_json(Json::parse(to_json(m).dump()));
    ASSERT_EQ(back.index(), m.index());
    for (const auto& o : held_out.optical) {
      const UnitVec3 a = map_gaze(m, Axis{o, Point3::Zero()}).direction;
      const UnitVec3 b = map_gaze(back, Axis{o, Point3::Zero()}).direction;
      EXPECT_EQ(a.vec(), b.vec());
      EXPECT_NEAR(a.vec().norm(), 1.0, 1e-12);
    }
  }
}

TEST(MapperJson, WrongSchemaRejected) {
  EXPECT_THROW(gaze_mapper_from_json(Json{{"schema", "glintgaze.frame"}}), Error);
}
