#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "glintgaze/raster.hpp"

using namespace glintgaze;

namespace {

const PinholeCamera kCam{};
const LedRig kRig = LedRig::square();

EyeState eye_looking_at(const Point3& target, double kh = 0.0, double kv = 0.0) {
  SubjectParams s;
  s.kappa = {kh, kv};
  return eye_pose_for_target(target, s);
}

EyeState random_eye(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-300, 300), z(-2000, -300), jitter(-2, 2);
  SubjectParams s;
  s.eyeball_center = Point3(jitter(rng), jitter(rng), 40 + jitter(rng));
  s.kappa = {5.0, 1.5};
  return eye_pose_for_target(Point3(xy(rng), xy(rng), z(rng)), s);
}

std::vector<Point2> true_glints(const EyeState& e) {
  std::vector<Point2> out;
  for (const auto& g : frame_truth(e, kRig, kCam).glints) {
    if (g.present) out.push_back(g.position);
  }
  return out;
}

void expect_code(ErrorCode code, const auto& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code);
  }
}

}  // namespace

TEST(Render, PupilAtPrincipalPointIsDarkestAtCentre) {
  EyeState e = eye_looking_at(Point3(0, 0, -500));
  ASSERT_NEAR(project(kCam, e.pupil_center_3d).u, 320.0, 1e-9);
  const GrayImage img = render_frame(e, EyeAnatomy{}, kRig, kCam);
  const auto darkest = *std::min_element(img.pixels.begin(), img.pixels.end());
  EXPECT_EQ(img.at(320, 240), darkest);
}

TEST(Render, Deterministic) {
  std::mt19937_64 rng(3);
  const EyeState e = random_eye(rng);
  const std::vector<Point2> extra{{300, 250}};
  EXPECT_EQ(render_frame(e, EyeAnatomy{}, kRig, kCam, extra), render_frame(e, EyeAnatomy{}, kRig, kCam, extra));
}

TEST(Threshold, UniformImageGivesEmptyMask) {
  const GrayImage img(64, 48, 120);
  EXPECT_EQ(adaptive_threshold(img).count(), 0u);
}

TEST(Threshold, RenderedGlintsAreComponents) {
  const EyeState e = eye_looking_at(Point3(50, -30, -600), 5, 1.5);
  ASSERT_EQ(true_glints(e).size(), 4u);
  const GrayImage img = render_frame(e, EyeAnatomy{}, kRig, kCam);
  EXPECT_EQ(extract_blobs(adaptive_threshold(img)).size(), 4u);

  const std::vector<Point2> extra{project(kCam, e.pupil_center_3d) + Point2{12, -9}};
  const GrayImage img5 = render_frame(e, EyeAnatomy{}, kRig, kCam, extra);
  EXPECT_EQ(extract_blobs(adaptive_threshold(img5)).size(), 5u);
}

TEST(Blobs, SquareCentroid) {
  BinaryMask mask;
  mask.width = 40;
  mask.height = 40;
  mask.bits.assign(1600, 0);
  for (int y = 20; y <= 22; ++y) {
    for (int x = 10; x <= 12; ++x) mask.bits[static_cast<std::size_t>(y) * 40 + x] = 1;
  }
  const auto blobs = extract_blobs(mask);
  ASSERT_EQ(blobs.size(), 1u);
  EXPECT_EQ(blobs[0].area(), 9u);
  EXPECT_DOUBLE_EQ(blobs[0].centroid.u, 11.0);
  EXPECT_DOUBLE_EQ(blobs[0].centroid.v, 21.0);
}

TEST(Blobs, EmptyMask) {
  BinaryMask mask;
  mask.width = 10;
  mask.height = 10;
  mask.bits.assign(100, 0);
  EXPECT_TRUE(extract_blobs(mask).empty());
}

TEST(Blobs, DiagonalPixelsAreSeparate) {
  BinaryMask mask;
  mask.width = 10;
  mask.height = 10;
  mask.bits.assign(100, 0);
  mask.bits[11] = mask.bits[12] = 1;
  mask.bits[23] = mask.bits[24] = 1;
  EXPECT_EQ(extract_blobs(mask).size(), 2u);
}

TEST(Blobs, GaussianSpotCentre) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(20.0, 40.0);
  for (int i = 0; i < 50; ++i) {
    GrayImage img(64, 64, 100);
    const Point2 at{pos(rng), pos(rng)};
    detail::paint_spot(img, at, 255.0, 1.2);
    const BinaryMask mask = adaptive_threshold(img);
    const auto blobs = extract_blobs(mask, {}, &img);
    ASSERT_EQ(blobs.size(), 1u);
    EXPECT_LT(distance(blobs[0].ellipse.center, at), 0.3);
  }
}

TEST(Blobs, RenderedGlintRoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const EyeState e = random_eye(rng);
    const auto truth = true_glints(e);
    const GrayImage img = render_frame(e, EyeAnatomy{}, kRig, kCam);
    const auto blobs = extract_blobs(adaptive_threshold(img), {}, &img);
    ASSERT_EQ(blobs.size(), truth.size());
    for (const auto& g : truth) {
      double best = 1e9;
      for (const auto& b : blobs) best = std::min(best, distance(b.ellipse.center, g));
      EXPECT_LT(best, 0.3);
    }
  }
}

TEST(Ellipse, DirectFitRecoversConic) {
  const Point2 c{100.5, 80.25};
  const double a = 30, b = 12, th = 0.4;
  std::vector<Point2> pts;
  for (int k = 0; k < 60; ++k) {
    const double t = 2 * kPi * k / 60.0;
    const double x = a * std::cos(t), y = b * std::sin(t);
    pts.push_back({c.u + x * std::cos(th) - y * std::sin(th), c.v + x * std::sin(th) + y * std::cos(th)});
  }
  const Ellipse e = fit_ellipse_direct(pts);
  EXPECT_NEAR(e.center.u, c.u, 1e-6);
  EXPECT_NEAR(e.center.v, c.v, 1e-6);
  EXPECT_NEAR(e.semi_major, a, 1e-6);
  EXPECT_NEAR(e.semi_minor, b, 1e-6);
  EXPECT_NEAR(std::abs(std::cos(e.angle_rad - th)), 1.0, 1e-9);
}

TEST(Ellipse, TooFewPoints) {
  const std::vector<Point2> pts{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(fit_ellipse_direct(pts), Error);
}

TEST(Pupil, FrontalCentre) {
  const EyeState e = eye_looking_at(Point3(0, 0, -500));
  const Point2 truth = project(kCam, e.pupil_center_3d);
  const Ellipse p = fit_pupil_ellipse(render_frame(e, EyeAnatomy{}, kRig, kCam));
  EXPECT_LT(distance(p.center, truth), 0.3);
  EXPECT_LT(p.eccentricity(), 0.3);
}

TEST(Pupil, EccentricCentre) {
  const EyeState e = eye_looking_at(Point3(400, 250, -600), 5, 1.5);
  const Point2 truth = project(kCam, e.pupil_center_3d);
  const Ellipse p = fit_pupil_ellipse(render_frame(e, EyeAnatomy{}, kRig, kCam));
  EXPECT_GT(p.eccentricity(), 0.0);
  EXPECT_LT(distance(p.center, truth), 0.5);
}

TEST(Pupil, AllBrightHasNoPupil) {
  const GrayImage img(64, 48, 255);
  expect_code(ErrorCode::PupilNotFound, [&] { fit_pupil_ellipse(img); });
}

TEST(Labeling, FourTrueGlints) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10; ++i) {
    const EyeState e = random_eye(rng);
    const auto truth = frame_truth(e, kRig, kCam);
    std::vector<Point2> cands;
    for (const auto& g : truth.glints) {
      if (g.present) cands.push_back(g.position);
    }
    if (cands.size() != 4) continue;
    std::reverse(cands.begin(), cands.end());
    const auto lab = label_glints(cands, kRig, kCam);
    for (int led = 0; led < 4; ++led) {
      ASSERT_TRUE(lab.assignment[led].has_value());
      EXPECT_EQ(*lab.assignment[led], static_cast<std::size_t>(3 - led));
    }
    // Off-grid depths leave at most half a grid step of residual.
    EXPECT_LT(lab.score, 1e-3);
  }
}

TEST(Labeling, OnGridCorneaScoresZero) {
  for (const Point3& c : {Point3(0, 0, 35), Point3(2, -1, 35), Point3(-3, 2, 32)}) {
    EyeState e;
    e.cornea = Sphere(c, 8.0);
    e.pupil_center_3d = c + Vec3(0, 0, -8);
    const auto truth = frame_truth(e, kRig, kCam);
    std::vector<Point2> cands;
    for (const auto& g : truth.glints) cands.push_back(g.position);
    const auto lab = label_glints(cands, kRig, kCam);
    for (std::size_t led = 0; led < 4; ++led) EXPECT_EQ(lab.assignment[led], std::optional<std::size_t>(led));
    EXPECT_LT(lab.score, 1e-6);
  }
}

TEST(Labeling, ThreeTrueGlintsLeaveLastAbsent) {
  const EyeState e = eye_looking_at(Point3(40, 20, -700), 5, 1.5);
  const auto truth = frame_truth(e, kRig, kCam);
  std::vector<Point2> cands{truth.glints[2].position, truth.glints[0].position, truth.glints[1].position};
  const auto lab = label_glints(cands, kRig, kCam);
  ASSERT_EQ(lab.assignment.size(), 4u);
  EXPECT_EQ(lab.assignment[0], std::optional<std::size_t>(1));
  EXPECT_EQ(lab.assignment[1], std::optional<std::size_t>(2));
  EXPECT_EQ(lab.assignment[2], std::optional<std::size_t>(0));
  EXPECT_FALSE(lab.assignment[3].has_value());
}

TEST(Labeling, SingleBlobIsInsufficient) {
  const std::vector<Point2> one{{320, 240}};
  expect_code(ErrorCode::InsufficientGlints, [&] { label_glints(one, kRig, kCam); });
}

TEST(Labeling, ReturnedScoreIsOptimal) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.5);
  const LabelConfig cfg;
  for (int i = 0; i < 10; ++i) {
    const EyeState e = random_eye(rng);
    const auto truth = frame_truth(e, kRig, kCam);
    std::vector<Point2> cands;
    std::vector<std::optional<std::size_t>> truth_assignment(4);
    for (const auto& g : truth.glints) {
      if (!g.present) continue;
      truth_assignment[static_cast<std::size_t>(g.led)] = cands.size();
      cands.push_back(g.position + Point2{noise(rng), noise(rng)});
    }
    cands.push_back(project(kCam, e.pupil_center_3d) + Point2{noise(rng) * 10, noise(rng) * 10});
    const auto lab = label_glints(cands, kRig, kCam, cfg);
    const auto ts = score_labeling(cands, truth_assignment, kRig, kCam, cfg);
    ASSERT_TRUE(ts.has_value());
    EXPECT_LE(lab.score, ts->first + 1e-9);
  }
}

TEST(Detect, NoiselessFrameRecoversKeypoints) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const EyeState e = random_eye(rng);
    const auto truth = frame_truth(e, kRig, kCam);
    const auto obs = detect_frame(render_frame(e, EyeAnatomy{}, kRig, kCam), kRig, kCam);
    EXPECT_LT(distance(obs.pupil_2d, truth.pupil_2d), 0.5);
    for (std::size_t led = 0; led < 4; ++led) {
      ASSERT_EQ(obs.glints[led].present, truth.glints[led].present);
      if (truth.glints[led].present) {
        EXPECT_LT(distance(obs.glints[led].position, truth.glints[led].position), 0.5);
      }
    }
    EXPECT_TRUE(obs.distractors.empty());
  }
}

TEST(Pgm, RoundTrip) {
  std::mt19937_64 rng(9);
  GrayImage img(17, 9);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  const auto path = std::filesystem::temp_directory_path() / "glintgaze_pgm_roundtrip.pgm";
  write_pgm(img, path);
  EXPECT_EQ(read_pgm(path), img);
  std::filesystem::remove(path);
}

TEST(Pgm, MissingFileThrows) {
  EXPECT_THROW(read_pgm("/nonexistent/glintgaze.pgm"), Error);
}
