#pragma once

// Classical appearance stage: synthetic IR eye images, histogram thresholding,
// connected components, ellipse fits and glint labeling by back-projection.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "glintgaze/cornea.hpp"
#include "glintgaze/error.hpp"
#include "glintgaze/eye_sim.hpp"
#include "glintgaze/geometry.hpp"

namespace glintgaze {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255).

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string discard;
        std::getline(in, discard);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  if (next_token() != "P5") throw Error(ErrorCode::Parse, "'" + path.string() + "' is not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::Parse, "malformed PGM header in '" + path.string() + "'");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::Parse, "unsupported PGM in '" + path.string() + "'");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorCode::Parse, "truncated PGM '" + path.string() + "'");
  }
  return img;
}

// ---------------------------------------------------------------------------
// Rendering.

struct RenderConfig {
  std::uint8_t background = 100;
  std::uint8_t sclera = 140;
  std::uint8_t iris = 70;
  std::uint8_t pupil = 15;
  double glint_peak = 255.0;
  double glint_sigma = 1.2;  // px
};

/// Image-space ellipse (centre, semi-axes, orientation of the first axis).
struct Ellipse {
  Point2 center;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle_rad = 0.0;

  double eccentricity() const {
    if (semi_major <= 0.0) return 0.0;
    const double ratio = semi_minor / semi_major;
    return std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
  }
};

namespace detail {

/// Disc of `radius` at `center` with `normal`, imaged through the projection's
/// local linearization at the centre. The ellipse centre is project(center).
struct ProjectedDisc {
  Point2 center;
  Eigen::Matrix2d inverse_shape;  // maps image offsets to unit-disc coordinates

  bool contains(double u, double v) const {
    const Eigen::Vector2d q = inverse_shape * Eigen::Vector2d(u - center.u, v - center.v);
    return q.squaredNorm() <= 1.0;
  }
};

inline ProjectedDisc project_disc(const PinholeCamera& cam, const Point3& center, const Vec3& normal, double radius) {
  Vec3 a1 = normal.unitOrthogonal();
  Vec3 a2 = normal.normalized().cross(a1);
  const double z = center.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.focal_px / z, 0.0, -cam.focal_px * center.x() / (z * z), 0.0, cam.focal_px / z,
      -cam.focal_px * center.y() / (z * z);
  Eigen::Matrix<double, 3, 2> basis;
  basis.col(0) = a1;
  basis.col(1) = a2;
  const Eigen::Matrix2d shape = radius * jac * basis;
  return {project(cam, center), shape.inverse()};
}

inline void paint_spot(GrayImage& img, Point2 at, double peak, double sigma) {
  const int reach = static_cast<int>(std::ceil(4.0 * sigma));
  const int cx = static_cast<int>(std::lround(at.u));
  const int cy = static_cast<int>(std::lround(at.v));
  for (int y = cy - reach; y <= cy + reach; ++y) {
    for (int x = cx - reach; x <= cx + reach; ++x) {
      if (!img.inside(x, y)) continue;
      const double d2 = (x - at.u) * (x - at.u) + (y - at.v) * (y - at.v);
      const double value = std::round(peak * std::exp(-d2 / (2.0 * sigma * sigma)));
      const auto v = static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
      img.at(x, y) = std::max(img.at(x, y), v);
    }
  }
}

}  // namespace detail

/// Deterministic synthetic IR frame: background, sclera, iris and pupil discs,
/// Gaussian glints at the true glint projections plus any extra spots.
inline GrayImage render_frame(const EyeState& eye, const EyeAnatomy& anatomy, const LedRig& rig,
                              const PinholeCamera& cam, std::span<const Point2> extra_spots = {},
                              const RenderConfig& cfg = {}) {
  GrayImage img(cam.width, cam.height, cfg.background);
  const auto sclera = detail::project_disc(cam, eye.eyeball_center, Vec3(0.0, 0.0, -1.0), anatomy.eyeball_radius);
  const auto iris = detail::project_disc(cam, eye.pupil_center_3d, eye.optical_axis.vec(), anatomy.iris_radius);
  const auto pupil = detail::project_disc(cam, eye.pupil_center_3d, eye.optical_axis.vec(), anatomy.pupil_radius);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      std::uint8_t v = cfg.background;
      if (pupil.contains(x, y)) {
        v = cfg.pupil;
      } else if (iris.contains(x, y)) {
        v = cfg.iris;
      } else if (sclera.contains(x, y)) {
        v = cfg.sclera;
      }
      img.at(x, y) = v;
    }
  }
  const FrameTruth truth = frame_truth(eye, rig, cam);
  for (const auto& g : truth.glints) {
    if (g.present) detail::paint_spot(img, g.position, cfg.glint_peak, cfg.glint_sigma);
  }
  for (const auto& p : extra_spots) detail::paint_spot(img, p, cfg.glint_peak, cfg.glint_sigma);
  return img;
}

// ---------------------------------------------------------------------------
// Thresholding and blobs.

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  int threshold = 255;  // pixels strictly above it are set

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
};

/// Histogram knee: the smallest T such that pixels brighter than T make up at
/// most `bright_fraction` of the image.
inline BinaryMask adaptive_threshold(const GrayImage& img, double bright_fraction = 0.005) {
  std::array<std::size_t, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  const double budget = bright_fraction * static_cast<double>(img.pixels.size());
  std::size_t above = img.pixels.size();
  int threshold = 255;
  for (int t = 0; t < 256; ++t) {
    above -= hist[static_cast<std::size_t>(t)];  // pixels > t
    if (static_cast<double>(above) <= budget) {
      threshold = t;
      break;
    }
  }
  BinaryMask mask;
  mask.width = img.width;
  mask.height = img.height;
  mask.threshold = threshold;
  mask.bits.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.bits[i] = img.pixels[i] > threshold ? 1 : 0;
  return mask;
}

struct Blob {
  std::vector<std::array<int, 2>> pixels;
  Point2 centroid;
  Ellipse ellipse;  // second-moment fit, centred on the centroid
  double mean_intensity = 0.0;

  std::size_t area() const { return pixels.size(); }
};

struct BlobConfig {
  std::size_t min_area = 2;
  std::size_t max_area = 100;
};

/// 4-connected components within the area bounds, in raster order of their
/// first pixel. With an image, centroid and moments are weighted by the
/// intensity above the mask threshold.
inline std::vector<Blob> extract_blobs(const BinaryMask& mask, const BlobConfig& cfg = {},
                                       const GrayImage* image = nullptr) {
  std::vector<Blob> blobs;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::array<int, 2>> stack;
  for (int y0 = 0; y0 < mask.height; ++y0) {
    for (int x0 = 0; x0 < mask.width; ++x0) {
      const std::size_t idx0 = static_cast<std::size_t>(y0) * mask.width + x0;
      if (!mask.bits[idx0] || seen[idx0]) continue;
      Blob blob;
      stack.clear();
      stack.push_back({x0, y0});
      seen[idx0] = 1;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        blob.pixels.push_back({x, y});
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = x + dx[k];
          const int ny = y + dy[k];
          if (!mask.inside(nx, ny)) continue;
          const std::size_t idx = static_cast<std::size_t>(ny) * mask.width + nx;
          if (mask.bits[idx] && !seen[idx]) {
            seen[idx] = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      if (blob.area() < cfg.min_area || blob.area() > cfg.max_area) continue;
      std::sort(blob.pixels.begin(), blob.pixels.end(),
                [](const auto& a, const auto& b) { return a[1] != b[1] ? a[1] < b[1] : a[0] < b[0]; });

      double wsum = 0.0, mx = 0.0, my = 0.0, isum = 0.0;
      for (const auto& [x, y] : blob.pixels) {
        const double w = image ? std::max(0.0, double(image->at(x, y)) - mask.threshold) : 1.0;
        if (image) isum += image->at(x, y);
        wsum += w;
        mx += w * x;
        my += w * y;
      }
      if (!(wsum > 0.0)) continue;
      mx /= wsum;
      my /= wsum;
      double sxx = 0.0, sxy = 0.0, syy = 0.0;
      for (const auto& [x, y] : blob.pixels) {
        const double w = image ? std::max(0.0, double(image->at(x, y)) - mask.threshold) : 1.0;
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
      }
      sxx /= wsum;
      sxy /= wsum;
      syy /= wsum;
      const double tr = sxx + syy;
      const double det = sxx * syy - sxy * sxy;
      const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
      const double l1 = tr / 2.0 + disc;
      const double l2 = std::max(0.0, tr / 2.0 - disc);
      blob.centroid = {mx, my};
      // Uniform ellipse of semi-axis a has variance a^2/4 along that axis.
      blob.ellipse = {blob.centroid, 2.0 * std::sqrt(l1), 2.0 * std::sqrt(l2), 0.5 * std::atan2(2.0 * sxy, sxx - syy)};
      blob.mean_intensity = image ? isum / static_cast<double>(blob.area()) : 0.0;
      blobs.push_back(std::move(blob));
    }
  }
  return blobs;
}

// ---------------------------------------------------------------------------
// Pupil.

/// Direct least-squares ellipse fit (Fitzgibbon's ellipse-specific
/// constraint, in the numerically stable block form of Halir and Flusser).
inline Ellipse fit_ellipse_direct(std::span<const Point2> points) {
  if (points.size() < 6) throw Error(ErrorCode::InvalidArgument, "ellipse fit needs at least six points");
  double mu = 0.0, mv = 0.0;
  for (const auto& p : points) {
    mu += p.u;
    mv += p.v;
  }
  mu /= static_cast<double>(points.size());
  mv /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale += std::hypot(p.u - mu, p.v - mv);
  scale /= static_cast<double>(points.size());
  if (!(scale > 0.0)) throw Error(ErrorCode::DegenerateGeometry, "ellipse points are coincident");

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixX3d quad(n, 3), lin(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = (points[static_cast<std::size_t>(i)].u - mu) / scale;
    const double y = (points[static_cast<std::size_t>(i)].v - mv) / scale;
    quad.row(i) << x * x, x * y, y * y;
    lin.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = quad.transpose() * quad;
  const Eigen::Matrix3d s2 = quad.transpose() * lin;
  const Eigen::Matrix3d s3 = lin.transpose() * lin;
  const Eigen::Matrix3d t = -s3.ldlt().solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  Eigen::Vector3d a1 = Eigen::Vector3d::Zero();
  bool found = false;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    if (4.0 * v(0) * v(2) - v(1) * v(1) > 0.0) {
      a1 = v;
      found = true;
      break;
    }
  }
  if (!found) throw Error(ErrorCode::DegenerateGeometry, "no ellipse-constrained conic fits the points");
  const Eigen::Vector3d a2 = t * a1;
  const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);

  const double den = 4.0 * A * C - B * B;
  const double xc = (B * E - 2.0 * C * D) / den;
  const double yc = (B * D - 2.0 * A * E) / den;
  const double fc = A * xc * xc + B * xc * yc + C * yc * yc + D * xc + E * yc + F;
  Eigen::Matrix2d q;
  q << A, B / 2.0, B / 2.0, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qs(q);
  const double l_small = qs.eigenvalues()(0);
  const double l_big = qs.eigenvalues()(1);
  const double major = std::sqrt(std::abs(fc / l_small));
  const double minor = std::sqrt(std::abs(fc / l_big));
  const Eigen::Vector2d major_dir = qs.eigenvectors().col(0);
  Ellipse e;
  e.center = {mu + scale * xc, mv + scale * yc};
  e.semi_major = scale * major;
  e.semi_minor = scale * minor;
  e.angle_rad = std::atan2(major_dir.y(), major_dir.x());
  return e;
}

struct PupilConfig {
  int dark_offset = 25;          // dark threshold above the darkest populated level
  std::size_t min_area = 50;     // px
  double glint_exclusion_px = 4.5;
  double bright_fraction = 0.005;
};

/// Pupil ellipse from the largest dark component. Boundary samples are edge
/// midpoints; samples near bright spots are dropped since glints notch the
/// pupil outline.
inline Ellipse fit_pupil_ellipse(const GrayImage& img, const PupilConfig& cfg = {}) {
  int darkest = 255;
  for (auto p : img.pixels) darkest = std::min<int>(darkest, p);
  const int dark_t = darkest + cfg.dark_offset;
  BinaryMask dark;
  dark.width = img.width;
  dark.height = img.height;
  dark.threshold = dark_t;
  dark.bits.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) dark.bits[i] = img.pixels[i] <= dark_t ? 1 : 0;
  BlobConfig bc;
  bc.min_area = cfg.min_area;
  bc.max_area = std::numeric_limits<std::size_t>::max();
  auto comps = extract_blobs(dark, bc);
  // Uniform darkness (e.g. an all-bright image) is not a pupil.
  if (comps.empty() || darkest >= 255 - cfg.dark_offset) throw Error(ErrorCode::PupilNotFound, "no dark component");
  const Blob& pupil = *std::max_element(comps.begin(), comps.end(),
                                        [](const Blob& a, const Blob& b) { return a.area() < b.area(); });
  if (pupil.area() == img.pixels.size()) throw Error(ErrorCode::PupilNotFound, "dark region fills the image");

  std::vector<std::uint8_t> member(img.pixels.size(), 0);
  for (const auto& [x, y] : pupil.pixels) member[static_cast<std::size_t>(y) * img.width + x] = 1;

  const BinaryMask bright = adaptive_threshold(img, cfg.bright_fraction);
  std::vector<std::array<int, 2>> bright_px;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (bright.at(x, y) && img.at(x, y) > dark_t) bright_px.push_back({x, y});
    }
  }
  const double excl2 = cfg.glint_exclusion_px * cfg.glint_exclusion_px;
  auto near_bright = [&](double u, double v) {
    for (const auto& [bx, by] : bright_px) {
      if ((bx - u) * (bx - u) + (by - v) * (by - v) <= excl2) return true;
    }
    return false;
  };

  std::vector<Point2> boundary;
  for (const auto& [x, y] : pupil.pixels) {
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (img.inside(nx, ny) && member[static_cast<std::size_t>(ny) * img.width + nx]) continue;
      const Point2 mid{x + 0.5 * dx[k], y + 0.5 * dy[k]};
      if (near_bright(mid.u, mid.v)) continue;
      boundary.push_back(mid);
    }
  }
  if (boundary.size() < 6) throw Error(ErrorCode::PupilNotFound, "pupil boundary too small");
  return fit_ellipse_direct(boundary);
}

// ---------------------------------------------------------------------------
// Glint labeling.

struct LabelConfig {
  double absent_penalty_mm = 0.25;  // score added per LED left unassigned
  std::size_t max_candidates = 8;
  LiftConfig lift{8.0, 10.0, 50.0, 0.001, true, 400, RayExtent::Line};
};

struct GlintLabeling {
  std::vector<std::optional<std::size_t>> assignment;  // per LED, index into the candidates
  double score = std::numeric_limits<double>::infinity();  // mm
  double led_loss = 0.0;                                    // mm^2

  std::size_t assigned() const {
    return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(), [](const auto& a) { return a.has_value(); }));
  }
};

/// Score of one labeling hypothesis: RMS reflected-ray distance to the LEDs
/// after solving and lifting the cornea, plus a penalty per absent LED.
/// nullopt if the hypothesis admits no cornea solution.
inline std::optional<std::pair<double, double>> score_labeling(std::span<const Point2> candidates,
                                                               std::span<const std::optional<std::size_t>> assignment,
                                                               const LedRig& rig, const PinholeCamera& cam,
                                                               const LabelConfig& cfg) {
  std::vector<LabeledGlint> glints;
  for (std::size_t led = 0; led < assignment.size(); ++led) {
    if (assignment[led]) glints.push_back({static_cast<int>(led), candidates[*assignment[led]]});
  }
  if (glints.size() < 2) return std::nullopt;
  try {
    const Ray3 ray = cornea_ray_from_glints(glints, rig, cam);
    const LiftResult lift = lift_cornea_to_3d(cornea_2d_from_ray(ray, cam), glints, rig, cam, cfg.lift);
    const double n = static_cast<double>(glints.size());
    const double absent = static_cast<double>(assignment.size() - glints.size());
    return std::make_pair(std::sqrt(2.0 * lift.loss / n) + cfg.absent_penalty_mm * absent, lift.loss);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Exhaustive search over injective blob-to-LED assignments with at least two
/// LEDs assigned; returns the minimum-score hypothesis.
inline GlintLabeling label_glints(std::span<const Point2> candidates, const LedRig& rig, const PinholeCamera& cam,
                                  const LabelConfig& cfg = {}) {
  if (candidates.size() < 2) throw Error(ErrorCode::InsufficientGlints, "labeling needs two or more glint candidates");
  const std::size_t m = std::min(candidates.size(), cfg.max_candidates);
  GlintLabeling best;
  best.assignment.assign(rig.size(), std::nullopt);
  std::vector<std::optional<std::size_t>> current(rig.size());
  std::vector<bool> used(m, false);

  auto recurse = [&](auto&& self, std::size_t led) -> void {
    if (led == rig.size()) {
      if (auto s = score_labeling(candidates, current, rig, cam, cfg); s && s->first < best.score) {
        best.score = s->first;
        best.led_loss = s->second;
        best.assignment = current;
      }
      return;
    }
    current[led] = std::nullopt;
    self(self, led + 1);
    for (std::size_t b = 0; b < m; ++b) {
      if (used[b]) continue;
      used[b] = true;
      current[led] = b;
      self(self, led + 1);
      used[b] = false;
    }
    current[led] = std::nullopt;
  };
  recurse(recurse, 0);
  if (!std::isfinite(best.score)) throw Error(ErrorCode::InsufficientGlints, "no labeling hypothesis is solvable");
  return best;
}

inline GlintLabeling label_glints(std::span<const Blob> blobs, const LedRig& rig, const PinholeCamera& cam,
                                  const LabelConfig& cfg = {}) {
  std::vector<Point2> centres;
  for (const auto& b : blobs) centres.push_back(b.ellipse.center);
  return label_glints(centres, rig, cam, cfg);
}

struct DetectConfig {
  double bright_fraction = 0.005;
  BlobConfig blobs;
  PupilConfig pupil;
  LabelConfig labeling;
};

/// Full classical detection of one image into the observation schema. The
/// pupil is required; glints are labeled when two or more blobs are found.
inline FrameObservation detect_frame(const GrayImage& img, const LedRig& rig, const PinholeCamera& cam,
                                     const DetectConfig& cfg = {}) {
  FrameObservation obs;
  const Ellipse pupil = fit_pupil_ellipse(img, cfg.pupil);
  obs.pupil_present = true;
  obs.pupil_2d = pupil.center;
  obs.glints.resize(rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) obs.glints[i].led = static_cast<int>(i);

  const BinaryMask mask = adaptive_threshold(img, cfg.bright_fraction);
  auto blobs = extract_blobs(mask, cfg.blobs, &img);
  // Keep the brightest candidates when there are too many.
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.mean_intensity > b.mean_intensity; });
  if (blobs.size() > cfg.labeling.max_candidates) blobs.resize(cfg.labeling.max_candidates);
  if (blobs.size() < 2) {
    for (const auto& b : blobs) obs.distractors.push_back(b.ellipse.center);
    return obs;
  }
  const GlintLabeling labeling = label_glints(std::span<const Blob>(blobs), rig, cam, cfg.labeling);
  std::vector<bool> taken(blobs.size(), false);
  for (std::size_t led = 0; led < rig.size(); ++led) {
    if (const auto& a = labeling.assignment[led]) {
      obs.glints[led].present = true;
      obs.glints[led].position = blobs[*a].ellipse.center;
      taken[*a] = true;
    }
  }
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    if (!taken[b]) obs.distractors.push_back(blobs[b].ellipse.center);
  }
  return obs;
}

}  // namespace glintgaze
