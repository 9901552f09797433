#pragma once

// Elementary camera-centred geometry. All lengths are millimetres, the
// camera centre is the origin and +z looks into the scene.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <sstream>
#include <string>

#include "glintgaze/error.hpp"

namespace glintgaze {

using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;

struct Point2 {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.u + b.u, a.v + b.v}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.u - b.u, a.v - b.v}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.u, s * a.v}; }
inline double norm(Point2 a) { return std::hypot(a.u, a.v); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline bool is_finite(Point2 p) { return std::isfinite(p.u) && std::isfinite(p.v); }

/// Direction with unit Euclidean norm. Construction normalizes; a zero or
/// non-finite input is rejected.
class UnitVec3 {
 public:
  UnitVec3() : v_(0.0, 0.0, 1.0) {}

  explicit UnitVec3(const Vec3& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidArgument, "cannot normalize zero or non-finite vector");
    }
    v_ = v / n;
  }

  UnitVec3(double x, double y, double z) : UnitVec3(Vec3(x, y, z)) {}

  const Vec3& vec() const noexcept { return v_; }
  double x() const noexcept { return v_.x(); }
  double y() const noexcept { return v_.y(); }
  double z() const noexcept { return v_.z(); }
  double dot(const UnitVec3& o) const noexcept { return v_.dot(o.v_); }
  UnitVec3 operator-() const { return UnitVec3::trusted(-v_); }

  /// Wraps a vector already known to be unit (e.g. an orthonormal basis column).
  static UnitVec3 trusted(const Vec3& v) {
    UnitVec3 u;
    u.v_ = v;
    return u;
  }

 private:
  Vec3 v_;
};

struct Ray3 {
  Point3 origin = Point3::Zero();
  UnitVec3 direction;

  Point3 at(double t) const { return origin + t * direction.vec(); }
};

struct Sphere {
  Point3 center = Point3::Zero();
  double radius = 8.0;

  Sphere() = default;
  Sphere(const Point3& c, double r) : center(c), radius(r) {
    if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
  }
};

struct PinholeCamera {
  double focal_px = 600.0;
  Point2 principal{320.0, 240.0};
  int width = 640;
  int height = 480;

  void validate() const {
    if (!(focal_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "focal length must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (principal.u < 0.0 || principal.u > width || principal.v < 0.0 || principal.v > height) {
      throw Error(ErrorCode::InvalidArgument, "principal point outside image");
    }
  }

  bool contains(Point2 q) const {
    return q.u >= 0.0 && q.v >= 0.0 && q.u <= width - 1.0 && q.v <= height - 1.0;
  }
};

inline Point2 project(const PinholeCamera& cam, const Point3& p) {
  if (!(p.z() > 0.0)) {
    std::ostringstream os;
    os << "point depth " << p.z() << " mm is not in front of the camera";
    throw Error(ErrorCode::NonPositiveDepth, os.str());
  }
  return {cam.focal_px * (p.x() / p.z()) + cam.principal.u,
          cam.focal_px * (p.y() / p.z()) + cam.principal.v};
}

inline UnitVec3 back_project(const PinholeCamera& cam, Point2 q) {
  return UnitVec3((q.u - cam.principal.u) / cam.focal_px, (q.v - cam.principal.v) / cam.focal_px, 1.0);
}

/// Homogeneous image of a 3D point, (f x + cu z, f y + cv z, z). Points in the
/// camera plane (z = 0) map to image points at infinity, which is how the
/// default LED rig (mounted around the lens) appears in the image.
inline Vec3 project_homogeneous(const PinholeCamera& cam, const Point3& p) {
  return {cam.focal_px * p.x() + cam.principal.u * p.z(), cam.focal_px * p.y() + cam.principal.v * p.z(), p.z()};
}

/// Near (camera-facing) intersection of a ray from the camera centre with a
/// sphere: t* = g.C - sqrt((g.C)^2 - (C.C - r^2)), falling back to the far
/// root only when the camera sits inside the sphere.
inline Point3 ray_sphere_near_intersection(const UnitVec3& ray_dir, const Sphere& sphere) {
  const Vec3& g = ray_dir.vec();
  const Vec3& c = sphere.center;
  const double b = g.dot(c);
  const double disc = b * b - (c.squaredNorm() - sphere.radius * sphere.radius);
  if (disc < 0.0) throw Error(ErrorCode::NoIntersection, "ray misses sphere");
  const double sq = std::sqrt(disc);
  const double t_near = b - sq;
  const double t_far = b + sq;
  if (t_near > 0.0) return g * t_near;
  if (t_far > 0.0) return g * t_far;
  throw Error(ErrorCode::BehindCamera, "both sphere intersections are behind the camera");
}

inline Point3 ray_sphere_near_intersection(const Ray3& ray, const Sphere& sphere) {
  if (ray.origin.norm() != 0.0) {
    Sphere shifted(sphere.center - ray.origin, sphere.radius);
    return ray.origin + ray_sphere_near_intersection(ray.direction, shifted);
  }
  return ray_sphere_near_intersection(ray.direction, sphere);
}

/// r = 2 (n.g) n - g. Involutive; preserves the angle to the normal.
inline UnitVec3 reflect_about_normal(const UnitVec3& incoming, const UnitVec3& normal) {
  const Vec3& g = incoming.vec();
  const Vec3& n = normal.vec();
  return UnitVec3(2.0 * n.dot(g) * n - g);
}

/// Inward unit normal (C - G)/|C - G| at a point on the sphere.
inline UnitVec3 surface_normal(const Sphere& sphere, const Point3& g, double tolerance_mm = 1e-6) {
  const Vec3 d = sphere.center - g;
  if (std::abs(d.norm() - sphere.radius) > tolerance_mm) {
    throw Error(ErrorCode::OffSurface, "point is not on the sphere surface");
  }
  return UnitVec3(d);
}

enum class RayExtent { Line, HalfLine };

/// |(G - L) - [(G - L).r] r|: distance from L to the line through G along r.
/// With RayExtent::HalfLine only points G + s r, s >= 0, are considered.
inline double point_to_ray_distance(const Point3& point, const Point3& ray_origin, const UnitVec3& dir,
                                    RayExtent extent = RayExtent::Line) {
  const Vec3 w = ray_origin - point;
  const double along = w.dot(dir.vec());
  if (extent == RayExtent::HalfLine && along > 0.0) return w.norm();
  return (w - along * dir.vec()).norm();
}

struct NullRaySolution {
  UnitVec3 direction;
  Eigen::Vector3d singular_values = Eigen::Vector3d::Zero();  // descending
};

/// Unit v minimizing sum (n_i . v)^2, i.e. the right singular vector of the
/// stacked normals with the smallest singular value, oriented into the scene.
inline NullRaySolution solve_null_ray_detailed(std::span<const Vec3> plane_normals, std::size_t min_count = 2) {
  if (plane_normals.size() < min_count || plane_normals.size() < 2) {
    throw Error(ErrorCode::InsufficientConstraints, "need at least two plane normals");
  }
  Eigen::MatrixX3d stacked(static_cast<Eigen::Index>(plane_normals.size()), 3);
  for (std::size_t i = 0; i < plane_normals.size(); ++i) {
    stacked.row(static_cast<Eigen::Index>(i)) = plane_normals[i].transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(stacked, Eigen::ComputeFullV);
  // Rows < 3 give fewer singular values; pad with zeros.
  Eigen::Vector3d sv = Eigen::Vector3d::Zero();
  sv.head(svd.singularValues().size()) = svd.singularValues();
  if (!(sv(0) > 0.0) || (sv(1) - sv(2)) <= 1e-9 * sv(0)) {
    throw Error(ErrorCode::DegenerateSystem, "null direction is not unique");
  }
  Vec3 v = svd.matrixV().col(2);
  if (v.z() < 0.0) v = -v;
  return {UnitVec3(v), sv};
}

inline UnitVec3 solve_null_ray(std::span<const Vec3> plane_normals, std::size_t min_count = 2) {
  return solve_null_ray_detailed(plane_normals, min_count).direction;
}

constexpr double kPi = 3.14159265358979323846;
constexpr double deg_to_rad(double d) { return d * kPi / 180.0; }
constexpr double rad_to_deg(double r) { return r * 180.0 / kPi; }

inline double angle_between(const Vec3& a, const Vec3& b) {
  // atan2 form keeps precision for nearly parallel vectors.
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace glintgaze
