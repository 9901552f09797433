#pragma once

// Optical axis from lifted cornea and pupil, and per-subject calibration of
// the optical -> visual axis map: a second-order polynomial in tangent
// coordinates, or a small fully connected network.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "glintgaze/error.hpp"
#include "glintgaze/geometry.hpp"
#include "glintgaze/rng.hpp"

namespace glintgaze {

struct Axis {
  UnitVec3 direction;
  Point3 anchor = Point3::Zero();
};

inline Point3 lift_pupil_to_3d(Point2 pupil_2d, const Point3& cornea_3d, const PinholeCamera& cam, double radius = 8.0) {
  return ray_sphere_near_intersection(back_project(cam, pupil_2d), Sphere(cornea_3d, radius));
}

inline Axis optical_axis(const Point3& cornea_3d, const Point3& pupil_3d) {
  const Vec3 d = pupil_3d - cornea_3d;
  if (d.norm() < 1e-12) throw Error(ErrorCode::CoincidentPoints, "cornea and pupil centres coincide");
  return {UnitVec3(d), cornea_3d};
}

struct CalibrationSet {
  std::vector<UnitVec3> optical;
  std::vector<UnitVec3> visual;

  void add(const UnitVec3& o, const UnitVec3& v) {
    optical.push_back(o);
    visual.push_back(v);
  }
  std::size_t size() const { return optical.size(); }
};

// ---------------------------------------------------------------------------
// Polynomial mapper.

class PolyMapper {
 public:
  using Coefficients = Eigen::Matrix<double, 6, 2>;

  PolyMapper() { coeffs_.setZero(); coeffs_(1, 0) = 1.0; coeffs_(2, 1) = 1.0; }
  explicit PolyMapper(const Coefficients& c, double residual_rms = 0.0) : coeffs_(c), residual_rms_(residual_rms) {}

  static Eigen::Matrix<double, 6, 1> basis(double x, double y) {
    Eigen::Matrix<double, 6, 1> b;
    b << 1.0, x, y, x * x, x * y, y * y;
    return b;
  }

  UnitVec3 map(const UnitVec3& optical) const {
    const double x = optical.x() / optical.z();
    const double y = optical.y() / optical.z();
    const Eigen::Vector2d t = coeffs_.transpose() * basis(x, y);
    const double s = optical.z() < 0.0 ? -1.0 : 1.0;
    return UnitVec3(s * t.x(), s * t.y(), s);
  }

  const Coefficients& coefficients() const { return coeffs_; }
  /// RMS of the tangent-coordinate residual on the calibration set.
  double residual_rms() const { return residual_rms_; }

 private:
  Coefficients coeffs_;
  double residual_rms_ = 0.0;
};

/// Least squares per output tangent coordinate over {1, x, y, x^2, xy, y^2}.
inline PolyMapper fit_poly_mapper(const CalibrationSet& calib) {
  const auto n = static_cast<Eigen::Index>(calib.size());
  if (n < 6) throw Error(ErrorCode::RankDeficient, "polynomial mapper needs at least six calibration pairs");
  Eigen::MatrixXd design(n, 6);
  Eigen::MatrixX2d target(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = calib.optical[static_cast<std::size_t>(i)];
    const auto& v = calib.visual[static_cast<std::size_t>(i)];
    design.row(i) = PolyMapper::basis(o.x() / o.z(), o.y() / o.z()).transpose();
    target.row(i) << v.x() / v.z(), v.y() / v.z();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) throw Error(ErrorCode::RankDeficient, "calibration design matrix has rank < 6");
  const PolyMapper::Coefficients coeffs = qr.solve(target);
  const double rms = std::sqrt((design * coeffs - target).squaredNorm() / static_cast<double>(n));
  return PolyMapper(coeffs, rms);
}

// ---------------------------------------------------------------------------
// Network mapper.

struct NetTrainingConfig {
  std::vector<int> hidden{96, 96, 96, 96};
  int iterations = 1000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

/// Fully connected tanh network on the unit optical axis. The output layer
/// predicts a correction added to the input before renormalization, so a
/// zero output layer is the identity map.
class NetMapper {
 public:
  NetMapper() = default;

  NetMapper(const std::vector<int>& hidden, std::uint64_t seed) {
    std::vector<int> widths{3};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(3);
    Rng rng = make_rng(seed, {0x6E37ULL});
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int in = widths[l];
      const int out = widths[l + 1];
      Eigen::MatrixXd w(out, in);
      const bool last = l + 2 == widths.size();
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = last ? 0.0 : u(rng);
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(out));
    }
  }

  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.segment(k, weights_[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
      k += weights_[l].size();
      p.segment(k, biases_[l].size()) = biases_[l];
      k += biases_[l].size();
    }
    return p;
  }

  void unflatten(const Eigen::VectorXd& p) {
    if (p.size() != static_cast<Eigen::Index>(parameter_count())) {
      throw Error(ErrorCode::InvalidArgument, "parameter vector size mismatch");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) = p.segment(k, weights_[l].size());
      k += weights_[l].size();
      biases_[l] = p.segment(k, biases_[l].size());
      k += biases_[l].size();
    }
  }

  /// Columns of `x` are unit optical axes; returns unnormalized outputs.
  Eigen::MatrixXd forward_raw(const Eigen::MatrixXd& x, std::vector<Eigen::MatrixXd>* activations = nullptr) const {
    Eigen::MatrixXd h = x;
    if (activations) activations->assign(1, x);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l] * h;
      z.colwise() += biases_[l];
      const bool last = l + 1 == weights_.size();
      h = last ? z : Eigen::MatrixXd(z.array().tanh());
      if (activations) activations->push_back(h);
    }
    return x + h;
  }

  UnitVec3 map(const UnitVec3& optical) const {
    const Eigen::MatrixXd y = forward_raw(optical.vec());
    return UnitVec3(Vec3(y.col(0)));
  }

  /// Mean (1 - cos) loss over the set; fills the gradient with respect to the
  /// flattened parameters when `grad` is given.
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, Eigen::VectorXd* grad) const {
    std::vector<Eigen::MatrixXd> acts;
    const Eigen::MatrixXd y = forward_raw(x, grad ? &acts : nullptr);
    const double n = static_cast<double>(x.cols());
    const Eigen::RowVectorXd norms = y.colwise().norm();
    const Eigen::MatrixXd yhat = y.array().rowwise() / norms.array();
    const Eigen::RowVectorXd cosines = (yhat.array() * target.array()).colwise().sum();
    const double loss = (1.0 - cosines.array()).mean();
    if (!grad) return loss;

    // d loss / d y = -(t - cos * yhat) / (n |y|)
    Eigen::MatrixXd delta = -(target - yhat * cosines.asDiagonal());
    delta = delta.array().rowwise() / (norms.array() * n);

    grad->resize(static_cast<Eigen::Index>(parameter_count()));
    std::vector<Eigen::MatrixXd> dw(weights_.size());
    std::vector<Eigen::VectorXd> db(weights_.size());
    for (std::size_t l = weights_.size(); l-- > 0;) {
      // delta is d loss / d z_l (pre-activation of layer l).
      dw[l] = delta * acts[l].transpose();
      db[l] = delta.rowwise().sum();
      if (l > 0) {
        Eigen::MatrixXd back = weights_[l].transpose() * delta;
        delta = back.array() * (1.0 - acts[l].array().square());
      }
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      grad->segment(k, dw[l].size()) = Eigen::Map<const Eigen::VectorXd>(dw[l].data(), dw[l].size());
      k += dw[l].size();
      grad->segment(k, db[l].size()) = db[l];
      k += db[l].size();
    }
    return loss;
  }

  double final_training_loss = 0.0;

 private:
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

inline void calibration_matrices(const CalibrationSet& calib, Eigen::MatrixXd& x, Eigen::MatrixXd& t) {
  const auto n = static_cast<Eigen::Index>(calib.size());
  x.resize(3, n);
  t.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i) = calib.optical[static_cast<std::size_t>(i)].vec();
    t.col(i) = calib.visual[static_cast<std::size_t>(i)].vec();
  }
}

/// Full-batch Adam on the mean cosine loss for a fixed iteration budget.
inline NetMapper fit_net_mapper(const CalibrationSet& calib, const NetTrainingConfig& cfg = {}) {
  if (calib.size() < 9) throw Error(ErrorCode::InvalidArgument, "network mapper needs at least nine calibration pairs");
  Eigen::MatrixXd x, t;
  calibration_matrices(calib, x, t);
  NetMapper net(cfg.hidden, cfg.seed);
  Eigen::VectorXd p = net.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p.size());
  Eigen::VectorXd g;
  double b1t = 1.0, b2t = 1.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double loss = net.loss_and_gradient(x, t, &g);
    if (!std::isfinite(loss) || !g.allFinite()) {
      throw Error(ErrorCode::NonFinite, "network loss became non-finite at iteration " + std::to_string(it));
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const Eigen::VectorXd mhat = m / (1.0 - b1t);
    const Eigen::VectorXd vhat = v / (1.0 - b2t);
    p -= cfg.learning_rate * (mhat.array() / (vhat.array().sqrt() + cfg.epsilon)).matrix();
    net.unflatten(p);
  }
  net.final_training_loss = net.loss_and_gradient(x, t, nullptr);
  if (!std::isfinite(net.final_training_loss)) throw Error(ErrorCode::NonFinite, "final network loss is non-finite");
  return net;
}

// ---------------------------------------------------------------------------

using GazeMapper = std::variant<PolyMapper, NetMapper>;

inline Axis map_gaze(const GazeMapper& mapper, const Axis& optical) {
  const UnitVec3 d = std::visit([&](const auto& m) { return m.map(optical.direction); }, mapper);
  return {d, optical.anchor};
}

}  // namespace glintgaze
