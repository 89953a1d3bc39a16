#pragma once

// SE(3) / se(3) algebra and concentrated-Gaussian pose uncertainty.
//
// Conventions used throughout the library:
//   - a twist is the 6-vector [phi; rho], rotation part first;
//   - pose uncertainty is right-multiplicative, T_hat = T * exp(xi)
//     with xi ~ N(0, Q) and Q expressed in [phi; rho] block ordering.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

namespace icpcov {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Small rigid motion: rotation phi (radians), translation rho (meters).
struct Twist {
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();
  Eigen::Vector3d rho = Eigen::Vector3d::Zero();

  Twist() = default;
  Twist(const Eigen::Vector3d& phi_in, const Eigen::Vector3d& rho_in)
      : phi(phi_in), rho(rho_in) {}
  explicit Twist(const Vector6d& v) : phi(v.head<3>()), rho(v.tail<3>()) {}

  Vector6d vector() const {
    Vector6d v;
    v << phi, rho;
    return v;
  }
};

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t)
      : rotation(r), translation(t) {}

  static Pose Identity() { return Pose(); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static Pose FromMatrix(const Eigen::Matrix4d& m) {
    return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

inline Pose inverse(const Pose& t) {
  Eigen::Matrix3d rt = t.rotation.transpose();
  return Pose(rt, -(rt * t.translation));
}

inline Eigen::Matrix4d hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.phi);
  m.topRightCorner<3, 1>() = xi.rho;
  return m;
}

namespace detail {

// Rotation and the left Jacobian V share the coefficient functions
//   a = sin(t)/t,  b = (1-cos(t))/t^2,  c = (t-sin(t))/t^3,
// expanded in series below the small-angle threshold.
struct SO3Coeffs {
  double a, b, c;
};

inline SO3Coeffs so3_coeffs(double theta) {
  SO3Coeffs k;
  if (theta < 1e-8) {
    const double t2 = theta * theta;
    k.a = 1.0 - t2 / 6.0;
    k.b = 0.5 - t2 / 24.0;
    k.c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double t2 = theta * theta;
    k.a = std::sin(theta) / theta;
    k.b = (1.0 - std::cos(theta)) / t2;
    k.c = (theta - std::sin(theta)) / (t2 * theta);
  }
  return k;
}

}  // namespace detail

inline Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const auto k = detail::so3_coeffs(theta);
  const Eigen::Matrix3d px = skew(phi);
  return Eigen::Matrix3d::Identity() + k.a * px + k.b * px * px;
}

inline Eigen::Matrix3d left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const auto k = detail::so3_coeffs(theta);
  const Eigen::Matrix3d px = skew(phi);
  return Eigen::Matrix3d::Identity() + k.b * px + k.c * px * px;
}

inline Pose exp(const Twist& xi) {
  return Pose(rotation_exp(xi.phi), left_jacobian(xi.phi) * xi.rho);
}

inline Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta > M_PI - 1e-6) {
    throw Error("rotation_log: angle too close to pi, log map is singular");
  }
  Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    // w = 2 sin(theta) * axis; sin(theta)/theta ~ 1 - theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * w;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

inline Twist log(const Pose& t) {
  const Eigen::Vector3d phi = rotation_log(t.rotation);
  const Eigen::Matrix3d v_inv = left_jacobian(phi).inverse();
  return Twist(phi, v_inv * t.translation);
}

// 6x6 adjoint in [phi; rho] ordering: hat(adjoint(T) xi) = T hat(xi) T^{-1}.
inline Matrix6d adjoint(const Pose& t) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = t.rotation;
  ad.bottomRightCorner<3, 3>() = t.rotation;
  ad.bottomLeftCorner<3, 3>() = skew(t.translation) * t.rotation;
  return ad;
}

// Lower-triangular Cholesky factor with jitter retries on indefiniteness.
inline Matrix6d cholesky_factor(const Matrix6d& q) {
  if (q.isZero(0.0)) return Matrix6d::Zero();
  for (double jitter : {0.0, 1e-12, 1e-9}) {
    Matrix6d m = q + jitter * Matrix6d::Identity();
    Eigen::LLT<Matrix6d> llt(m);
    if (llt.info() == Eigen::Success) {
      return llt.matrixL();
    }
  }
  throw Error("cholesky_factor: matrix is not positive semi-definite");
}

// Concentrated Gaussian on SE(3): mean * exp(xi), xi ~ N(0, cov).
struct PoseGaussian {
  Pose mean;
  Matrix6d cov = Matrix6d::Zero();

  PoseGaussian() = default;
  PoseGaussian(const Pose& m, const Matrix6d& q) : mean(m), cov(q) {}
};

inline Pose sample_concentrated(const PoseGaussian& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector6d z;
  for (int i = 0; i < 6; ++i) z(i) = gauss(rng);
  const Matrix6d l = cholesky_factor(g.cov);
  return compose(g.mean, exp(Twist(l * z)));
}

// First-order compounding: transports the first covariance through the
// second mean and adds.
inline PoseGaussian compound_gaussians(const PoseGaussian& a, const PoseGaussian& b) {
  const Matrix6d ad = adjoint(inverse(b.mean));
  PoseGaussian out;
  out.mean = compose(a.mean, b.mean);
  out.cov = ad * a.cov * ad.transpose() + b.cov;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

inline Matrix6d symmetrize(const Matrix6d& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace icpcov
