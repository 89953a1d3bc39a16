#pragma once

// ICP output covariance: closed-form sensor-noise term (white noise +
// calibration bias) plus a sigma-point estimate of the term induced by the
// initialization uncertainty, with the joint 12x12 covariance and
// maximum-likelihood fusion of the initial and ICP estimates.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "icpcov/icp.hpp"
#include "icpcov/parallel.hpp"
#include "icpcov/pointcloud.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

struct NoiseParams {
  double sigma_white = 0.05;  // meters
  double sigma_bias = 0.05;   // meters, cov(b) = sigma_bias^2

  void check() const {
    if (sigma_white < 0.0 || sigma_bias < 0.0) {
      throw Error("NoiseParams: sigmas must be >= 0");
    }
  }
};

using Matrix12d = Eigen::Matrix<double, 12, 12>;

struct CovarianceReport {
  Matrix6d Q_sensor_term = Matrix6d::Zero();  // G Q_sensor G^T
  Matrix6d Q_init_term = Matrix6d::Zero();    // (I-J) Q_ini (I-J)^T
  Matrix6d J = Matrix6d::Identity();
  Matrix6d Q_icp = Matrix6d::Zero();
  Matrix12d Q_joint = Matrix12d::Zero();
  Twist xi_icp_mean;  // sigma-point mean, exposes residual bias
};

namespace detail {

inline Matrix6d inverse_of_information(const Matrix6d& a, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(a);
  const Vector6d evals = eig.eigenvalues();
  if (evals(0) <= 0.0 || evals(5) / evals(0) > kConditionCeiling) {
    throw SingularSystemError(std::string(who) + ": singular information matrix",
                              std::vector<double>(evals.data(), evals.data() + 6));
  }
  return eig.eigenvectors() * evals.cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace detail

// White-noise part of the closed form: sigma^2 A^{-1}.
inline Matrix6d censi_term(const LinearSystem& sys, double sigma_white) {
  const Matrix6d a_inv = detail::inverse_of_information(sys.A, "censi_term");
  return symmetrize(sigma_white * sigma_white * a_inv);
}

// Bias part: rank-1 contribution of the shared scalar offset,
// sigma_bias^2 (A^{-1} B)(A^{-1} B)^T.
inline Matrix6d bias_term(const LinearSystem& sys, double sigma_bias) {
  const Matrix6d a_inv = detail::inverse_of_information(sys.A, "bias_term");
  const Vector6d v = a_inv * sys.Bsum;
  return sigma_bias * sigma_bias * (v * v.transpose());
}

inline Matrix6d sensor_covariance(const LinearSystem& sys, const NoiseParams& noise) {
  noise.check();
  return symmetrize(censi_term(sys, noise.sigma_white) + bias_term(sys, noise.sigma_bias));
}

struct UnscentedInitResult {
  Matrix6d J = Matrix6d::Identity();
  Matrix6d Q_init_term = Matrix6d::Zero();
  Twist xi_mean;
  std::vector<Vector6d> sigma_points;  // the 12 tangent-space inputs
};

// Sigma-point estimate of the initialization-induced covariance term and of
// the statistical Jacobian J.
//
// The 12 sigma points are +-columns of the lower-triangular Cholesky factor
// of 6 Q_ini; each is propagated through a full registration sharing the
// base run's subsample seed. The second moment is taken about the base
// estimate t_icp_hat, without mean subtraction; the mean is reported
// separately.
inline UnscentedInitResult unscented_init_term(const PointCloud& reading,
                                               const PointCloud& reference,
                                               const Pose& t_ini, const Matrix6d& q_ini,
                                               const Pose& t_icp_hat,
                                               const IcpConfig& config) {
  const Matrix6d sqrt_scaled = cholesky_factor(6.0 * q_ini);
  std::vector<Vector6d> sigma(12);
  for (int j = 0; j < 6; ++j) {
    sigma[j] = sqrt_scaled.col(j);
    sigma[j + 6] = -sqrt_scaled.col(j);
  }

  const Pose t_icp_hat_inv = inverse(t_icp_hat);
  std::vector<Vector6d> propagated(12);
  std::vector<std::string> failures(12);
  parallel_for(12, [&](int j) {
    try {
      const Pose t_ini_j = compose(t_ini, exp(Twist(sigma[j])));
      const IcpResult res = register_clouds(reading, reference, t_ini_j, config);
      propagated[j] = log(compose(t_icp_hat_inv, res.T_icp)).vector();
    } catch (const std::exception& e) {
      failures[j] = e.what();
    }
  });
  for (int j = 0; j < 12; ++j) {
    if (!failures[j].empty()) {
      throw Error("unscented_init_term: sigma point " + std::to_string(j) +
                  " failed: " + failures[j]);
    }
  }

  UnscentedInitResult out;
  out.sigma_points = sigma;
  Matrix6d second_moment = Matrix6d::Zero();
  Vector6d mean = Vector6d::Zero();
  for (int j = 0; j < 12; ++j) {
    second_moment += propagated[j] * propagated[j].transpose();
    mean += propagated[j];
  }
  second_moment /= 12.0;
  mean /= 12.0;
  out.Q_init_term = symmetrize(second_moment);
  out.xi_mean = Twist(mean);

  Matrix6d cross = Matrix6d::Zero();
  for (int j = 0; j < 12; ++j) {
    cross += (propagated[j] - mean) * sigma[j].transpose();
  }
  cross /= 12.0;
  out.J = -cross * detail::inverse_of_information(q_ini, "unscented_init_term") +
          Matrix6d::Identity();
  return out;
}

// Full covariance pipeline. Runs the base registration (returned through
// icp_out when requested), the 12 sigma-point registrations and the closed
// form, and assembles Q_icp and the joint matrix.
inline CovarianceReport estimate(const PointCloud& reading, const PointCloud& reference,
                                 const Pose& t_ini, const Matrix6d& q_ini,
                                 const IcpConfig& config, const NoiseParams& noise,
                                 IcpResult* icp_out = nullptr) {
  const IcpResult base = register_clouds(reading, reference, t_ini, config);
  if (icp_out) *icp_out = base;

  const UnscentedInitResult init =
      unscented_init_term(reading, reference, t_ini, q_ini, base.T_icp, config);

  CovarianceReport report;
  report.J = init.J;
  report.Q_init_term = init.Q_init_term;
  report.xi_icp_mean = init.xi_mean;
  report.Q_sensor_term = sensor_covariance(base.system, noise);
  report.Q_icp = symmetrize(report.Q_init_term + report.Q_sensor_term);

  const Matrix6d i_minus_j = Matrix6d::Identity() - report.J;
  const Matrix6d q_ini_sym = symmetrize(q_ini);
  const Matrix6d cross = q_ini_sym * i_minus_j.transpose();
  report.Q_joint.topLeftCorner<6, 6>() = q_ini_sym;
  report.Q_joint.bottomRightCorner<6, 6>() = report.Q_icp;
  report.Q_joint.topRightCorner<6, 6>() = cross;
  report.Q_joint.bottomLeftCorner<6, 6>() = cross.transpose();
  return report;
}

// Maximum-likelihood fusion of the initial estimate and the ICP estimate,
// accounting for their correlation through the joint covariance. Both
// measurements are expressed as twists in the tangent space at t_icp.
inline PoseGaussian ml_fuse(const Pose& t_ini, const Pose& t_icp,
                            const CovarianceReport& report) {
  Matrix12d q_joint = report.Q_joint;
  Eigen::FullPivLU<Matrix12d> lu(q_joint);
  if (!lu.isInvertible()) {
    q_joint += 1e-12 * Matrix12d::Identity();
    lu.compute(q_joint);
    if (!lu.isInvertible()) {
      throw Error("ml_fuse: joint covariance is singular after regularization");
    }
  }
  const Matrix12d q_joint_inv = lu.inverse();

  Eigen::Matrix<double, 12, 6> h;
  h << Matrix6d::Identity(), Matrix6d::Identity();
  const Matrix6d info = h.transpose() * q_joint_inv * h;
  const Matrix6d q_ml = symmetrize(info.inverse());

  Eigen::Matrix<double, 12, 1> z = Eigen::Matrix<double, 12, 1>::Zero();
  z.head<6>() = log(compose(inverse(t_icp), t_ini)).vector();
  const Vector6d xi_ml = q_ml * (h.transpose() * (q_joint_inv * z));
  return PoseGaussian(compose(t_icp, exp(Twist(xi_ml))), q_ml);
}

// Baseline fusion that ignores the cross-covariance (treats the initial and
// ICP estimates as independent).
inline PoseGaussian fuse_independent(const Pose& t_ini, const Pose& t_icp,
                                     const Matrix6d& q_ini, const Matrix6d& q_icp) {
  const Matrix6d q_ini_inv = detail::inverse_of_information(q_ini, "fuse_independent");
  const Matrix6d q_icp_inv = detail::inverse_of_information(q_icp, "fuse_independent");
  const Matrix6d q_ml = symmetrize((q_ini_inv + q_icp_inv).inverse());
  const Vector6d z1 = log(compose(inverse(t_icp), t_ini)).vector();
  const Vector6d xi_ml = q_ml * (q_ini_inv * z1);
  return PoseGaussian(compose(t_icp, exp(Twist(xi_ml))), q_ml);
}

}  // namespace icpcov
