#pragma once

// Evaluation machinery: Monte-Carlo covariance baseline, consistency
// metrics (NNE, Mahalanobis), Gaussian KL divergence and trajectory
// compounding.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "icpcov/covariance.hpp"
#include "icpcov/icp.hpp"
#include "icpcov/parallel.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

enum class Split { kFull, kTranslation, kRotation };

inline Split split_from_string(const std::string& s) {
  if (s == "full") return Split::kFull;
  if (s == "translation") return Split::kTranslation;
  if (s == "rotation") return Split::kRotation;
  throw Error("unknown split: " + s);
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kFull: return "full";
    case Split::kTranslation: return "translation";
    case Split::kRotation: return "rotation";
  }
  return "?";
}

struct ErrorSample {
  Twist xi;        // log(T_true^{-1} T_hat)
  Matrix6d Q_hat;  // covariance credited to the estimate
};

namespace detail {

// Restricts a twist / 6x6 covariance to the selected block.
// Rotation occupies indices 0..2, translation 3..5.
inline Eigen::VectorXd split_vector(const Twist& xi, Split split) {
  switch (split) {
    case Split::kFull: return xi.vector();
    case Split::kRotation: return xi.phi;
    case Split::kTranslation: return xi.rho;
  }
  return xi.vector();
}

inline Eigen::MatrixXd split_matrix(const Matrix6d& q, Split split) {
  switch (split) {
    case Split::kFull: return q;
    case Split::kRotation: return q.topLeftCorner<3, 3>();
    case Split::kTranslation: return q.bottomRightCorner<3, 3>();
  }
  return q;
}

}  // namespace detail

// Normalized Norm Error: sqrt of the mean of |xi|^2 / trace(Q_hat).
// 1 = calibrated, > 1 = overoptimistic covariance, < 1 = pessimistic.
inline double nne(const std::vector<ErrorSample>& samples, Split split = Split::kFull) {
  if (samples.empty()) throw Error("nne: no samples");
  double acc = 0.0;
  for (const auto& s : samples) {
    const Eigen::VectorXd xi = detail::split_vector(s.xi, split);
    const double tr = detail::split_matrix(s.Q_hat, split).trace();
    if (tr <= 0.0) throw Error("nne: covariance with non-positive trace");
    acc += xi.squaredNorm() / tr;
  }
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

// Mahalanobis consistency: sqrt( sum xi^T Q^{-1} xi / (dim * N) ).
inline double mahalanobis(const std::vector<ErrorSample>& samples,
                          Split split = Split::kFull) {
  if (samples.empty()) throw Error("mahalanobis: no samples");
  double acc = 0.0;
  double dim = 0.0;
  for (const auto& s : samples) {
    const Eigen::VectorXd xi = detail::split_vector(s.xi, split);
    const Eigen::MatrixXd q = detail::split_matrix(s.Q_hat, split);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(q);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw Error("mahalanobis: covariance is not positive definite");
    }
    acc += xi.dot(ldlt.solve(xi));
    dim = static_cast<double>(xi.size());
  }
  return std::sqrt(acc / (dim * static_cast<double>(samples.size())));
}

// Closed-form KL(N_p || N_q) over twist coordinates (any dimension).
inline double gaussian_kl(const Eigen::VectorXd& p_mean, const Eigen::MatrixXd& p_cov,
                          const Eigen::VectorXd& q_mean, const Eigen::MatrixXd& q_cov) {
  const auto n = p_mean.size();
  const Eigen::MatrixXd jitter = 1e-12 * Eigen::MatrixXd::Identity(n, n);
  Eigen::LLT<Eigen::MatrixXd> q_llt(q_cov + jitter);
  if (q_llt.info() != Eigen::Success) {
    throw Error("gaussian_kl: q covariance is singular");
  }
  Eigen::LLT<Eigen::MatrixXd> p_llt(p_cov + jitter);
  if (p_llt.info() != Eigen::Success) {
    throw Error("gaussian_kl: p covariance is singular");
  }
  const Eigen::VectorXd diff = q_mean - p_mean;
  const double trace_term = q_llt.solve(p_cov + jitter).trace();
  const double maha_term = diff.dot(q_llt.solve(diff));
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    log_det += 2.0 * (std::log(q_llt.matrixL()(i, i)) - std::log(p_llt.matrixL()(i, i)));
  }
  return 0.5 * (trace_term + maha_term - static_cast<double>(n) + log_det);
}

inline double gaussian_kl(const Twist& p_mean, const Matrix6d& p_cov,
                          const Twist& q_mean, const Matrix6d& q_cov,
                          Split split = Split::kFull) {
  return gaussian_kl(detail::split_vector(p_mean, split), detail::split_matrix(p_cov, split),
                     detail::split_vector(q_mean, split), detail::split_matrix(q_cov, split));
}

struct SampledDistribution {
  Twist mean_xi;
  Matrix6d cov = Matrix6d::Zero();
  int successes = 0;
  int failures = 0;
};

// Samples initializations T_ini^n ~ N_L(T_true, Q_ini), registers each, and
// returns sample mean and (1/(n-1)) covariance of xi^n = log(T_true^{-1}
// T_icp^n). Failed registrations are dropped and counted.
inline SampledDistribution monte_carlo_covariance(const PointCloud& reading,
                                                  const PointCloud& reference,
                                                  const Pose& t_true, const Matrix6d& q_ini,
                                                  int n_samples, const IcpConfig& config,
                                                  std::uint64_t seed) {
  if (n_samples < 7) throw Error("monte_carlo_covariance: need at least 7 samples");

  // all initialization draws come from one sequential stream, so the draw
  // set is independent of the thread budget
  const Matrix6d l = cholesky_factor(q_ini);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Pose> initializations(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    Vector6d z;
    for (int k = 0; k < 6; ++k) z(k) = gauss(rng);
    initializations[i] = compose(t_true, exp(Twist(l * z)));
  }

  const Pose t_true_inv = inverse(t_true);
  std::vector<Vector6d> xis(n_samples, Vector6d::Zero());
  std::vector<char> ok(n_samples, 0);
  parallel_for(n_samples, [&](int i) {
    try {
      const IcpResult res = register_clouds(reading, reference, initializations[i], config);
      xis[i] = log(compose(t_true_inv, res.T_icp)).vector();
      ok[i] = 1;
    } catch (const Error&) {
      ok[i] = 0;
    }
  });

  SampledDistribution out;
  Vector6d mean = Vector6d::Zero();
  for (int i = 0; i < n_samples; ++i) {
    if (ok[i]) {
      mean += xis[i];
      ++out.successes;
    } else {
      ++out.failures;
    }
  }
  if (out.successes < 7) {
    throw Error("monte_carlo_covariance: only " + std::to_string(out.successes) +
                " registrations succeeded");
  }
  mean /= static_cast<double>(out.successes);
  Matrix6d cov = Matrix6d::Zero();
  for (int i = 0; i < n_samples; ++i) {
    if (!ok[i]) continue;
    const Vector6d c = xis[i] - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(out.successes - 1);
  out.mean_xi = Twist(mean);
  out.cov = symmetrize(cov);
  return out;
}

// Distribution of ICP outputs over the initialization only: the clouds (and
// hence the sensor noise baked into them) stay fixed across draws. Same
// estimator as monte_carlo_covariance; the distinction is that callers of
// the Monte-Carlo baseline typically resample scene noise per draw, whereas
// here the inputs are reused verbatim.
inline SampledDistribution pseudo_true_distribution(const PointCloud& reading,
                                                    const PointCloud& reference,
                                                    const Pose& t_true,
                                                    const Matrix6d& q_ini, int n,
                                                    const IcpConfig& config,
                                                    std::uint64_t seed) {
  if (n < 30) throw Error("pseudo_true_distribution: need at least 30 samples");
  return monte_carlo_covariance(reading, reference, t_true, q_ini, n, config, seed);
}

// Left-fold of compound_gaussians: element l is the global pose plus
// covariance after l+1 relative steps.
inline std::vector<PoseGaussian> compound_trajectory(
    const std::vector<PoseGaussian>& relatives) {
  if (relatives.empty()) throw Error("compound_trajectory: empty input");
  std::vector<PoseGaussian> out;
  out.reserve(relatives.size());
  out.push_back(relatives.front());
  for (std::size_t i = 1; i < relatives.size(); ++i) {
    out.push_back(compound_gaussians(out.back(), relatives[i]));
  }
  return out;
}

}  // namespace icpcov
