#include "icpcov/eval.hpp"

#include <gtest/gtest.h>

#include <random>

#include "icpcov/scene.hpp"

namespace icpcov {
namespace {

TEST(Nne, ExactOnConstructedSamples) {
  Matrix6d q = Matrix6d::Identity();
  q *= 2.0;  // trace 12
  Vector6d v = Vector6d::Zero();
  v(0) = 3.0;  // |xi|^2 = 9
  std::vector<ErrorSample> samples{{Twist(v), q}};
  EXPECT_NEAR(nne(samples), std::sqrt(9.0 / 12.0), 1e-15);
}

TEST(Nne, CalibratedGaussianGivesOne) {
  std::mt19937_64 rng(91);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix6d q = Matrix6d::Zero();
  q.diagonal() << 0.01, 0.02, 0.03, 0.04, 0.05, 0.06;
  const Matrix6d l = cholesky_factor(q);
  std::vector<ErrorSample> samples;
  for (int i = 0; i < 20000; ++i) {
    Vector6d z;
    for (int k = 0; k < 6; ++k) z(k) = gauss(rng);
    samples.push_back({Twist(Vector6d(l * z)), q});
  }
  EXPECT_NEAR(nne(samples), 1.0, 0.02);
  EXPECT_NEAR(nne(samples, Split::kTranslation), 1.0, 0.02);
  EXPECT_NEAR(nne(samples, Split::kRotation), 1.0, 0.02);
}

TEST(Nne, DetectsOveroptimism) {
  // true error 10x wider than credited: NNE ~ 10
  std::mt19937_64 rng(92);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Matrix6d q = 1e-4 * Matrix6d::Identity();
  std::vector<ErrorSample> samples;
  for (int i = 0; i < 5000; ++i) {
    Vector6d z;
    for (int k = 0; k < 6; ++k) z(k) = 0.1 * gauss(rng);
    samples.push_back({Twist(z), q});
  }
  EXPECT_NEAR(nne(samples), 10.0, 0.3);
}

TEST(Nne, SplitSelectsBlocks) {
  Matrix6d q = Matrix6d::Identity();
  q.topLeftCorner<3, 3>() *= 4.0;     // rotation block trace 12
  q.bottomRightCorner<3, 3>() *= 1.0; // translation block trace 3
  Vector6d v;
  v << 2, 0, 0, 3, 0, 0;
  std::vector<ErrorSample> samples{{Twist(v), q}};
  EXPECT_NEAR(nne(samples, Split::kRotation), std::sqrt(4.0 / 12.0), 1e-15);
  EXPECT_NEAR(nne(samples, Split::kTranslation), std::sqrt(9.0 / 3.0), 1e-15);
}

TEST(Nne, EmptyThrows) {
  EXPECT_THROW(nne({}), Error);
}

TEST(Mahalanobis, ExactOnConstructedSamples) {
  Matrix6d q = Matrix6d::Identity();
  q *= 4.0;
  Vector6d v = Vector6d::Zero();
  v(2) = 2.0;  // xi^T Q^{-1} xi = 1
  std::vector<ErrorSample> samples{{Twist(v), q}};
  EXPECT_NEAR(mahalanobis(samples), std::sqrt(1.0 / 6.0), 1e-14);
}

TEST(Mahalanobis, CalibratedGaussianGivesOne) {
  std::mt19937_64 rng(93);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix6d q = Matrix6d::Zero();
  q.diagonal() << 0.04, 0.01, 0.09, 0.25, 0.16, 0.01;
  const Matrix6d l = cholesky_factor(q);
  std::vector<ErrorSample> samples;
  for (int i = 0; i < 20000; ++i) {
    Vector6d z;
    for (int k = 0; k < 6; ++k) z(k) = gauss(rng);
    samples.push_back({Twist(Vector6d(l * z)), q});
  }
  EXPECT_NEAR(mahalanobis(samples), 1.0, 0.02);
  EXPECT_NEAR(mahalanobis(samples, Split::kRotation), 1.0, 0.02);
}

TEST(Mahalanobis, RejectsIndefiniteCovariance) {
  Matrix6d q = Matrix6d::Identity();
  q(0, 0) = -1.0;
  std::vector<ErrorSample> samples{{Twist(), q}};
  EXPECT_THROW(mahalanobis(samples), Error);
}

// Trapezoid quadrature of the 1D KL integrand, independent of the closed
// form under test.
double kl_quadrature_1d(double mp, double sp, double mq, double sq) {
  const double lo = mp - 12.0 * sp;
  const double hi = mp + 12.0 * sp;
  const int n = 200000;
  const double dx = (hi - lo) / n;
  auto log_pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * M_PI);
  };
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * dx;
    const double lp = log_pdf(x, mp, sp);
    const double term = std::exp(lp) * (lp - log_pdf(x, mq, sq));
    acc += (i == 0 || i == n) ? 0.5 * term : term;
  }
  return acc * dx;
}

TEST(GaussianKl, ZeroForIdenticalDistributions) {
  Eigen::VectorXd mean(3);
  mean << 1, 2, 3;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3) * 0.5;
  EXPECT_NEAR(gaussian_kl(mean, cov, mean, cov), 0.0, 1e-10);
}

TEST(GaussianKl, MatchesQuadratureOracle1D) {
  const struct {
    double mp, sp, mq, sq;
  } cases[] = {{0.0, 1.0, 0.5, 1.0}, {0.0, 1.0, 0.0, 2.0}, {1.0, 0.3, -0.5, 0.7},
               {2.0, 2.0, 2.0, 0.5}};
  for (const auto& c : cases) {
    Eigen::VectorXd mp(1), mq(1);
    mp << c.mp;
    mq << c.mq;
    Eigen::MatrixXd sp(1, 1), sq(1, 1);
    sp << c.sp * c.sp;
    sq << c.sq * c.sq;
    EXPECT_NEAR(gaussian_kl(mp, sp, mq, sq),
                kl_quadrature_1d(c.mp, c.sp, c.mq, c.sq), 1e-6);
  }
}

TEST(GaussianKl, IsAsymmetric) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd q = 4.0 * Eigen::MatrixXd::Identity(2, 2);
  EXPECT_GT(std::abs(gaussian_kl(m, p, m, q) - gaussian_kl(m, q, m, p)), 1e-3);
}

TEST(GaussianKl, TwistOverloadSelectsSplit) {
  Vector6d vp = Vector6d::Zero(), vq = Vector6d::Zero();
  vp(0) = 0.1;  // rotation-only offset
  Matrix6d cov = 0.01 * Matrix6d::Identity();
  const double full = gaussian_kl(Twist(vp), cov, Twist(vq), cov, Split::kFull);
  const double rot = gaussian_kl(Twist(vp), cov, Twist(vq), cov, Split::kRotation);
  const double trans = gaussian_kl(Twist(vp), cov, Twist(vq), cov, Split::kTranslation);
  EXPECT_NEAR(full, rot, 1e-9);
  EXPECT_NEAR(trans, 0.0, 1e-9);
}

TEST(SplitStrings, RoundTrip) {
  for (Split s : {Split::kFull, Split::kTranslation, Split::kRotation}) {
    EXPECT_EQ(split_from_string(to_string(s)), s);
  }
  EXPECT_THROW(split_from_string("sideways"), Error);
}

Scene room_scene() {
  Scene scene;
  scene.kind = SceneKind::kRoomCorner;
  scene.density = 300.0;
  return scene;
}

IcpConfig tight_config() {
  IcpConfig config;
  config.trans_converged = 1e-9;
  config.rot_converged = 1e-9;
  config.max_iterations = 80;
  config.seed = 17;
  return config;
}

TEST(MonteCarlo, NoiselessSceneCollapses) {
  // all initializations register back exactly, so the sampled distribution
  // has (near) zero spread
  const Pose t_true = exp(Twist(Eigen::Vector3d(0.02, 0, 0), Eigen::Vector3d(0.05, 0, 0)));
  const auto [reading, reference] = generate_scene(room_scene(), t_true, 101);
  Matrix6d q_ini = Matrix6d::Zero();
  q_ini.diagonal() << 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3;
  const SampledDistribution dist = monte_carlo_covariance(
      reading, reference, t_true, q_ini, 40, tight_config(), 5);
  EXPECT_EQ(dist.successes, 40);
  EXPECT_EQ(dist.failures, 0);
  EXPECT_LT(dist.mean_xi.vector().norm(), 1e-7);
  EXPECT_LT(dist.cov.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MonteCarlo, DeterministicAcrossThreadBudgets) {
  Scene scene = room_scene();
  scene.noise.sigma_white = 0.01;
  const Pose t_true = Pose::Identity();
  const auto [reading, reference] = generate_scene(scene, t_true, 102);
  const Matrix6d q_ini = 1e-4 * Matrix6d::Identity();
  setenv("ICP_UNCERT_THREADS", "1", 1);
  const SampledDistribution serial =
      monte_carlo_covariance(reading, reference, t_true, q_ini, 20, tight_config(), 7);
  setenv("ICP_UNCERT_THREADS", "8", 1);
  const SampledDistribution parallel =
      monte_carlo_covariance(reading, reference, t_true, q_ini, 20, tight_config(), 7);
  unsetenv("ICP_UNCERT_THREADS");
  EXPECT_TRUE(serial.cov.isApprox(parallel.cov, 0.0));
  EXPECT_EQ(serial.successes, parallel.successes);
}

TEST(MonteCarlo, MinimumSampleCountEnforced) {
  const auto [reading, reference] = generate_scene(room_scene(), Pose::Identity(), 103);
  const Matrix6d q_ini = 1e-4 * Matrix6d::Identity();
  EXPECT_THROW(monte_carlo_covariance(reading, reference, Pose::Identity(), q_ini, 6,
                                      tight_config(), 1),
               Error);
}

TEST(PseudoTrue, RequiresThirtySamplesAndMatchesSampler) {
  const auto [reading, reference] = generate_scene(room_scene(), Pose::Identity(), 104);
  const Matrix6d q_ini = 1e-4 * Matrix6d::Identity();
  EXPECT_THROW(pseudo_true_distribution(reading, reference, Pose::Identity(), q_ini, 29,
                                        tight_config(), 1),
               Error);
  const SampledDistribution a = pseudo_true_distribution(
      reading, reference, Pose::Identity(), q_ini, 30, tight_config(), 9);
  const SampledDistribution b = monte_carlo_covariance(
      reading, reference, Pose::Identity(), q_ini, 30, tight_config(), 9);
  EXPECT_TRUE(a.cov.isApprox(b.cov, 0.0));
}

TEST(CompoundTrajectory, MatchesManualFold) {
  std::mt19937_64 rng(105);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<PoseGaussian> rel;
  for (int i = 0; i < 6; ++i) {
    Eigen::Vector3d phi(gauss(rng), gauss(rng), gauss(rng));
    phi *= 0.1;
    rel.emplace_back(Pose(rotation_exp(phi),
                          Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng))),
                     1e-4 * Matrix6d::Identity());
  }
  const auto out = compound_trajectory(rel);
  ASSERT_EQ(out.size(), rel.size());
  PoseGaussian acc = rel[0];
  EXPECT_TRUE(out[0].mean.matrix().isApprox(acc.mean.matrix(), 0.0));
  for (std::size_t i = 1; i < rel.size(); ++i) {
    acc = compound_gaussians(acc, rel[i]);
    EXPECT_TRUE(out[i].mean.matrix().isApprox(acc.mean.matrix(), 0.0));
    EXPECT_TRUE(out[i].cov.isApprox(acc.cov, 0.0));
  }
  EXPECT_THROW(compound_trajectory({}), Error);
}

}  // namespace
}  // namespace icpcov
