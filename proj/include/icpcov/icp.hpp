#pragma once

// Trimmed point-to-plane ICP. Exposes the final least-squares system so the
// covariance estimators can reuse it.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "icpcov/kdtree.hpp"
#include "icpcov/pointcloud.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

struct IcpConfig {
  double keep_probability = 0.95;
  double trim_ratio = 0.70;
  int max_iterations = 40;
  double trans_converged = 1e-4;  // meters
  double rot_converged = 1e-4;    // radians
  std::uint64_t seed = 0;

  void check() const {
    if (trim_ratio <= 0.0 || trim_ratio > 1.0) throw Error("IcpConfig: bad trim_ratio");
    if (keep_probability <= 0.0 || keep_probability > 1.0) {
      throw Error("IcpConfig: bad keep_probability");
    }
    if (max_iterations < 1) throw Error("IcpConfig: max_iterations must be >= 1");
  }
};

class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, std::vector<double> spectrum)
      : Error(what), spectrum_(std::move(spectrum)) {}
  const std::vector<double>& spectrum() const { return spectrum_; }

 private:
  std::vector<double> spectrum_;
};

struct LinearSystem {
  Matrix6d A = Matrix6d::Zero();       // sum B_k^T B_k
  Vector6d Bsum = Vector6d::Zero();    // sum B_k^T
  struct Row {
    Eigen::Matrix<double, 1, 6> B;
    double d;  // meters
  };
  std::vector<Row> rows;
  int K = 0;

  Vector6d rhs() const {
    Vector6d btd = Vector6d::Zero();
    for (const auto& row : rows) btd += row.B.transpose() * row.d;
    return btd;
  }

  double residual_rms() const {
    if (rows.empty()) return 0.0;
    double ss = 0.0;
    for (const auto& row : rows) ss += row.d * row.d;
    return std::sqrt(ss / static_cast<double>(rows.size()));
  }
};

struct IcpResult {
  Pose T_icp;      // estimate in the global frame, T_ini * T_rel_hat
  Pose T_rel_hat;  // post-initialization estimate
  int iterations = 0;
  bool converged = false;
  double residual_rms = 0.0;
  LinearSystem system;  // built at the final estimate
};

// Immutable matching target: reference points with valid normals plus the
// kd-tree over them. Built once per registration.
class ReferenceSurface {
 public:
  explicit ReferenceSurface(const PointCloud& cloud) {
    if (!cloud.has_normals()) {
      throw Error("ReferenceSurface: reference cloud has no normals");
    }
    points_.reserve(cloud.size());
    normals_.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (!cloud.normal_ok(i)) continue;
      points_.push_back(cloud.points[i]);
      normals_.push_back(cloud.normals[i]);
    }
    if (points_.empty()) {
      throw Error("ReferenceSurface: no reference points with valid normals");
    }
    tree_.emplace(points_);
  }

  const KdTree& tree() const { return *tree_; }
  const Eigen::Vector3d& point(int i) const { return points_[i]; }
  const Eigen::Vector3d& normal(int i) const { return normals_[i]; }

 private:
  std::vector<Eigen::Vector3d> points_;
  std::vector<Eigen::Vector3d> normals_;
  std::optional<KdTree> tree_;
};

// Matches every reading point to its nearest reference point, keeps the
// trim_ratio fraction with smallest distances and linearizes the
// point-to-plane residual at T_current:
//   r_k(xi) ~ B_k xi - d_k,  B_k = [-n^T R (p)x, n^T R],  d_k = -(T p - q)·n.
inline LinearSystem build_linear_system(const PointCloud& reading,
                                        const ReferenceSurface& reference,
                                        const Pose& t_current, double trim_ratio) {
  struct Match {
    double distance;
    int p_index;
    int q_index;
  };
  std::vector<Match> matches;
  matches.reserve(reading.size());
  for (std::size_t i = 0; i < reading.size(); ++i) {
    const Eigen::Vector3d moved = t_current.apply(reading.points[i]);
    const auto nn = reference.tree().nearest(moved);
    matches.push_back({nn.distance, static_cast<int>(i), nn.index});
  }
  const int keep = std::max<int>(
      1, static_cast<int>(std::floor(trim_ratio * static_cast<double>(matches.size()))));
  std::nth_element(matches.begin(), matches.begin() + (keep - 1), matches.end(),
                   [](const Match& a, const Match& b) { return a.distance < b.distance; });
  matches.resize(keep);

  if (keep < 6) {
    throw Error("build_linear_system: fewer than 6 matched pairs");
  }

  LinearSystem sys;
  sys.rows.reserve(keep);
  const Eigen::Matrix3d& r = t_current.rotation;
  for (const auto& m : matches) {
    const Eigen::Vector3d& p = reading.points[m.p_index];
    const Eigen::Vector3d& q = reference.point(m.q_index);
    const Eigen::Vector3d& n = reference.normal(m.q_index);
    const Eigen::RowVector3d ntr = n.transpose() * r;
    LinearSystem::Row row;
    row.B << -(ntr * skew(p)), ntr;
    row.d = -(t_current.apply(p) - q).dot(n);
    sys.A += row.B.transpose() * row.B;
    sys.Bsum += row.B.transpose();
    sys.rows.push_back(row);
  }
  sys.K = keep;
  return sys;
}

inline constexpr double kConditionCeiling = 1e12;

inline std::vector<double> spectrum_of(const Matrix6d& a) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(a);
  const auto& v = eig.eigenvalues();
  return std::vector<double>(v.data(), v.data() + 6);
}

// Least-squares minimizer xi* = A^{-1} sum B_k^T d_k. Surfaces the spectrum
// of A on ill-conditioned systems so callers can see which directions are
// unconstrained.
inline Twist solve_step(const LinearSystem& sys) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(sys.A);
  const Vector6d evals = eig.eigenvalues();
  if (evals(0) <= 0.0 || evals(5) / evals(0) > kConditionCeiling) {
    throw SingularSystemError("solve_step: system is singular or ill-conditioned",
                              std::vector<double>(evals.data(), evals.data() + 6));
  }
  const Vector6d xi = eig.eigenvectors() *
                      (eig.eigenvectors().transpose() * sys.rhs()).cwiseQuotient(evals);
  return Twist(xi);
}

namespace instrument {
// Running count of full registrations, used by tests that pin the
// sigma-point budget.
inline std::atomic<std::uint64_t>& registration_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}
}  // namespace instrument

// Full registration: T_icp = T_ini * icp(P, T_ini^{-1} Q).
//
// The reading subsample is drawn once per registration from config.seed, so
// repeated calls (and sigma-point propagations) see identical internal
// randomness. Non-convergence within max_iterations is reported through the
// flag, not as an error.
inline IcpResult register_clouds(const PointCloud& reading, const PointCloud& reference,
                                 const Pose& t_ini, const IcpConfig& config) {
  config.check();
  reading.check();
  reference.check();
  instrument::registration_count().fetch_add(1, std::memory_order_relaxed);

  const PointCloud ref_local = transform_cloud(reference, inverse(t_ini));
  const ReferenceSurface surface(ref_local);
  const PointCloud sub = random_subsample(reading, config.keep_probability, config.seed);

  IcpResult result;
  Pose t_rel;
  for (int it = 0; it < config.max_iterations; ++it) {
    const LinearSystem sys = build_linear_system(sub, surface, t_rel, config.trim_ratio);
    const Twist step = solve_step(sys);
    t_rel = compose(t_rel, exp(step));
    result.iterations = it + 1;
    if (step.rho.norm() < config.trans_converged && step.phi.norm() < config.rot_converged) {
      result.converged = true;
      break;
    }
  }
  result.T_rel_hat = t_rel;
  result.T_icp = compose(t_ini, t_rel);
  result.system = build_linear_system(sub, surface, t_rel, config.trim_ratio);
  result.residual_rms = result.system.residual_rms();
  return result;
}

}  // namespace icpcov
