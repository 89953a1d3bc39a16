#pragma once

// Point-cloud container, rigid transforms, subsampling and PCA normal
// estimation.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "icpcov/kdtree.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty, or one unit normal per point
  std::vector<char> normal_valid;        // empty means all normals valid

  bool has_normals() const { return !normals.empty(); }

  bool normal_ok(std::size_t i) const {
    return has_normals() && (normal_valid.empty() || normal_valid[i]);
  }

  std::size_t size() const { return points.size(); }

  void check() const {
    if (points.empty()) {
      throw Error("PointCloud: empty cloud");
    }
    for (const auto& p : points) {
      if (!p.allFinite()) throw Error("PointCloud: non-finite coordinate");
    }
    if (has_normals() && normals.size() != points.size()) {
      throw Error("PointCloud: normal count does not match point count");
    }
  }
};

inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t.apply(p);
  for (auto& n : out.normals) n = t.rotation * n;
  return out;
}

inline PointCloud random_subsample(const PointCloud& cloud, double keep_probability,
                                   std::uint64_t seed) {
  if (keep_probability <= 0.0 || keep_probability > 1.0) {
    throw Error("random_subsample: keep_probability must be in (0, 1]");
  }
  if (keep_probability == 1.0) return cloud;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PointCloud out;
  out.points.reserve(cloud.size());
  const bool with_normals = cloud.has_normals();
  const bool with_flags = !cloud.normal_valid.empty();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (unif(rng) < keep_probability) {
      out.points.push_back(cloud.points[i]);
      if (with_normals) out.normals.push_back(cloud.normals[i]);
      if (with_flags) out.normal_valid.push_back(cloud.normal_valid[i]);
    }
  }
  if (out.points.empty()) {
    throw Error("random_subsample: subsample is empty");
  }
  return out;
}

// PCA normal per point from its k nearest neighbors; sign oriented toward
// the viewpoint. Degenerate (rank < 2) neighborhoods are flagged invalid.
inline PointCloud estimate_normals(const PointCloud& cloud, int k,
                                   const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero()) {
  if (k < 3) throw Error("estimate_normals: k must be >= 3");
  if (cloud.size() <= static_cast<std::size_t>(k)) {
    throw Error("estimate_normals: cloud smaller than neighborhood size");
  }
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Eigen::Vector3d::UnitZ());
  out.normal_valid.assign(cloud.size(), 1);

  KdTree tree(cloud.points);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // k + 1 neighbors: the query point itself is always returned first.
    const auto nbrs = tree.knearest(cloud.points[i], k + 1);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Eigen::Vector3d c = cloud.points[nb.index] - mean;
      cov += c * c.transpose();
    }
    cov /= static_cast<double>(nbrs.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues();
    if (evals(1) < 1e-12) {
      // rank < 2: neighborhood is a line or a point
      out.normal_valid[i] = 0;
      continue;
    }
    Eigen::Vector3d n = eig.eigenvectors().col(0);
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

}  // namespace icpcov
