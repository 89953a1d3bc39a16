#pragma once

// Synthetic desk-scale scenes for registration experiments: planar patches
// sampled twice (reading and reference) with per-point white noise and a
// per-cloud scalar bias.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "icpcov/pointcloud.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

enum class SceneKind { kRoomCorner, kCorridor, kSinglePlane, kRandomBlob };

enum class BiasDirection { kAlongNormal, kAlongRay };

struct SensorNoiseSpec {
  double sigma_white = 0.0;  // meters, independent per point
  double sigma_bias = 0.0;   // meters, one draw per cloud
  BiasDirection bias_direction = BiasDirection::kAlongNormal;
};

struct Scene {
  SceneKind kind = SceneKind::kRoomCorner;
  double extent = 2.0;    // meters
  double density = 250.0; // points per square meter
  SensorNoiseSpec noise;

  void check() const {
    if (extent <= 0.0) throw Error("Scene: extent must be > 0");
    if (density <= 0.0) throw Error("Scene: density must be > 0");
    if (noise.sigma_white < 0.0 || noise.sigma_bias < 0.0) {
      throw Error("Scene: noise sigmas must be >= 0");
    }
  }
};

inline SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "room-corner") return SceneKind::kRoomCorner;
  if (s == "corridor") return SceneKind::kCorridor;
  if (s == "single-plane") return SceneKind::kSinglePlane;
  if (s == "random-blob") return SceneKind::kRandomBlob;
  throw Error("unknown scene kind: " + s);
}

inline std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::kRoomCorner: return "room-corner";
    case SceneKind::kCorridor: return "corridor";
    case SceneKind::kSinglePlane: return "single-plane";
    case SceneKind::kRandomBlob: return "random-blob";
  }
  return "?";
}

namespace detail {

// Rectangular planar patch: origin corner, two in-plane edges, unit normal.
struct Patch {
  Eigen::Vector3d origin;
  Eigen::Vector3d edge_u;
  Eigen::Vector3d edge_v;
  Eigen::Vector3d normal;
};

inline std::vector<Patch> scene_patches(const Scene& scene, std::uint64_t geometry_seed) {
  const double e = scene.extent;
  std::vector<Patch> patches;
  switch (scene.kind) {
    case SceneKind::kRoomCorner: {
      // Three orthogonal patches held off the corner lines so that, near
      // the aligned pose, every point matches its own plane.
      const double m = 0.25 * e;
      const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
      const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
      const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
      patches.push_back({m * (ex + ey), e * ex, e * ey, ez});        // floor z=0
      patches.push_back({m * (ey + ez), e * ey, e * ez, ex});        // wall x=0
      patches.push_back({m * (ex + ez), e * ex, e * ez, ey});        // wall y=0
      break;
    }
    case SceneKind::kCorridor: {
      // Axis along x: two parallel walls plus a floor. No surface carries
      // information about translation along the axis.
      const double length = 3.0 * e;
      const double half_width = 0.25 * e;
      const double height = 0.5 * e;
      const Eigen::Vector3d x0(-0.5 * length, 0.0, 0.0);
      patches.push_back({x0 + Eigen::Vector3d(0, -half_width, 0),
                         Eigen::Vector3d(length, 0, 0), Eigen::Vector3d(0, 0, height),
                         Eigen::Vector3d::UnitY()});
      patches.push_back({x0 + Eigen::Vector3d(0, half_width, 0),
                         Eigen::Vector3d(length, 0, 0), Eigen::Vector3d(0, 0, height),
                         -Eigen::Vector3d::UnitY()});
      patches.push_back({x0 + Eigen::Vector3d(0, -half_width, 0),
                         Eigen::Vector3d(length, 0, 0),
                         Eigen::Vector3d(0, 2.0 * half_width, 0),
                         Eigen::Vector3d::UnitZ()});
      break;
    }
    case SceneKind::kSinglePlane: {
      patches.push_back({Eigen::Vector3d::Zero(), e * Eigen::Vector3d::UnitX(),
                         e * Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()});
      break;
    }
    case SceneKind::kRandomBlob: {
      // Unstructured stand-in: a fixed number of small patches with random
      // placement and orientation, deterministic in the geometry seed.
      std::mt19937_64 rng(geometry_seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unif(-0.5, 0.5);
      const int n_patches = 12;
      const double side = 0.4 * e;
      for (int i = 0; i < n_patches; ++i) {
        Eigen::Vector3d n(gauss(rng), gauss(rng), gauss(rng));
        n.normalize();
        Eigen::Vector3d helper = std::abs(n.z()) < 0.9 ? Eigen::Vector3d::UnitZ()
                                                       : Eigen::Vector3d::UnitX();
        const Eigen::Vector3d u = n.cross(helper).normalized();
        const Eigen::Vector3d v = n.cross(u);
        const Eigen::Vector3d center(e * unif(rng), e * unif(rng), e * unif(rng));
        patches.push_back({center - 0.5 * side * u - 0.5 * side * v, side * u,
                           side * v, n});
      }
      break;
    }
  }
  return patches;
}

inline PointCloud sample_patches(const std::vector<Patch>& patches, double density,
                                 std::mt19937_64& rng) {
  PointCloud cloud;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& patch : patches) {
    const double area = patch.edge_u.norm() * patch.edge_v.norm();
    const int n = std::max(1, static_cast<int>(std::lround(area * density)));
    for (int i = 0; i < n; ++i) {
      cloud.points.push_back(patch.origin + unif(rng) * patch.edge_u +
                             unif(rng) * patch.edge_v);
      cloud.normals.push_back(patch.normal);
    }
  }
  return cloud;
}

}  // namespace detail

// One clean sample of the scene geometry (analytic normals), in the scene
// frame. The geometry itself (patch layout) depends only on geometry_seed.
inline PointCloud sample_scene(const Scene& scene, std::mt19937_64& rng,
                               std::uint64_t geometry_seed = 0) {
  scene.check();
  const auto patches = detail::scene_patches(scene, geometry_seed);
  return detail::sample_patches(patches, scene.density, rng);
}

// Applies per-point white noise and a shared per-cloud bias, both acting
// along each point's normal (or along the ray to the sensor origin).
inline void add_sensor_noise(PointCloud& cloud, const SensorNoiseSpec& noise,
                             std::mt19937_64& rng,
                             const Eigen::Vector3d& sensor_origin = Eigen::Vector3d::Zero()) {
  if (noise.sigma_white <= 0.0 && noise.sigma_bias <= 0.0) return;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double bias = noise.sigma_bias > 0.0 ? noise.sigma_bias * gauss(rng) : 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // white noise acts along the surface normal
    if (noise.sigma_white > 0.0) {
      cloud.points[i] += noise.sigma_white * gauss(rng) * cloud.normals[i];
    }
    if (bias != 0.0) {
      Eigen::Vector3d dir = cloud.normals[i];
      if (noise.bias_direction == BiasDirection::kAlongRay) {
        const Eigen::Vector3d ray = cloud.points[i] - sensor_origin;
        const double norm = ray.norm();
        if (norm > 1e-12) dir = ray / norm;
      }
      cloud.points[i] += bias * dir;
    }
  }
}

// Reading cloud P (scene frame) and reference cloud Q (resampled, expressed
// so that registering P onto Q recovers T_true: q = T_true p for matching
// surface points). geometry_seed pins the patch layout independently of the
// sampling/noise seed, so callers can redraw noise over a fixed scene.
inline std::pair<PointCloud, PointCloud> generate_scene(const Scene& scene,
                                                        const Pose& t_true,
                                                        std::uint64_t seed,
                                                        std::uint64_t geometry_seed) {
  std::mt19937_64 rng(seed);
  PointCloud p = sample_scene(scene, rng, geometry_seed);
  add_sensor_noise(p, scene.noise, rng);
  PointCloud q = sample_scene(scene, rng, geometry_seed);
  add_sensor_noise(q, scene.noise, rng);
  q = transform_cloud(q, t_true);
  return {std::move(p), std::move(q)};
}

inline std::pair<PointCloud, PointCloud> generate_scene(const Scene& scene,
                                                        const Pose& t_true,
                                                        std::uint64_t seed) {
  return generate_scene(scene, t_true, seed, seed);
}

}  // namespace icpcov
