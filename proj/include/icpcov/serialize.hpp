#pragma once

// JSON (de)serialization for the library types. Matrices are stored as flat
// row-major arrays; poses as 16 numbers, twists as 6 numbers [phi; rho].

#include <json.hpp>

#include <string>

#include "icpcov/covariance.hpp"
#include "icpcov/icp.hpp"
#include "icpcov/scene.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

using Json = nlohmann::json;

template <typename Derived>
Json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  Json arr = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

template <typename Matrix>
Matrix matrix_from_json(const Json& arr) {
  Matrix m;
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(m.rows() * m.cols())) {
    throw Error("matrix_from_json: expected " + std::to_string(m.rows() * m.cols()) +
                " numbers");
  }
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = arr[i++].get<double>();
  return m;
}

inline Json to_json(const Pose& pose) { return matrix_to_json(pose.matrix()); }

inline Pose pose_from_json(const Json& arr) {
  return Pose::FromMatrix(matrix_from_json<Eigen::Matrix4d>(arr));
}

inline Json to_json(const Twist& xi) { return matrix_to_json(xi.vector()); }

inline Twist twist_from_json(const Json& arr) {
  return Twist(matrix_from_json<Vector6d>(arr));
}

inline Json to_json(const PoseGaussian& g) {
  return Json{{"pose", to_json(g.mean)}, {"cov", matrix_to_json(g.cov)}};
}

inline PoseGaussian pose_gaussian_from_json(const Json& j) {
  return PoseGaussian(pose_from_json(j.at("pose")), matrix_from_json<Matrix6d>(j.at("cov")));
}

inline Json to_json(const IcpConfig& c) {
  return Json{{"keep_probability", c.keep_probability},
              {"trim_ratio", c.trim_ratio},
              {"max_iterations", c.max_iterations},
              {"trans_converged", c.trans_converged},
              {"rot_converged", c.rot_converged},
              {"seed", c.seed}};
}

inline IcpConfig icp_config_from_json(const Json& j) {
  IcpConfig c;
  c.keep_probability = j.value("keep_probability", c.keep_probability);
  c.trim_ratio = j.value("trim_ratio", c.trim_ratio);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.trans_converged = j.value("trans_converged", c.trans_converged);
  c.rot_converged = j.value("rot_converged", c.rot_converged);
  c.seed = j.value("seed", c.seed);
  c.check();
  return c;
}

inline Json to_json(const NoiseParams& n) {
  return Json{{"sigma_white", n.sigma_white}, {"sigma_bias", n.sigma_bias}};
}

inline NoiseParams noise_params_from_json(const Json& j) {
  NoiseParams n;
  n.sigma_white = j.value("sigma_white", n.sigma_white);
  n.sigma_bias = j.value("sigma_bias", n.sigma_bias);
  n.check();
  return n;
}

inline Json to_json(const SensorNoiseSpec& n) {
  return Json{{"sigma_white", n.sigma_white},
              {"sigma_bias", n.sigma_bias},
              {"bias_direction",
               n.bias_direction == BiasDirection::kAlongRay ? "along-ray" : "along-normal"}};
}

inline SensorNoiseSpec sensor_noise_from_json(const Json& j) {
  SensorNoiseSpec n;
  n.sigma_white = j.value("sigma_white", n.sigma_white);
  n.sigma_bias = j.value("sigma_bias", n.sigma_bias);
  const std::string dir = j.value("bias_direction", std::string("along-normal"));
  if (dir == "along-normal") {
    n.bias_direction = BiasDirection::kAlongNormal;
  } else if (dir == "along-ray") {
    n.bias_direction = BiasDirection::kAlongRay;
  } else {
    throw Error("unknown bias_direction: " + dir);
  }
  return n;
}

inline Json to_json(const Scene& s) {
  return Json{{"kind", to_string(s.kind)},
              {"extent", s.extent},
              {"density", s.density},
              {"noise", to_json(s.noise)}};
}

inline Scene scene_from_json(const Json& j) {
  Scene s;
  s.kind = scene_kind_from_string(j.value("kind", std::string("room-corner")));
  s.extent = j.value("extent", s.extent);
  s.density = j.value("density", s.density);
  if (j.contains("noise")) s.noise = sensor_noise_from_json(j.at("noise"));
  s.check();
  return s;
}

inline Json to_json(const IcpResult& r) {
  return Json{{"pose", to_json(r.T_icp)},
              {"pose_relative", to_json(r.T_rel_hat)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"residual_rms", r.residual_rms},
              {"matches", r.system.K}};
}

inline Json to_json(const CovarianceReport& r) {
  return Json{{"Q_sensor_term", matrix_to_json(r.Q_sensor_term)},
              {"Q_init_term", matrix_to_json(r.Q_init_term)},
              {"J", matrix_to_json(r.J)},
              {"Q_icp", matrix_to_json(r.Q_icp)},
              {"Q_joint", matrix_to_json(r.Q_joint)},
              {"xi_icp_mean", to_json(r.xi_icp_mean)}};
}

}  // namespace icpcov
