// Batch front-end: scene synthesis, registration, covariance estimation,
// scenario sweeps and trajectory consistency runs.
//
// Exit codes: 0 success, 2 configuration / I-O error, 3 numerical or
// registration failure. Errors are emitted as JSON on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "icpcov/cloud_io.hpp"
#include "icpcov/covariance.hpp"
#include "icpcov/eval.hpp"
#include "icpcov/icp.hpp"
#include "icpcov/pointcloud.hpp"
#include "icpcov/scene.hpp"
#include "icpcov/se3.hpp"
#include "icpcov/serialize.hpp"

namespace {

using icpcov::Json;
using icpcov::Matrix6d;
using icpcov::Pose;
using icpcov::PointCloud;
using icpcov::Twist;
using icpcov::Vector6d;

struct ScenarioPreset {
  std::string name;
  double trans_sigma;  // meters
  double rot_sigma;    // degrees
};

const std::vector<ScenarioPreset> kPresets = {
    {"easy", 0.1, 10.0}, {"medium", 0.5, 20.0}, {"difficult", 1.0, 50.0}};

Matrix6d preset_covariance(const std::string& name) {
  for (const auto& p : kPresets) {
    if (p.name == name) {
      const double rot = p.rot_sigma * M_PI / 180.0;
      Matrix6d q = Matrix6d::Zero();
      q.diagonal().head<3>().setConstant(rot * rot);
      q.diagonal().tail<3>().setConstant(p.trans_sigma * p.trans_sigma);
      return q;
    }
  }
  throw icpcov::Error("unknown scenario preset: " + name);
}

Matrix6d q_ini_from_json(const Json& j) {
  if (j.is_string()) return preset_covariance(j.get<std::string>());
  return icpcov::matrix_from_json<Matrix6d>(j);
}

struct RunConfig {
  std::optional<icpcov::Scene> scene;
  std::vector<std::string> dataset_clouds;
  std::string dataset_trajectory;
  icpcov::IcpConfig icp;
  icpcov::NoiseParams noise;
  Matrix6d q_ini = preset_covariance("easy");
  std::string method = "proposed";
  int samples = 65;
  std::uint64_t seed = 0;
  std::string out;
  std::string normals = "analytic";  // or "estimated"
  int normal_k = 20;
  Pose t_true;
  std::optional<Pose> t_ini;
  Json raw;
};

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw icpcov::Error("cannot open config file: " + path);
  Json j;
  in >> j;

  RunConfig cfg;
  cfg.raw = j;
  const bool has_scene = j.contains("scene");
  const bool has_dataset = j.contains("dataset");
  if (has_scene == has_dataset) {
    throw icpcov::Error("config must specify exactly one of 'scene' or 'dataset'");
  }
  if (has_scene) cfg.scene = icpcov::scene_from_json(j.at("scene"));
  if (has_dataset) {
    const Json& d = j.at("dataset");
    if (d.contains("clouds")) {
      cfg.dataset_clouds = d.at("clouds").get<std::vector<std::string>>();
    }
    cfg.dataset_trajectory = d.value("trajectory", std::string());
  }
  if (j.contains("icp")) cfg.icp = icpcov::icp_config_from_json(j.at("icp"));
  if (j.contains("noise")) cfg.noise = icpcov::noise_params_from_json(j.at("noise"));
  if (j.contains("q_ini")) cfg.q_ini = q_ini_from_json(j.at("q_ini"));
  cfg.method = j.value("method", cfg.method);
  cfg.samples = j.value("samples", cfg.samples);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out = j.value("out", cfg.out);
  cfg.normals = j.value("normals", cfg.normals);
  cfg.normal_k = j.value("normal_k", cfg.normal_k);
  if (j.contains("t_true")) cfg.t_true = icpcov::pose_from_json(j.at("t_true"));
  if (j.contains("t_ini")) cfg.t_ini = icpcov::pose_from_json(j.at("t_ini"));
  if (cfg.method != "proposed" && cfg.method != "censi" && cfg.method != "monte-carlo") {
    throw icpcov::Error("unknown method: " + cfg.method);
  }
  return cfg;
}

// Reference cloud preparation: either trust the analytic normals or
// re-estimate them from the (noisy) points.
PointCloud prepare_reference(const PointCloud& cloud, const RunConfig& cfg) {
  if (cfg.normals == "estimated") {
    return icpcov::estimate_normals(cloud, cfg.normal_k);
  }
  if (cfg.normals != "analytic") {
    throw icpcov::Error("unknown normals mode: " + cfg.normals);
  }
  if (!cloud.has_normals()) {
    return icpcov::estimate_normals(cloud, cfg.normal_k);
  }
  return cloud;
}

struct Pair {
  PointCloud reading;
  PointCloud reference;
  Pose t_true;
};

Pair load_pair(const RunConfig& cfg) {
  Pair pair;
  if (cfg.scene) {
    auto [p, q] = icpcov::generate_scene(*cfg.scene, cfg.t_true, cfg.seed);
    pair.reading = std::move(p);
    pair.reference = prepare_reference(q, cfg);
    pair.t_true = cfg.t_true;
  } else {
    if (cfg.dataset_clouds.size() != 2) {
      throw icpcov::Error("dataset mode requires exactly two cloud paths");
    }
    pair.reading = icpcov::load_cloud_csv(cfg.dataset_clouds[0]);
    pair.reference = prepare_reference(icpcov::load_cloud_csv(cfg.dataset_clouds[1]), cfg);
    pair.t_true = cfg.t_true;
  }
  return pair;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw icpcov::Error("cannot write output file: " + path);
  out << text;
}

std::string fmt(double v) { return icpcov::detail::format_double(v); }

// 3-sigma confidence ellipse of the ground-plane (x, y) translation block,
// as a closed 50-vertex polyline.
std::string ellipse_csv(const Pose& mean, const Matrix6d& cov) {
  const Eigen::Matrix2d q = cov.block<2, 2>(3, 3);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(q);
  const Eigen::Vector2d radii = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::Matrix2d axes = eig.eigenvectors();
  std::string out = "x,y\n";
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    const Eigen::Vector2d p =
        mean.translation.head<2>() +
        axes * (3.0 * radii.cwiseProduct(Eigen::Vector2d(std::cos(a), std::sin(a))));
    out += fmt(p.x()) + "," + fmt(p.y()) + "\n";
  }
  return out;
}

Pose default_t_ini(const RunConfig& cfg) {
  if (cfg.t_ini) return *cfg.t_ini;
  return cfg.t_true;
}

int cmd_register(const RunConfig& cfg) {
  const Pair pair = load_pair(cfg);
  const icpcov::IcpResult res =
      icpcov::register_clouds(pair.reading, pair.reference, default_t_ini(cfg), cfg.icp);
  write_text(cfg.out, icpcov::to_json(res).dump(2) + "\n");
  return 0;
}

int cmd_estimate_cov(const RunConfig& cfg, bool ellipse) {
  const Pair pair = load_pair(cfg);
  const Pose t_ini = default_t_ini(cfg);

  Json out;
  Pose pose_estimate;
  Matrix6d q_for_ellipse = Matrix6d::Zero();
  if (cfg.method == "proposed") {
    icpcov::IcpResult icp;
    const icpcov::CovarianceReport report = icpcov::estimate(
        pair.reading, pair.reference, t_ini, cfg.q_ini, cfg.icp, cfg.noise, &icp);
    out = icpcov::to_json(report);
    out["method"] = "proposed";
    out["icp"] = icpcov::to_json(icp);
    pose_estimate = icp.T_icp;
    q_for_ellipse = report.Q_icp;
  } else if (cfg.method == "censi") {
    const icpcov::IcpResult icp =
        icpcov::register_clouds(pair.reading, pair.reference, t_ini, cfg.icp);
    const Matrix6d q = icpcov::censi_term(icp.system, cfg.noise.sigma_white);
    out["method"] = "censi";
    out["Q_icp"] = icpcov::matrix_to_json(q);
    out["icp"] = icpcov::to_json(icp);
    pose_estimate = icp.T_icp;
    q_for_ellipse = q;
  } else {  // monte-carlo
    const icpcov::SampledDistribution mc = icpcov::monte_carlo_covariance(
        pair.reading, pair.reference, pair.t_true, cfg.q_ini, cfg.samples, cfg.icp,
        cfg.seed + 1);
    out["method"] = "monte-carlo";
    out["Q_icp"] = icpcov::matrix_to_json(mc.cov);
    out["mean_xi"] = icpcov::to_json(mc.mean_xi);
    out["samples"] = mc.successes;
    out["failures"] = mc.failures;
    pose_estimate = pair.t_true;
    q_for_ellipse = mc.cov;
  }
  write_text(cfg.out, out.dump(2) + "\n");
  if (ellipse) {
    const std::string path = cfg.out.empty() ? "ellipse.csv" : cfg.out + ".ellipse.csv";
    write_text(path, ellipse_csv(pose_estimate, q_for_ellipse));
  }
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  if (!cfg.scene) throw icpcov::Error("synth requires a scene config");
  const std::string prefix = cfg.out.empty() ? "scene" : cfg.out;
  auto [p, q] = icpcov::generate_scene(*cfg.scene, cfg.t_true, cfg.seed);
  icpcov::save_cloud_csv(p, prefix + "_reading.csv");
  icpcov::save_cloud_csv(q, prefix + "_reference.csv");
  std::vector<std::pair<int, Pose>> gt = {{0, Pose::Identity()}, {1, cfg.t_true}};
  icpcov::save_trajectory_csv(gt, prefix + "_gt.csv");
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  if (!cfg.scene) throw icpcov::Error("sweep requires a scene config");
  const Json sweep = cfg.raw.value("sweep", Json::object());
  const auto true_names =
      sweep.value("true_presets", std::vector<std::string>{"easy", "medium", "difficult"});
  const auto assumed_names = sweep.value(
      "assumed_presets", std::vector<std::string>{"easy", "medium", "difficult"});
  const int draws = sweep.value("draws", 50);

  std::string csv = "scene,true,assumed,nne_full,nne_translation,nne_rotation,draws,failures\n";
  std::uint64_t cell_seed = cfg.seed;
  for (const auto& true_name : true_names) {
    for (const auto& assumed_name : assumed_names) {
      const Matrix6d q_true = preset_covariance(true_name);
      const Matrix6d q_assumed = preset_covariance(assumed_name);
      ++cell_seed;

      // one covariance estimate per cell, from a realistically perturbed
      // initialization
      RunConfig cell = cfg;
      cell.seed = cfg.seed + 1000 * cell_seed;
      const Pair base = load_pair(cell);
      const Pose t_ini = icpcov::sample_concentrated(
          icpcov::PoseGaussian(base.t_true, q_true), cell.seed + 17);

      int failures = 0;
      std::vector<icpcov::ErrorSample> samples;
      Matrix6d q_hat = Matrix6d::Zero();
      try {
        const icpcov::CovarianceReport report = icpcov::estimate(
            base.reading, base.reference, t_ini, q_assumed, cell.icp, cfg.noise);
        q_hat = report.Q_icp;
      } catch (const icpcov::Error&) {
        csv += to_string(cfg.scene->kind) + "," + true_name + "," + assumed_name +
               ",nan,nan,nan,0," + std::to_string(draws) + "\n";
        continue;
      }

      for (int d = 0; d < draws; ++d) {
        RunConfig draw_cfg = cell;
        draw_cfg.seed = cell.seed + 31 * (d + 1);
        try {
          const Pair pair = load_pair(draw_cfg);
          const Pose t_ini_d = icpcov::sample_concentrated(
              icpcov::PoseGaussian(pair.t_true, q_true), draw_cfg.seed + 7);
          const icpcov::IcpResult res =
              icpcov::register_clouds(pair.reading, pair.reference, t_ini_d, draw_cfg.icp);
          icpcov::ErrorSample s;
          s.xi = icpcov::log(icpcov::compose(icpcov::inverse(pair.t_true), res.T_icp));
          s.Q_hat = q_hat;
          samples.push_back(s);
        } catch (const icpcov::Error&) {
          ++failures;
        }
      }
      if (samples.empty()) {
        csv += to_string(cfg.scene->kind) + "," + true_name + "," + assumed_name +
               ",nan,nan,nan,0," + std::to_string(failures) + "\n";
        continue;
      }
      csv += to_string(cfg.scene->kind) + "," + true_name + "," + assumed_name + "," +
             fmt(icpcov::nne(samples, icpcov::Split::kFull)) + "," +
             fmt(icpcov::nne(samples, icpcov::Split::kTranslation)) + "," +
             fmt(icpcov::nne(samples, icpcov::Split::kRotation)) + "," +
             std::to_string(static_cast<int>(samples.size())) + "," +
             std::to_string(failures) + "\n";
    }
  }
  write_text(cfg.out, csv);
  return 0;
}

int cmd_trajectory(const RunConfig& cfg, bool fuse) {
  if (cfg.dataset_clouds.size() < 2 || cfg.dataset_trajectory.empty()) {
    throw icpcov::Error("trajectory requires >= 2 dataset clouds and a ground-truth file");
  }
  std::vector<PointCloud> scans;
  scans.reserve(cfg.dataset_clouds.size());
  for (const auto& path : cfg.dataset_clouds) {
    scans.push_back(icpcov::load_cloud_csv(path));
  }
  const auto gt = icpcov::load_trajectory_csv(cfg.dataset_trajectory);
  if (gt.size() != scans.size()) {
    throw icpcov::Error("ground-truth pose count does not match scan count");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::uint64_t> pick;

  std::vector<icpcov::PoseGaussian> relatives;
  for (std::size_t l = 1; l < scans.size(); ++l) {
    const Pose t_rel_true = icpcov::compose(icpcov::inverse(gt[l - 1].second), gt[l].second);
    const Pose t_ini = icpcov::sample_concentrated(
        icpcov::PoseGaussian(t_rel_true, cfg.q_ini), pick(rng));
    const PointCloud reference = prepare_reference(scans[l - 1], cfg);
    RunConfig pair_cfg = cfg;
    pair_cfg.icp.seed = cfg.icp.seed + l;
    icpcov::IcpResult icp;
    icpcov::CovarianceReport report;
    try {
      report = icpcov::estimate(scans[l], reference, t_ini, cfg.q_ini, pair_cfg.icp,
                                cfg.noise, &icp);
    } catch (const icpcov::Error& e) {
      throw icpcov::Error("trajectory pair " + std::to_string(l) + " failed: " + e.what());
    }
    relatives.push_back(fuse ? icpcov::ml_fuse(t_ini, icp.T_icp, report)
                             : icpcov::fuse_independent(t_ini, icp.T_icp,
                                                        cfg.q_ini, report.Q_icp));
  }

  const auto compounded = icpcov::compound_trajectory(relatives);

  std::string csv = "scan,mahalanobis_full,mahalanobis_translation,mahalanobis_rotation\n";
  std::vector<icpcov::ErrorSample> all;
  Json traj = Json::array();
  for (std::size_t l = 0; l < compounded.size(); ++l) {
    const Pose t_true_global =
        icpcov::compose(icpcov::inverse(gt[0].second), gt[l + 1].second);
    icpcov::ErrorSample s;
    s.xi = icpcov::log(icpcov::compose(icpcov::inverse(t_true_global), compounded[l].mean));
    s.Q_hat = compounded[l].cov;
    all.push_back(s);
    const std::vector<icpcov::ErrorSample> one = {s};
    csv += std::to_string(l + 1) + "," + fmt(icpcov::mahalanobis(one)) + "," +
           fmt(icpcov::mahalanobis(one, icpcov::Split::kTranslation)) + "," +
           fmt(icpcov::mahalanobis(one, icpcov::Split::kRotation)) + "\n";
    Json entry = icpcov::to_json(compounded[l]);
    entry["scan"] = static_cast<int>(l + 1);
    traj.push_back(entry);
  }
  Json out;
  out["trajectory"] = traj;
  out["fused"] = fuse;
  out["mahalanobis"] = Json{{"full", icpcov::mahalanobis(all)},
                            {"translation", icpcov::mahalanobis(all, icpcov::Split::kTranslation)},
                            {"rotation", icpcov::mahalanobis(all, icpcov::Split::kRotation)}};
  write_text(cfg.out.empty() ? std::string("-") : cfg.out + ".json", out.dump(2) + "\n");
  write_text(cfg.out.empty() ? std::string("-") : cfg.out + ".csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-to-plane ICP registration with 6-DoF covariance estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::string method_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> samples_override;
  bool fuse = false;
  bool ellipse = false;

  for (auto* sub : {app.add_subcommand("register", "register one pair of clouds"),
                    app.add_subcommand("estimate-cov", "registration covariance report"),
                    app.add_subcommand("sweep", "scenario grid sweep (NNE table)"),
                    app.add_subcommand("trajectory", "trajectory consistency run"),
                    app.add_subcommand("synth", "write synthetic scene clouds to CSV")}) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed_override, "override config seed");
    sub->add_option("--out", out_override, "override output path");
    if (sub->get_name() == "estimate-cov") {
      sub->add_option("--method", method_override, "proposed|censi|monte-carlo");
      sub->add_option("--samples", samples_override, "Monte-Carlo sample count");
      sub->add_flag("--ellipse", ellipse, "also write a 3-sigma ground-plane ellipse CSV");
    }
    if (sub->get_name() == "trajectory") {
      sub->add_flag("--fuse", fuse, "maximum-likelihood fusion with cross-covariance");
    }
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (samples_override) cfg.samples = *samples_override;
    if (!out_override.empty()) cfg.out = out_override;
    if (!method_override.empty()) cfg.method = method_override;

    if (command == "register") return cmd_register(cfg);
    if (command == "estimate-cov") return cmd_estimate_cov(cfg, ellipse);
    if (command == "sweep") return cmd_sweep(cfg);
    if (command == "trajectory") return cmd_trajectory(cfg, fuse);
    if (command == "synth") return cmd_synth(cfg);
    throw icpcov::Error("unknown command: " + command);
  } catch (const icpcov::SingularSystemError& e) {
    Json spectrum = Json::array();
    for (double v : e.spectrum()) spectrum.push_back(v);
    std::cerr << Json{{"error", e.what()}, {"code", 3}, {"spectrum", spectrum}}.dump()
              << std::endl;
    return 3;
  } catch (const Json::exception& e) {
    std::cerr << Json{{"error", e.what()}, {"code", 2}}.dump() << std::endl;
    return 2;
  } catch (const icpcov::Error& e) {
    const std::string what = e.what();
    // numerical / registration failures map to 3, config and I/O to 2
    const bool numerical = what.find("register") != std::string::npos ||
                           what.find("sigma point") != std::string::npos ||
                           what.find("singular") != std::string::npos ||
                           what.find("trajectory pair") != std::string::npos ||
                           what.find("matched pairs") != std::string::npos;
    std::cerr << Json{{"error", what}, {"code", numerical ? 3 : 2}}.dump() << std::endl;
    return numerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", e.what()}, {"code", 2}}.dump() << std::endl;
    return 2;
  }
}
