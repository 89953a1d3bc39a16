#pragma once

// CSV ingestion and export.
//
// Cloud format: header "x,y,z[,nx,ny,nz]", extra columns ignored.
// Trajectory format: one row per scan, "index" followed by the 16 row-major
// entries of the 4x4 pose matrix.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "icpcov/pointcloud.hpp"
#include "icpcov/se3.hpp"

namespace icpcov {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

inline double parse_number(const std::string& cell, int row, const std::string& path) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                " of " + path);
  }
  return value;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline PointCloud load_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open cloud file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty cloud file: " + path);
  const auto header = detail::split_csv_line(line);
  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& h = header[c];
    if (h == "x") ix = c;
    else if (h == "y") iy = c;
    else if (h == "z") iz = c;
    else if (h == "nx") inx = c;
    else if (h == "ny") iny = c;
    else if (h == "nz") inz = c;
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw Error("cloud file " + path + " is missing x/y/z columns");
  }
  const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    auto cell = [&](int c) -> double {
      if (c >= static_cast<int>(cells.size())) {
        throw Error("short row " + std::to_string(row) + " in " + path);
      }
      return detail::parse_number(cells[c], row, path);
    };
    cloud.points.emplace_back(cell(ix), cell(iy), cell(iz));
    if (with_normals) {
      Eigen::Vector3d n(cell(inx), cell(iny), cell(inz));
      const double norm = n.norm();
      if (norm < 1e-12) {
        throw Error("zero-norm normal at row " + std::to_string(row) + " of " + path);
      }
      cloud.normals.push_back(n / norm);
    }
  }
  cloud.check();
  return cloud;
}

inline void save_cloud_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write cloud file: " + path);
  out << (cloud.has_normals() ? "x,y,z,nx,ny,nz\n" : "x,y,z\n");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << detail::format_double(p.x()) << ',' << detail::format_double(p.y()) << ','
        << detail::format_double(p.z());
    if (cloud.has_normals()) {
      const auto& n = cloud.normals[i];
      out << ',' << detail::format_double(n.x()) << ',' << detail::format_double(n.y())
          << ',' << detail::format_double(n.z());
    }
    out << '\n';
  }
}

// Nearest rotation via polar decomposition; accepts small orthonormality
// defects, rejects reflections and anything beyond repair.
inline Eigen::Matrix3d orthonormalize_rotation(const Eigen::Matrix3d& raw) {
  const double defect =
      (raw.transpose() * raw - Eigen::Matrix3d::Identity()).norm();
  if (defect >= 1e-3) {
    throw Error("rotation block deviates from orthonormal beyond tolerance");
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    throw Error("rotation block is a reflection (det = -1), pose is non-rigid");
  }
  return r;
}

inline std::vector<std::pair<int, Pose>> load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory file: " + path);
  std::vector<std::pair<int, Pose>> out;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (row == 1 && !cells.empty() && cells[0] == "index") continue;  // optional header
    if (cells.size() < 17) {
      throw Error("malformed trajectory row " + std::to_string(row) + " in " + path);
    }
    const int index = static_cast<int>(detail::parse_number(cells[0], row, path));
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        m(r, c) = detail::parse_number(cells[1 + 4 * r + c], row, path);
    Pose pose = Pose::FromMatrix(m);
    pose.rotation = orthonormalize_rotation(pose.rotation);
    out.emplace_back(index, pose);
  }
  if (out.empty()) throw Error("empty trajectory file: " + path);
  return out;
}

inline void save_trajectory_csv(const std::vector<std::pair<int, Pose>>& trajectory,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trajectory file: " + path);
  for (const auto& [index, pose] : trajectory) {
    out << index;
    const Eigen::Matrix4d m = pose.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out << ',' << detail::format_double(m(r, c));
    out << '\n';
  }
}

}  // namespace icpcov
