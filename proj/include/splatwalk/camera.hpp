#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/ply.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace splatwalk {

/// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (i, j)
/// covers [i, i+1) x [j, j+1); its center sits at (i + 0.5, j + 0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  /// Camera center in world coordinates.
  Vec3 position() const { return -rotation.transpose() * translation; }
  /// World-space direction of the image "up" axis (-y in camera space).
  Vec3 up_direction() const { return -rotation.row(1).transpose(); }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ArgumentError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ArgumentError("camera resolution must be positive");
    if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite())
      throw ArgumentError("camera parameters must be finite");
    if (!((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6))
      throw ArgumentError("camera rotation is not orthonormal");
  }

  /// Camera at eye looking at target; up is the approximate world up.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    return cam;
  }
};

namespace detail {

inline std::vector<double> json_numbers(const nlohmann::json& j, const char* key, std::size_t n) {
  if (!j.contains(key)) throw FormatError(std::string("camera entry lacks '") + key + "'");
  const auto& v = j.at(key);
  std::vector<double> out;
  if (v.is_number() && n == 2) {
    out = {v.get<double>(), v.get<double>()};
  } else {
    if (!v.is_array() || v.size() != n) throw FormatError(std::string("camera field '") + key + "' has the wrong shape");
    for (const auto& x : v) {
      if (!x.is_number()) throw FormatError(std::string("camera field '") + key + "' must be numeric");
      out.push_back(x.get<double>());
    }
  }
  for (double d : out)
    if (!std::isfinite(d)) throw FormatError(std::string("camera field '") + key + "' is not finite");
  return out;
}

}  // namespace detail

/// Entry layout: {focal:[fx,fy], principal:[cx,cy], resolution:[W,H],
/// rotation:[w,x,y,z] (world->camera), translation:[x,y,z]}.
inline Camera camera_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("camera entry must be an object");
  const auto focal = detail::json_numbers(j, "focal", 2);
  const auto principal = detail::json_numbers(j, "principal", 2);
  const auto res = detail::json_numbers(j, "resolution", 2);
  const auto rot = detail::json_numbers(j, "rotation", 4);
  const auto tr = detail::json_numbers(j, "translation", 3);
  Quat q(rot[0], rot[1], rot[2], rot[3]);
  if (q.norm() < 1e-12) throw FormatError("camera rotation quaternion has zero norm");
  if (res[0] != std::floor(res[0]) || res[1] != std::floor(res[1]) || res[0] < 1 || res[1] < 1 || res[0] > 65536 ||
      res[1] > 65536)
    throw FormatError("camera resolution must be positive integers");
  Camera cam;
  cam.fx = focal[0];
  cam.fy = focal[1];
  cam.cx = principal[0];
  cam.cy = principal[1];
  cam.width = static_cast<int>(res[0]);
  cam.height = static_cast<int>(res[1]);
  cam.rotation = q.normalized().toRotationMatrix();
  cam.translation = Vec3(tr[0], tr[1], tr[2]);
  try {
    cam.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return cam;
}

inline nlohmann::json camera_to_json(const Camera& cam) {
  const Quat q(cam.rotation);
  return {{"focal", {cam.fx, cam.fy}},
          {"principal", {cam.cx, cam.cy}},
          {"resolution", {cam.width, cam.height}},
          {"rotation", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}}};
}

/// Accepts a bare list or {"cameras": [...]}.
inline std::vector<Camera> parse_camera_trajectory(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera file is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("cameras")) doc = doc.at("cameras");
  if (!doc.is_array() || doc.empty()) throw FormatError("camera trajectory must be a non-empty list");
  std::vector<Camera> out;
  for (const auto& entry : doc) out.push_back(camera_from_json(entry));
  return out;
}

inline std::vector<Camera> load_camera_trajectory(const std::filesystem::path& path) {
  return parse_camera_trajectory(read_file_bytes(path));
}

inline void save_camera_trajectory(const std::vector<Camera>& cams, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& c : cams) doc.push_back(camera_to_json(c));
  write_file_bytes(path, doc.dump(2) + "\n");
}

}  // namespace splatwalk
