#pragma once

// External body files: a JSON document with the skeleton, sparse skinning
// weights and markers, next to a splat PLY holding the canonical Gaussians.

#include <splatwalk/body.hpp>
#include <splatwalk/ply.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace splatwalk {

namespace detail {

inline nlohmann::json sparse_row(const Eigen::VectorXd& w) {
  nlohmann::json row = nlohmann::json::array();
  for (Eigen::Index b = 0; b < w.size(); ++b)
    if (w[b] != 0.0) row.push_back({b, w[b]});
  return row;
}

inline Eigen::VectorXd dense_row(const nlohmann::json& row, std::size_t joints) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(joints));
  for (const auto& e : row) {
    const auto b = e.at(0).get<std::size_t>();
    if (b >= joints) throw FormatError("body weight refers to joint " + std::to_string(b));
    w[static_cast<Eigen::Index>(b)] = e.at(1).get<double>();
  }
  return w;
}

}  // namespace detail

/// Writes `path` (JSON) and the canonical Gaussians as a PLY next to it.
inline void save_body(const SkinnedBody& body, const std::filesystem::path& path) {
  const std::string ply = path.stem().string() + ".ply";
  nlohmann::json sk;
  sk["names"] = body.skeleton.names;
  sk["parents"] = body.skeleton.parents;
  nlohmann::json rest = nlohmann::json::array();
  for (const auto& r : body.skeleton.rest) rest.push_back({r.x(), r.y(), r.z()});
  sk["rest"] = rest;
  nlohmann::json weights = nlohmann::json::array();
  for (Eigen::Index k = 0; k < body.weights.rows(); ++k) weights.push_back(detail::sparse_row(body.weights.row(k).transpose()));
  nlohmann::json markers = nlohmann::json::array();
  for (const auto& m : body.markers)
    markers.push_back({{"name", m.name},
                       {"position", {m.position.x(), m.position.y(), m.position.z()}},
                       {"weights", detail::sparse_row(m.weights)}});
  const nlohmann::json j = {{"canonical", ply}, {"skeleton", sk}, {"weights", weights}, {"markers", markers}};
  save_splat_ply(body.canonical, path.parent_path() / ply);
  write_file_bytes(path, j.dump(1) + "\n");
}

inline SkinnedBody load_body(const std::filesystem::path& path) {
  SkinnedBody body;
  try {
    const auto j = nlohmann::json::parse(read_file_bytes(path));
    const auto& sk = j.at("skeleton");
    body.skeleton.names = sk.at("names").get<std::vector<std::string>>();
    body.skeleton.parents = sk.at("parents").get<std::vector<int>>();
    for (const auto& r : sk.at("rest")) body.skeleton.rest.emplace_back(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
    body.skeleton.validate();
    body.canonical = load_splat_ply(path.parent_path() / j.at("canonical").get<std::string>());
    const std::size_t nj = body.skeleton.size();
    const auto& w = j.at("weights");
    if (w.size() != body.canonical.size()) throw FormatError("body weights need one row per canonical Gaussian");
    body.weights.resize(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(nj));
    for (std::size_t k = 0; k < w.size(); ++k) body.weights.row(static_cast<Eigen::Index>(k)) = detail::dense_row(w[k], nj).transpose();
    for (const auto& m : j.at("markers")) {
      const auto& p = m.at("position");
      body.markers.push_back({m.at("name").get<std::string>(),
                              Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()),
                              detail::dense_row(m.at("weights"), nj)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed body file: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("malformed body file: ") + e.what());
  }
  for (Eigen::Index k = 0; k < body.weights.rows(); ++k) {
    const auto row = body.weights.row(k);
    if (row.minCoeff() < 0.0 || std::abs(row.sum() - 1.0) > 1e-6 || (row.array() != 0.0).count() > 4)
      throw DataError("body weight row is not a valid skinning row", static_cast<std::size_t>(k));
  }
  return body;
}

}  // namespace splatwalk
