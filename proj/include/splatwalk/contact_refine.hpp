#pragma once

// Contact-aware translation refinement of posed body Gaussians against the
// scene soft-distance field.

#include <splatwalk/body.hpp>
#include <splatwalk/optim.hpp>
#include <splatwalk/parallel.hpp>
#include <splatwalk/scene_field.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace splatwalk {

struct RefineWeights {
  double snap = 1.0;         // lambda_s
  double distance = 1000.0;  // lambda_d
  double magnitude = 10.0;   // lambda_r
  double temporal = 50.0;    // lambda_t
};

/// One contact marker: its Gaussian index set and per-frame flags.
struct ContactTrack {
  std::string marker;
  std::vector<std::size_t> indices;
  std::vector<bool> flags;
};

struct RefineProblem {
  std::vector<GaussianSet> frames;
  std::vector<ContactTrack> contacts;
  /// Skinning weights of the body (rows match the frame Gaussians). Used to
  /// carry each marker's translation onto the rest of the body. May be empty.
  Eigen::MatrixXd skin_weights;
  RefineWeights weights;
  double separation = 0.05;  // r
  double max_translation = 0.2;
  /// One translation per Gaussian instead of one per marker.
  bool per_gaussian = false;
  DistanceFieldParams field;
  MinimizeOptions solver;

  void validate() const {
    if (frames.empty()) throw ArgumentError("refinement needs at least one frame");
    if (contacts.empty()) throw ArgumentError("refinement needs at least one contact track");
    if (!(separation > 0.0)) throw ArgumentError("separation radius must be positive");
    if (weights.snap < 0 || weights.distance < 0 || weights.magnitude < 0 || weights.temporal < 0)
      throw ArgumentError("refinement weights must be non-negative");
    if (!field.index) throw ArgumentError("refinement needs a distance field");
    for (const auto& c : contacts) {
      if (c.indices.empty()) throw ArgumentError("contact track '" + c.marker + "' has no Gaussians");
      if (c.flags.size() != frames.size()) throw ArgumentError("contact flags for '" + c.marker + "' do not match frames");
      for (std::size_t k : c.indices)
        for (const auto& f : frames)
          if (k >= f.size()) throw ArgumentError("contact index out of range");
    }
    if (skin_weights.size() != 0)
      for (const auto& f : frames)
        if (static_cast<Eigen::Index>(f.size()) != skin_weights.rows())
          throw ArgumentError("skinning weights do not match the frame Gaussians");
  }
};

/// lambda_s |x+T-mu|^2 + lambda_d psi(x+T, delta) + lambda_r |T|^2 with mu the
/// nearest scene center to x+T.
inline double refine_frame_term(const Vec3& x, bool delta, const RefineProblem& prob, const Vec3& t) {
  const Vec3 y = x + t;
  const auto near = prob.field.index->nearest(y);
  const double d = soft_distance(y, prob.field);
  const double psi = delta ? d * d : std::pow(std::max(0.0, prob.separation - d), 2);
  return prob.weights.snap * near->distance * near->distance + prob.weights.distance * psi +
         prob.weights.magnitude * t.squaredNorm();
}

namespace detail {

struct TermGrad {
  double value;
  Vec3 grad;
};

inline TermGrad refine_term_grad(const Vec3& x, bool delta, const RefineProblem& prob, const Vec3& t) {
  const Vec3 y = x + t;
  if (!y.allFinite()) throw DataError("non-finite body Gaussian position");
  const Vec3 mu = prob.field.index->point(prob.field.index->nearest(y)->index);
  const auto s = soft_distance_with_grad(y, prob.field);
  if (!std::isfinite(s.value) || !s.gradient.allFinite()) throw DataError("soft distance is not finite");
  const auto& w = prob.weights;
  double psi, dpsi;
  if (delta) {
    psi = s.value * s.value;
    dpsi = 2.0 * s.value;
  } else {
    const double h = std::max(0.0, prob.separation - s.value);
    psi = h * h;
    dpsi = -2.0 * h;
  }
  return {w.snap * (y - mu).squaredNorm() + w.distance * psi + w.magnitude * t.squaredNorm(),
          2.0 * w.snap * (y - mu) + w.distance * dpsi * s.gradient + 2.0 * w.magnitude * t};
}

/// A translation group: the Gaussians sharing one T and the track it belongs to.
struct Group {
  std::size_t track;
  std::vector<std::size_t> members;
};

inline std::vector<Group> make_groups(const RefineProblem& prob) {
  std::vector<Group> out;
  for (std::size_t c = 0; c < prob.contacts.size(); ++c) {
    if (prob.per_gaussian) {
      for (std::size_t k : prob.contacts[c].indices) out.push_back({c, {k}});
    } else {
      out.push_back({c, prob.contacts[c].indices});
    }
  }
  return out;
}

}  // namespace detail

/// Share of each track's translation carried by every Gaussian: 1 on the
/// track's own index set, otherwise the cosine similarity between the
/// Gaussian's skinning row and the mean row of the set. Rows are rescaled so
/// that shares sum to at most 1.
inline Eigen::MatrixXd translation_shares(const RefineProblem& prob) {
  const std::size_t n = prob.frames.front().size();
  const std::size_t m = prob.contacts.size();
  Eigen::MatrixXd share = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c) {
    const auto& track = prob.contacts[c];
    if (prob.skin_weights.size() != 0) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(prob.skin_weights.cols());
      for (std::size_t k : track.indices) mean += prob.skin_weights.row(static_cast<Eigen::Index>(k));
      mean /= static_cast<double>(track.indices.size());
      const double mn = mean.norm();
      for (std::size_t k = 0; k < n; ++k) {
        const auto row = prob.skin_weights.row(static_cast<Eigen::Index>(k));
        const double rn = row.norm();
        if (rn > 0.0 && mn > 0.0)
          share(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = std::clamp(row.dot(mean) / (rn * mn), 0.0, 1.0);
      }
    }
    for (std::size_t k : track.indices) share(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = 1.0;
  }
  for (Eigen::Index k = 0; k < share.rows(); ++k) {
    const double s = share.row(k).sum();
    if (s > 1.0) share.row(k) /= s;
  }
  return share;
}

struct RefineResult {
  /// translations[group][frame]; one group per contact track unless
  /// per-Gaussian mode is on.
  std::vector<std::vector<Vec3>> translations;
  std::vector<std::string> group_markers;
  std::vector<GaussianSet> frames;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  MinimizeResult stats;
};

/// Total refinement objective and its gradient over the stacked translations
/// x = [T(group 0, frame 0), T(group 0, frame 1), ...].
class RefineObjective {
 public:
  explicit RefineObjective(const RefineProblem& prob) : prob_(prob), groups_(detail::make_groups(prob)) { prob.validate(); }

  Eigen::Index size() const { return static_cast<Eigen::Index>(3 * groups_.size() * prob_.frames.size()); }
  const std::vector<detail::Group>& groups() const { return groups_; }

  Vec3 translation(const Eigen::VectorXd& x, std::size_t g, std::size_t t) const {
    return x.segment<3>(static_cast<Eigen::Index>(3 * (g * prob_.frames.size() + t)));
  }

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const std::size_t nf = prob_.frames.size(), ng = groups_.size();
    grad = Eigen::VectorXd::Zero(x.size());
    // First pass: per-frame data terms, each frame owning its own slots.
    std::vector<double> frame_value(nf, 0.0);
    parallel_for(nf, [&](std::size_t t) {
      double v = 0.0;
      for (std::size_t g = 0; g < ng; ++g) {
        const Vec3 tr = translation(x, g, t);
        const bool delta = prob_.contacts[groups_[g].track].flags[t];
        Vec3 gsum = Vec3::Zero();
        for (std::size_t k : groups_[g].members) {
          const auto r = detail::refine_term_grad(prob_.frames[t][k].center, delta, prob_, tr);
          v += r.value;
          gsum += r.grad;
        }
        grad.segment<3>(static_cast<Eigen::Index>(3 * (g * nf + t))) = gsum;
      }
      frame_value[t] = v;
    });
    double total = 0.0;
    for (double v : frame_value) total += v;
    // Second pass: temporal coupling, in a fixed order.
    const double lt = prob_.weights.temporal;
    for (std::size_t g = 0; g < ng; ++g) {
      const double count = static_cast<double>(groups_[g].members.size());
      for (std::size_t t = 1; t < nf; ++t) {
        const Vec3 d = translation(x, g, t) - translation(x, g, t - 1);
        total += lt * count * d.squaredNorm();
        grad.segment<3>(static_cast<Eigen::Index>(3 * (g * nf + t))) += 2.0 * lt * count * d;
        grad.segment<3>(static_cast<Eigen::Index>(3 * (g * nf + t - 1))) -= 2.0 * lt * count * d;
      }
    }
    return total;
  }

  /// Clamp every translation to the maximum length.
  void project(Eigen::VectorXd& x) const {
    for (Eigen::Index i = 0; i + 2 < x.size(); i += 3) {
      const double n = x.segment<3>(i).norm();
      if (n > prob_.max_translation) x.segment<3>(i) *= prob_.max_translation / n;
    }
  }

 private:
  const RefineProblem& prob_;
  std::vector<detail::Group> groups_;
};

/// Applies translations to every frame. In shared mode the rest of the body
/// follows through translation_shares; in per-Gaussian mode only the refined
/// Gaussians move.
inline std::vector<GaussianSet> apply_translations(const RefineProblem& prob, const std::vector<detail::Group>& groups,
                                                   const std::vector<std::vector<Vec3>>& tr) {
  const std::size_t nf = prob.frames.size();
  std::vector<std::vector<Vec3>> centers(nf);
  for (std::size_t t = 0; t < nf; ++t) centers[t] = prob.frames[t].centers();
  if (prob.per_gaussian) {
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (std::size_t t = 0; t < nf; ++t) centers[t][groups[g].members.front()] += tr[g][t];
  } else {
    const Eigen::MatrixXd share = translation_shares(prob);
    parallel_for(nf, [&](std::size_t t) {
      for (std::size_t k = 0; k < centers[t].size(); ++k)
        for (std::size_t c = 0; c < groups.size(); ++c) {
          const double a = share(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
          if (a != 0.0) centers[t][k] += a * tr[c][t];
        }
    });
  }
  std::vector<GaussianSet> out;
  for (std::size_t t = 0; t < nf; ++t) out.push_back(prob.frames[t].with_centers(centers[t]));
  return out;
}

inline RefineResult refine(const RefineProblem& prob) {
  const RefineObjective objective(prob);
  RefineResult out;
  Eigen::VectorXd g;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(objective.size());
  out.initial_objective = objective(zero, g);
  out.stats = minimize(objective, zero, prob.solver, [&](Eigen::VectorXd& x) { objective.project(x); });
  out.final_objective = out.stats.value;
  const auto& groups = objective.groups();
  const std::size_t nf = prob.frames.size();
  out.translations.assign(groups.size(), std::vector<Vec3>(nf, Vec3::Zero()));
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    out.group_markers.push_back(prob.contacts[groups[gi].track].marker);
    for (std::size_t t = 0; t < nf; ++t) out.translations[gi][t] = objective.translation(out.stats.x, gi, t);
  }
  out.frames = apply_translations(prob, groups, out.translations);
  return out;
}

/// Per frame: Gaussians in the contact region of a flagged marker, i.e. with
/// a translation share of at least 1/2 from that marker.
inline std::vector<std::vector<bool>> contact_region_masks(const RefineProblem& prob) {
  const Eigen::MatrixXd share = translation_shares(prob);
  std::vector<std::vector<bool>> out(prob.frames.size(), std::vector<bool>(prob.frames.front().size(), false));
  for (std::size_t t = 0; t < prob.frames.size(); ++t)
    for (std::size_t c = 0; c < prob.contacts.size(); ++c)
      if (prob.contacts[c].flags[t])
        for (Eigen::Index k = 0; k < share.rows(); ++k)
          if (share(k, static_cast<Eigen::Index>(c)) >= 0.5) out[t][static_cast<std::size_t>(k)] = true;
  return out;
}

/// Per frame, the number of Gaussian centers with soft distance below r/2
/// that are not excluded as intended contact.
inline std::vector<std::size_t> penetration_report(const std::vector<GaussianSet>& frames, const DistanceFieldParams& field,
                                                   double r, const std::vector<std::vector<bool>>& excluded = {}) {
  std::vector<std::size_t> out(frames.size(), 0);
  // d_NN - log(N)/beta <= d <= d_NN decides most samples without the sum.
  const double slack = std::log(static_cast<double>(field.index->size())) / field.beta;
  parallel_for(frames.size(), [&](std::size_t t) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < frames[t].size(); ++k) {
      if (t < excluded.size() && k < excluded[t].size() && excluded[t][k]) continue;
      const Vec3& x = frames[t][k].center;
      const double nn = field.index->nearest(x)->distance;
      if (nn < 0.5 * r || (nn - slack < 0.5 * r && soft_distance(x, field) < 0.5 * r)) ++n;
    }
    out[t] = n;
  });
  return out;
}

inline nlohmann::json translations_to_json(const RefineResult& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t g = 0; g < r.translations.size(); ++g)
    for (std::size_t t = 0; t < r.translations[g].size(); ++t) {
      const Vec3& v = r.translations[g][t];
      arr.push_back({{"marker", r.group_markers[g]}, {"frame", t}, {"T", {v.x(), v.y(), v.z()}}});
    }
  return arr;
}

}  // namespace splatwalk
