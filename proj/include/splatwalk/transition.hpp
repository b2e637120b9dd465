#pragma once

// Short goal-directed motion snippets. The snippet is an explicit
// parameterization of an initial clip: a clamped cubic B-spline offset on the
// root translation plus one rotation vector per joint whose effect ramps in
// linearly over the snippet. Frame 1 rotations are therefore never changed.

#include <splatwalk/body.hpp>
#include <splatwalk/motion.hpp>
#include <splatwalk/optim.hpp>
#include <splatwalk/parallel.hpp>
#include <splatwalk/scene_field.hpp>

#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <string>
#include <vector>

namespace splatwalk {

/// A point carried by the skin: canonical position and a weight row.
struct SkinnedPoint {
  Vec3 position = Vec3::Zero();
  Eigen::VectorXd weights;
};

/// Marker of that name, else the joint of that name at its rest position.
inline SkinnedPoint anchor_point(const SkinnedBody& body, const std::string& name) {
  for (const auto& m : body.markers)
    if (m.name == name) return {m.position, m.weights};
  const int j = body.skeleton.index_of(name);
  if (j < 0) throw ArgumentError("unknown anchor '" + name + "'");
  SkinnedPoint p;
  p.position = body.skeleton.rest[static_cast<std::size_t>(j)];
  p.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(body.skeleton.size()));
  p.weights[j] = 1.0;
  return p;
}

/// Collision samples: every contact marker plus `count` evenly strided
/// canonical Gaussians.
inline std::vector<SkinnedPoint> collision_samples(const SkinnedBody& body, std::size_t count = 30) {
  std::vector<SkinnedPoint> out;
  for (const auto& m : body.markers) out.push_back({m.position, m.weights});
  const std::size_t n = body.canonical.size();
  count = std::min(count, n);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = i * n / count;
    out.push_back({body.canonical[k].center, body.weights.row(static_cast<Eigen::Index>(k)).transpose()});
  }
  return out;
}

struct TransitionWeights {
  double stop = 10.0;
  double start = 10.0;
  double coll = 10.0;
  double smooth = 1.0;
};

struct TransitionProblem {
  Skeleton skeleton;
  Pose seed;
  Vec3 goal = Vec3::Zero();
  std::string anchor_name = "pelvis";
  SkinnedPoint anchor;
  int frames = 30;
  double fps = 30.0;
  TransitionWeights weights;
  std::vector<SkinnedPoint> samples;
  double r_body = 0.1;
  /// Root spline control points (at least 4).
  int control_points = 6;

  void validate() const {
    if (frames < 2) throw ArgumentError("a transition needs at least two frames");
    if (control_points < 4) throw ArgumentError("the root spline needs at least four control points");
    if (weights.stop < 0 || weights.start < 0 || weights.coll < 0 || weights.smooth < 0)
      throw ArgumentError("transition weights must be non-negative");
    if (seed.rotations.size() != skeleton.size()) throw ArgumentError("seed pose joint count mismatch");
    if (anchor.weights.size() != static_cast<Eigen::Index>(skeleton.size()))
      throw ArgumentError("anchor weight row does not match the skeleton");
    if (!goal.allFinite()) throw ArgumentError("goal must be finite");
  }
};

inline TransitionProblem make_transition_problem(const SkinnedBody& body, const Pose& seed, const Vec3& goal,
                                                 const std::string& anchor = "pelvis", int frames = 30,
                                                 double fps = 30.0) {
  TransitionProblem p;
  p.skeleton = body.skeleton;
  p.seed = seed;
  p.goal = goal;
  p.anchor_name = anchor;
  p.anchor = anchor_point(body, anchor);
  p.frames = frames;
  p.fps = fps;
  p.samples = collision_samples(body);
  p.validate();
  return p;
}

struct TransitionLoss {
  double reach = 0.0, stop = 0.0, start = 0.0, coll = 0.0, smooth = 0.0, total = 0.0;
};

namespace detail {

inline double field_value(const Vec3& x, const DistanceFieldParams& f) { return soft_distance(x, f); }

template <typename D>
Eigen::AutoDiffScalar<D> field_value(const Vec3T<Eigen::AutoDiffScalar<D>>& x, const DistanceFieldParams& f) {
  const Vec3 v(x.x().value(), x.y().value(), x.z().value());
  const auto s = soft_distance_with_grad(v, f);
  D d = s.gradient.x() * x.x().derivatives();
  d += s.gradient.y() * x.y().derivatives();
  d += s.gradient.z() * x.z().derivatives();
  return Eigen::AutoDiffScalar<D>(s.value, d);
}

template <typename T>
T squared_diff(const QuatT<T>& a, const QuatT<T>& b) {
  return (a.coeffs() - b.coeffs()).squaredNorm();
}

template <typename T>
struct LossTerms {
  T reach, stop, start, coll, smooth;
};

/// The transition objective over per-frame root translations and local
/// rotations of any scalar type.
template <typename T>
LossTerms<T> transition_terms(const std::vector<Vec3T<T>>& roots, const std::vector<std::vector<QuatT<T>>>& rots,
                              const TransitionProblem& prob, const DistanceFieldParams* field) {
  const std::size_t f = roots.size();
  const auto& sk = prob.skeleton;
  // Derived from a variable so autodiff zeros carry full-length derivatives.
  const T zero = roots[0].x() * 0.0;
  LossTerms<T> out{zero, zero, zero, zero, zero};

  const auto tf_last = world_transforms<T>(sk, roots[f - 1], rots[f - 1]);
  const auto tf_prev = world_transforms<T>(sk, roots[f - 2], rots[f - 2]);
  const Vec3T<T> x_last = skin_point<T>(prob.anchor.position, prob.anchor.weights, tf_last);
  const Vec3T<T> x_prev = skin_point<T>(prob.anchor.position, prob.anchor.weights, tf_prev);
  out.reach = (x_last - prob.goal.cast<T>()).squaredNorm();
  out.stop = (x_last - x_prev).squaredNorm();

  out.start = (roots[0] - prob.seed.root_translation.cast<T>()).squaredNorm();
  for (std::size_t j = 0; j < sk.size(); ++j) out.start += squared_diff<T>(rots[0][j], prob.seed.rotations[j].cast<T>());

  std::vector<T> per_frame(f, zero);
  parallel_for(f - 1, [&](std::size_t i) {
    const std::size_t t = i + 1;
    T s = (roots[t] - roots[t - 1]).squaredNorm();
    for (std::size_t j = 0; j < sk.size(); ++j) s += squared_diff<T>(rots[t][j], rots[t - 1][j]);
    per_frame[t] = s;
  });
  for (std::size_t t = 1; t < f; ++t) out.smooth += per_frame[t];
  out.smooth /= T(static_cast<double>(f - 1));

  if (field) {
    for (const auto& b : prob.samples) {
      const Vec3T<T> x = skin_point<T>(b.position, b.weights, tf_last);
      const T phi = field_value(x, *field) - T(prob.r_body);
      if (phi < T(0)) out.coll += phi * phi;
    }
  }
  return out;
}

template <typename T>
T weighted_total(const LossTerms<T>& l, const TransitionWeights& w) {
  return l.reach + w.stop * l.stop + w.start * l.start + w.coll * l.coll + w.smooth * l.smooth;
}

/// Clamped uniform cubic B-spline basis with m control points at s in [0, 1].
inline Eigen::VectorXd bspline_basis(int m, double s) {
  const int degree = 3;
  const int spans = m - degree;
  std::vector<double> knots;
  for (int i = 0; i <= degree; ++i) knots.push_back(0.0);
  for (int i = 1; i < spans; ++i) knots.push_back(static_cast<double>(i) / spans);
  for (int i = 0; i <= degree; ++i) knots.push_back(1.0);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  if (s >= 1.0) {
    out[m - 1] = 1.0;
    return out;
  }
  s = std::max(s, 0.0);
  const int nk = static_cast<int>(knots.size());
  std::vector<double> n(static_cast<std::size_t>(nk - 1), 0.0);
  for (int i = 0; i < nk - 1; ++i) n[static_cast<std::size_t>(i)] = (s >= knots[i] && s < knots[i + 1]) ? 1.0 : 0.0;
  for (int p = 1; p <= degree; ++p) {
    for (int i = 0; i < nk - 1 - p; ++i) {
      double v = 0.0;
      const double l = knots[i + p] - knots[i], r = knots[i + p + 1] - knots[i + 1];
      if (l > 0.0) v += (s - knots[i]) / l * n[static_cast<std::size_t>(i)];
      if (r > 0.0) v += (knots[i + p + 1] - s) / r * n[static_cast<std::size_t>(i + 1)];
      n[static_cast<std::size_t>(i)] = v;
    }
  }
  for (int i = 0; i < m; ++i) out[i] = n[static_cast<std::size_t>(i)];
  return out;
}

/// Maps the parameter vector [control points (3m), joint rotation vectors
/// (3B)] onto the initial clip.
struct TransitionParameterization {
  const MotionClip* init = nullptr;
  int control_points = 6;
  std::size_t joints = 0;
  std::vector<Eigen::VectorXd> basis;
  std::vector<double> ramp;

  TransitionParameterization(const MotionClip& clip, int m) : init(&clip), control_points(m), joints(clip.joint_names.size()) {
    const std::size_t f = clip.size();
    for (std::size_t t = 0; t < f; ++t) {
      const double s = static_cast<double>(t) / static_cast<double>(f - 1);
      basis.push_back(bspline_basis(m, s));
      ramp.push_back(s);
    }
  }

  Eigen::Index size() const { return 3 * control_points + 3 * static_cast<Eigen::Index>(joints); }

  template <typename T>
  void expand(const Eigen::Matrix<T, Eigen::Dynamic, 1>& x, std::vector<Vec3T<T>>& roots,
              std::vector<std::vector<QuatT<T>>>& rots) const {
    const std::size_t f = init->size();
    roots.resize(f);
    rots.assign(f, std::vector<QuatT<T>>(joints));
    std::vector<QuatT<T>> unused;
    for (std::size_t t = 0; t < f; ++t) {
      Vec3T<T> r = init->poses[t].root_translation.template cast<T>();
      for (int i = 0; i < control_points; ++i) {
        const double b = basis[t][i];
        if (b != 0.0) r += T(b) * x.template segment<3>(3 * i);
      }
      roots[t] = r;
      for (std::size_t j = 0; j < joints; ++j) {
        const Vec3T<T> w = x.template segment<3>(3 * control_points + 3 * static_cast<Eigen::Index>(j)) * T(ramp[t]);
        rots[t][j] = quat_exp<T>(w) * init->poses[t].rotations[j].template cast<T>();
      }
    }
  }

  MotionClip clip(const Eigen::VectorXd& x) const {
    std::vector<Vec3> roots;
    std::vector<std::vector<Quat>> rots;
    expand<double>(x, roots, rots);
    MotionClip out = *init;
    for (std::size_t t = 0; t < out.size(); ++t) {
      out.poses[t].root_translation = roots[t];
      if (ramp[t] == 0.0) continue;
      for (std::size_t j = 0; j < joints; ++j) out.poses[t].rotations[j] = rots[t][j].normalized();
    }
    return out;
  }
};

}  // namespace detail

/// Evaluates the transition objective on a clip. `field` may be null, which
/// disables the collision term.
inline TransitionLoss transition_loss(const MotionClip& clip, const TransitionProblem& prob,
                                      const DistanceFieldParams* field) {
  if (static_cast<int>(clip.size()) != prob.frames) throw ArgumentError("clip frame count differs from the problem");
  std::vector<Vec3> roots;
  std::vector<std::vector<Quat>> rots;
  for (const auto& p : clip.poses) {
    roots.push_back(p.root_translation);
    rots.push_back(p.rotations);
  }
  const auto t = detail::transition_terms<double>(roots, rots, prob, field);
  return {t.reach, t.stop, t.start, t.coll, t.smooth, detail::weighted_total(t, prob.weights)};
}

inline TransitionLoss transition_loss(const MotionClip& clip, const TransitionProblem& prob,
                                      const DistanceFieldParams& field) {
  return transition_loss(clip, prob, &field);
}

/// Value and gradient of the objective in the parameter space around `init`.
/// Exposed for gradient checks.
class TransitionObjective {
 public:
  TransitionObjective(const TransitionProblem& prob, const DistanceFieldParams* field, const MotionClip& init)
      : prob_(prob), field_(field), param_(init, prob.control_points) {
    prob.validate();
    if (static_cast<int>(init.size()) != prob.frames) throw ArgumentError("initial clip frame count differs from the problem");
    if (init.joint_names.size() != prob.skeleton.size()) throw ArgumentError("initial clip joint count mismatch");
  }

  Eigen::Index size() const { return param_.size(); }

  double value(const Eigen::VectorXd& x) const {
    std::vector<Vec3> roots;
    std::vector<std::vector<Quat>> rots;
    param_.expand<double>(x, roots, rots);
    return detail::weighted_total(detail::transition_terms<double>(roots, rots, prob_, field_), prob_.weights);
  }

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
    const Eigen::Index n = x.size();
    Eigen::Matrix<AD, Eigen::Dynamic, 1> xa(n);
    for (Eigen::Index i = 0; i < n; ++i) xa[i] = AD(x[i], n, i);
    std::vector<Vec3T<AD>> roots;
    std::vector<std::vector<QuatT<AD>>> rots;
    param_.expand<AD>(xa, roots, rots);
    const AD total = detail::weighted_total(detail::transition_terms<AD>(roots, rots, prob_, field_), prob_.weights);
    grad = total.derivatives().size() == n ? total.derivatives() : Eigen::VectorXd::Zero(n);
    return total.value();
  }

  MotionClip clip(const Eigen::VectorXd& x) const { return param_.clip(x); }

 private:
  const TransitionProblem& prob_;
  const DistanceFieldParams* field_;
  detail::TransitionParameterization param_;
};

struct TransitionResult {
  MotionClip clip;
  TransitionLoss initial, final;
  MinimizeResult stats;
};

inline TransitionResult optimize_transition(const TransitionProblem& prob, const DistanceFieldParams* field,
                                            const MotionClip& init, const MinimizeOptions& opt = {}) {
  TransitionResult out;
  out.initial = transition_loss(init, prob, field);
  if (!std::isfinite(out.initial.total)) throw ArgumentError("transition loss is not finite at the initial clip");
  const TransitionObjective objective(prob, field, init);
  out.stats = minimize([&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return objective(x, g); },
                       Eigen::VectorXd::Zero(objective.size()), opt);
  out.clip = objective.clip(out.stats.x);
  out.final = transition_loss(out.clip, prob, field);
  if (!(out.final.total <= out.initial.total)) {
    out.clip = init;
    out.final = out.initial;
  }
  return out;
}

/// Initial clip for a transition: the seed held for `frames` frames.
inline MotionClip hold_pose(const Pose& seed, const std::vector<std::string>& joint_names, int frames, double fps) {
  MotionClip c;
  c.fps = fps;
  c.joint_names = joint_names;
  for (int t = 0; t < frames; ++t) {
    Pose p = seed;
    p.time = seed.time + t / fps;
    c.poses.push_back(p);
  }
  return c;
}

}  // namespace splatwalk
