#pragma once

#include <splatwalk/error.hpp>

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

namespace splatwalk {

struct MinimizeOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-5;
  /// Stop once an accepted step lowers the objective by less than this.
  double decrease_tolerance = 1e-8;
  int memory = 8;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  /// Objective after each accepted step, starting with the initial value.
  std::vector<double> history;
  enum class Stop { gradient, decrease, iterations, line_search } reason = Stop::iterations;
};

/// Objective returning f(x) and writing the gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
/// Optional projection onto the feasible set, applied in place.
using Projection = std::function<void(Eigen::VectorXd&)>;

/// L-BFGS with Armijo backtracking. A step is only taken if it lowers the
/// objective, so the accepted values are monotone. With a projection the trial
/// point is projected and the sufficient-decrease test uses the actual step.
inline MinimizeResult minimize(const Objective& f, Eigen::VectorXd x, const MinimizeOptions& opt = {},
                               const Projection& project = {}) {
  if (project) project(x);
  Eigen::VectorXd g(x.size());
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw ArgumentError("objective is not finite at the initial point");
  MinimizeResult out;
  out.history.push_back(fx);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;
  auto projected_gradient_norm = [&]() {
    if (!project) return g.norm();
    Eigen::VectorXd y = x - g;
    project(y);
    return (x - y).norm();
  };
  double step0 = 1.0;
  while (true) {
    if (projected_gradient_norm() < opt.gradient_tolerance) {
      out.reason = MinimizeResult::Stop::gradient;
      break;
    }
    if (out.iterations >= opt.max_iterations) {
      out.reason = MinimizeResult::Stop::iterations;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd d = -g;
    std::vector<double> alpha(mem.size());
    for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = mem[static_cast<std::size_t>(i)];
      alpha[static_cast<std::size_t>(i)] = s.dot(d) / y.dot(s);
      d -= alpha[static_cast<std::size_t>(i)] * y;
    }
    if (!mem.empty()) d *= mem.back().first.dot(mem.back().second) / mem.back().second.squaredNorm();
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const auto& [s, y] = mem[i];
      d += (alpha[i] - y.dot(d) / y.dot(s)) * s;
    }
    if (!(d.dot(g) < 0.0)) {
      mem.clear();
      d = -g;
    }
    double step = mem.empty() ? std::min(1.0, step0 / std::max(g.norm(), 1e-300)) : 1.0;
    bool accepted = false;
    Eigen::VectorXd xn, gn(x.size());
    double fn = fx;
    for (int k = 0; k < opt.max_backtracks; ++k, step *= 0.5) {
      xn = x + step * d;
      if (project) project(xn);
      fn = f(xn, gn);
      if (std::isfinite(fn) && fn < fx && fn <= fx + opt.armijo * g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!mem.empty()) {
        // Retry from steepest descent before giving up.
        mem.clear();
        continue;
      }
      out.reason = MinimizeResult::Stop::line_search;
      break;
    }
    ++out.iterations;
    const Eigen::VectorXd s = xn - x, y = gn - g;
    const double decrease = fx - fn;
    step0 = std::max(s.norm(), 1e-12);
    x = std::move(xn);
    g = gn;
    fx = fn;
    out.history.push_back(fx);
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(s, y);
      if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
    }
    if (decrease < opt.decrease_tolerance) {
      out.reason = MinimizeResult::Stop::decrease;
      break;
    }
  }
  out.x = std::move(x);
  out.value = fx;
  return out;
}

}  // namespace splatwalk
