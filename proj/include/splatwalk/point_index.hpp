#pragma once

#include <splatwalk/error.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

namespace splatwalk {

/// Exact nearest-neighbour index over a fixed point set: a uniform grid over the
/// bounding box with compressed per-cell buckets. Queries expand cell shells
/// until no unvisited cell can hold a closer point, so results are identical
/// to a linear scan (ties resolved toward the smaller index).
template <int Dim>
class PointIndex {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  struct Hit {
    std::size_t index;
    double distance;
  };

  PointIndex() = default;

  /// cell_size <= 0 picks a size giving about two points per occupied cell.
  explicit PointIndex(std::vector<Point> points, double cell_size = 0.0) : points_(std::move(points)) {
    if (points_.size() > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("too many points for index");
    if (points_.empty()) return;
    lo_ = points_.front();
    Point hi = lo_;
    for (const auto& p : points_) {
      if (!p.allFinite()) throw DataError("non-finite point in spatial index");
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Point extent = hi - lo_;
    const double max_extent = extent.maxCoeff();
    if (cell_size <= 0.0) {
      if (max_extent <= 0.0) {
        cell_size = 1.0;
      } else {
        double volume = 1.0;
        const double floor_extent = max_extent * 1e-3;
        for (int a = 0; a < Dim; ++a) volume *= std::max(extent[a], floor_extent);
        cell_size = std::pow(2.0 * volume / static_cast<double>(points_.size()), 1.0 / Dim);
        cell_size = std::max(cell_size, max_extent * 1e-4);
      }
    }
    h_ = cell_size;
    for (;;) {
      double cells = 1.0;
      for (int a = 0; a < Dim; ++a) {
        dims_[a] = static_cast<std::int64_t>(std::floor(extent[a] / h_)) + 1;
        cells *= static_cast<double>(dims_[a]);
      }
      if (cells <= kMaxCells) break;
      h_ *= 1.25;
    }
    std::size_t ncells = 1;
    for (int a = 0; a < Dim; ++a) ncells *= static_cast<std::size_t>(dims_[a]);
    cell_start_.assign(ncells + 1, 0);
    std::vector<std::uint32_t> cell_of(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_of[i] = static_cast<std::uint32_t>(linear(cell_coords(points_[i])));
      ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncells; ++c) cell_start_[c + 1] += cell_start_[c];
    items_.resize(points_.size());
    std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const std::vector<Point>& points() const noexcept { return points_; }
  const Point& point(std::size_t i) const { return points_[i]; }
  double cell_size() const noexcept { return h_; }

  std::optional<Hit> nearest(const Point& q) const {
    auto hits = k_nearest(q, 1);
    if (hits.empty()) return std::nullopt;
    return hits.front();
  }

  /// The k closest points ordered by (distance, index).
  std::vector<Hit> k_nearest(const Point& q, std::size_t k) const {
    std::vector<Hit> out;
    if (points_.empty() || k == 0) return out;
    k = std::min(k, points_.size());
    using Entry = std::pair<double, std::size_t>;  // (squared distance, index); max-heap
    std::priority_queue<Entry> heap;
    const auto qc = cell_coords(q);
    std::int64_t max_shell = 0;
    for (int a = 0; a < Dim; ++a) max_shell = std::max({max_shell, qc[a], dims_[a] - 1 - qc[a]});
    for (std::int64_t s = 0; s <= max_shell; ++s) {
      visit_shell(qc, s, [&](std::size_t cell) {
        for (std::uint32_t j = cell_start_[cell]; j < cell_start_[cell + 1]; ++j) {
          const std::size_t idx = items_[j];
          const Entry e{(points_[idx] - q).squaredNorm(), idx};
          if (heap.size() < k) {
            heap.push(e);
          } else if (e < heap.top()) {
            heap.pop();
            heap.push(e);
          }
        }
      });
      if (heap.size() == k) {
        const double bound = static_cast<double>(s) * h_ * (1.0 - 1e-9);
        if (std::sqrt(heap.top().first) < bound) break;
      }
    }
    out.resize(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = Hit{heap.top().second, std::sqrt(heap.top().first)};
      heap.pop();
    }
    return out;
  }

  /// Calls fn(index, squared_distance) for every point with distance <= radius.
  template <typename Fn>
  void for_each_within(const Point& q, double radius, Fn&& fn) const {
    if (points_.empty() || !(radius >= 0.0)) return;
    std::array<std::int64_t, Dim> lo{}, hi{};
    for (int a = 0; a < Dim; ++a) {
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((q[a] - radius - lo_[a]) / h_)));
      const double top = std::floor((q[a] + radius - lo_[a]) / h_);
      hi[a] = top < 0.0 ? -1 : std::min<std::int64_t>(dims_[a] - 1, static_cast<std::int64_t>(std::min(top, 1e15)));
      if (lo[a] > hi[a]) return;
    }
    const double r2 = radius * radius;
    std::array<std::int64_t, Dim> c = lo;
    for (;;) {
      const std::size_t cell = linear(c);
      for (std::uint32_t j = cell_start_[cell]; j < cell_start_[cell + 1]; ++j) {
        const std::size_t idx = items_[j];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) fn(idx, d2);
      }
      int a = 0;
      while (a < Dim && ++c[a] > hi[a]) {
        c[a] = lo[a];
        ++a;
      }
      if (a == Dim) break;
    }
  }

 private:
  static constexpr double kMaxCells = 4.0e6;

  std::array<std::int64_t, Dim> cell_coords(const Point& p) const {
    std::array<std::int64_t, Dim> c{};
    for (int a = 0; a < Dim; ++a) {
      const double f = std::floor((p[a] - lo_[a]) / h_);
      c[a] = f <= 0.0 ? 0 : std::min<std::int64_t>(dims_[a] - 1, static_cast<std::int64_t>(std::min(f, 1e15)));
    }
    return c;
  }

  std::size_t linear(const std::array<std::int64_t, Dim>& c) const {
    std::size_t idx = 0;
    for (int a = Dim - 1; a >= 0; --a) idx = idx * static_cast<std::size_t>(dims_[a]) + static_cast<std::size_t>(c[a]);
    return idx;
  }

  // Visits in-grid cells at Chebyshev distance exactly s from center.
  template <typename Fn>
  void visit_shell(const std::array<std::int64_t, Dim>& center, std::int64_t s, Fn&& fn) const {
    if (s == 0) {
      fn(linear(center));
      return;
    }
    std::array<std::int64_t, Dim> lo{}, hi{};
    for (int a = 0; a < Dim; ++a) {
      lo[a] = std::max<std::int64_t>(0, center[a] - s);
      hi[a] = std::min<std::int64_t>(dims_[a] - 1, center[a] + s);
    }
    // Iterate axes 1..Dim-1 over the full range; along axis 0 either sweep the
    // full range (when another axis already sits on the shell) or hit the two
    // shell faces only.
    std::array<std::int64_t, Dim> c = lo;
    for (;;) {
      bool on_shell = false;
      for (int a = 1; a < Dim; ++a)
        if (std::abs(c[a] - center[a]) == s) on_shell = true;
      if (on_shell) {
        for (c[0] = lo[0]; c[0] <= hi[0]; ++c[0]) fn(linear(c));
      } else {
        if (center[0] - s >= 0) {
          c[0] = center[0] - s;
          fn(linear(c));
        }
        if (center[0] + s <= dims_[0] - 1) {
          c[0] = center[0] + s;
          fn(linear(c));
        }
      }
      c[0] = lo[0];
      int a = 1;
      while (a < Dim && ++c[a] > hi[a]) {
        c[a] = lo[a];
        ++a;
      }
      if (a >= Dim) break;
    }
  }

  std::vector<Point> points_;
  Point lo_ = Point::Zero();
  double h_ = 1.0;
  std::array<std::int64_t, Dim> dims_{};
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> items_;
};

using PointIndex2 = PointIndex<2>;
using PointIndex3 = PointIndex<3>;

}  // namespace splatwalk
