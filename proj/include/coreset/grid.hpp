#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "coreset/models.hpp"

namespace coreset {

// Coordinate system a grid lives in: the model's native theta space, or the
// scalar pushforward coordinate eta (always one-dimensional).
enum class Rep { native, pushforward };

inline int rep_dim(const PotentialModel& model, Rep rep) {
  return rep == Rep::native ? model.theta_dim() : 1;
}

// Uniform tensor grid with midpoint nodes.
struct Grid {
  int dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
  std::array<int, 2> nodes{0, 0};

  void validate() const {
    if (dims != 1 && dims != 2) throw std::invalid_argument("Grid: dims must be 1 or 2");
    for (int a = 0; a < dims; ++a) {
      if (nodes[static_cast<std::size_t>(a)] < 64)
        throw std::invalid_argument("Grid: need at least 64 nodes per axis");
      if (!std::isfinite(lo[static_cast<std::size_t>(a)]) ||
          !std::isfinite(hi[static_cast<std::size_t>(a)]) ||
          !(lo[static_cast<std::size_t>(a)] < hi[static_cast<std::size_t>(a)]))
        throw std::invalid_argument("Grid: bounds must be finite with lo < hi");
    }
  }

  double step(int axis) const {
    const auto a = static_cast<std::size_t>(axis);
    return (hi[a] - lo[a]) / nodes[a];
  }

  std::int64_t total_nodes() const {
    std::int64_t t = nodes[0];
    if (dims == 2) t *= nodes[1];
    return t;
  }

  double cell_volume() const {
    double v = step(0);
    if (dims == 2) v *= step(1);
    return v;
  }

  // flat index convention: axis 0 major, axis 1 minor
  ThetaPoint node_point(std::int64_t flat) const {
    ThetaPoint p{0.0, 0.0};
    if (dims == 1) {
      p[0] = lo[0] + (static_cast<double>(flat) + 0.5) * step(0);
    } else {
      const std::int64_t i = flat / nodes[1];
      const std::int64_t j = flat % nodes[1];
      p[0] = lo[0] + (static_cast<double>(i) + 0.5) * step(0);
      p[1] = lo[1] + (static_cast<double>(j) + 0.5) * step(1);
    }
    return p;
  }

  bool same_as(const Grid& o) const {
    return dims == o.dims && lo == o.lo && hi == o.hi && nodes == o.nodes;
  }
};

// Probability table over a grid: normalized so logsumexp(log_masses) == 0.
// log_normalizer records log Z(w) of the unnormalized density
// exp(log_prior + l_w) integrated with the midpoint rule.
struct GridDistribution {
  Grid grid;
  Rep rep = Rep::native;
  std::vector<double> log_masses;
  double log_normalizer = 0.0;

  double mass_at(std::int64_t flat) const {
    return std::exp(log_masses[static_cast<std::size_t>(flat)]);
  }
};

inline double logsumexp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v)
    if (x > m) m = x;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace coreset
