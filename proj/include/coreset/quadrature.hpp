#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "coreset/grid.hpp"
#include "coreset/models.hpp"
#include "coreset/rng.hpp"
#include "coreset/weights.hpp"

namespace coreset {

struct AutoGridOptions {
  std::array<int, 2> nodes{0, 0};  // 0 selects the per-dimension default
  double cutoff_nats = 40.0;
};

inline constexpr int kDefaultNodes1d = 4096;
inline constexpr int kDefaultNodes2d = 512;
inline constexpr std::int64_t kMaxTotalNodes = std::int64_t(1) << 20;
inline constexpr int kMaxAdaptiveNodes1d = 1 << 17;

namespace detail {

// one-dimensional mode scan: candidates, zoom, and bisection-refined crossings
// of the cutoff level. Works on any scalar coordinate with an evaluator.
struct ScanResult {
  double lo = 0.0, hi = 0.0;      // outermost cutoff crossings
  double max_value = -kInf;
  double arg_max = 0.0;
  double width() const { return hi - lo; }
};

inline void append_geomscale(std::vector<double>& out, double lo_mag, double hi_mag,
                             int per_decade, bool both_signs) {
  const double l0 = std::log10(lo_mag), l1 = std::log10(hi_mag);
  const int steps = static_cast<int>((l1 - l0) * per_decade);
  for (int i = 0; i <= steps; ++i) {
    const double v = std::pow(10.0, l0 + (l1 - l0) * i / std::max(1, steps));
    out.push_back(v);
    if (both_signs) out.push_back(-v);
  }
}

inline ScanResult scan_coordinate(const std::function<double(double)>& value,
                                  std::vector<double> candidates, double support_lo,
                                  double support_hi, double cutoff) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::erase_if(candidates, [&](double c) { return c < support_lo || c > support_hi; });
  if (candidates.empty()) throw std::runtime_error("scan: no candidates within support");

  std::vector<double> vals(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) vals[i] = value(candidates[i]);

  auto best = std::max_element(vals.begin(), vals.end());
  if (!std::isfinite(*best)) throw std::runtime_error("scan: no finite density found");
  std::size_t k = static_cast<std::size_t>(best - vals.begin());

  // local zoom around the incumbent maximum
  for (int round = 0; round < 3; ++round) {
    const double a = candidates[k > 0 ? k - 1 : k];
    const double b = candidates[std::min(k + 1, candidates.size() - 1)];
    if (!(b > a)) break;
    std::vector<double> loc(65), lv(65);
    for (int i = 0; i < 65; ++i) {
      loc[static_cast<std::size_t>(i)] = a + (b - a) * i / 64.0;
      lv[static_cast<std::size_t>(i)] = value(loc[static_cast<std::size_t>(i)]);
    }
    // merge so crossing search sees the refined points too
    candidates.insert(candidates.end(), loc.begin(), loc.end());
    vals.insert(vals.end(), lv.begin(), lv.end());
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return candidates[x] < candidates[y]; });
    std::vector<double> c2(candidates.size()), v2(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      c2[i] = candidates[order[i]];
      v2[i] = vals[order[i]];
    }
    candidates.swap(c2);
    vals.swap(v2);
    k = static_cast<std::size_t>(
        std::max_element(vals.begin(), vals.end()) - vals.begin());
  }

  ScanResult r;
  r.max_value = vals[k];
  r.arg_max = candidates[k];
  const double level = r.max_value - cutoff;

  std::size_t first = k, last = k;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (vals[i] >= level) {
      first = std::min(first, i);
      last = std::max(last, i);
    }

  auto bisect = [&](double inside, double outside) {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (inside + outside);
      if (value(mid) >= level)
        inside = mid;
      else
        outside = mid;
    }
    return inside;
  };

  if (first > 0)
    r.lo = bisect(candidates[first], candidates[first - 1]);
  else
    r.lo = std::max(support_lo, candidates[first] - std::abs(candidates[first]) - 1.0);
  if (last + 1 < candidates.size())
    r.hi = bisect(candidates[last], candidates[last + 1]);
  else
    r.hi = std::min(support_hi, candidates[last] + std::abs(candidates[last]) + 1.0);

  if (!(r.hi > r.lo)) {
    const double w = 1e-9 * std::max(1.0, std::abs(r.arg_max));
    r.lo = std::max(support_lo, r.arg_max - w);
    r.hi = std::min(support_hi, r.arg_max + w);
  }
  return r;
}

// candidate coordinates for a scalar scan: multiscale skeleton plus
// model-provided anchors
inline std::vector<double> scalar_candidates(std::span<const double> anchors,
                                             bool negative_side) {
  std::vector<double> c;
  c.reserve(1400 + anchors.size());
  append_geomscale(c, 1e-9, 1e12, 12, negative_side);
  for (int i = 0; i <= 400; ++i) c.push_back(-100.0 + 0.5 * i);
  c.push_back(0.0);
  c.insert(c.end(), anchors.begin(), anchors.end());
  return c;
}

// evaluator of log pi_0 + l_w along eta in the pushforward coordinate
inline std::function<double(double)> pushforward_value(const PotentialModel& model,
                                                       const CoresetWeights& w) {
  return [&model, &w](double e) {
    const double base = model.pushforward_log_prior(e);
    if (!std::isfinite(base)) return -kInf;
    double acc[1] = {0.0};
    const double es[1] = {e};
    model.accumulate_weighted(w, std::span<const double>(es, 1), std::span<double>(acc, 1));
    return base + acc[0];
  };
}

inline ScanResult scan_pushforward(const PotentialModel& model, const CoresetWeights& w,
                                   double cutoff) {
  const auto [slo, shi] = model.eta_support();
  const auto anchors = model.scan_anchor_etas();
  return scan_coordinate(pushforward_value(model, w),
                         scalar_candidates(anchors, slo < 0.0),
                         std::max(slo, -1e12), std::min(shi, 1e12), cutoff);
}

struct Box2 {
  double lo0, hi0, lo1, hi1;
  double max_value;
};

// native scan for two-dimensional models; exploits that the likelihood depends
// on theta only through eta, so the scan runs over (eta, delta) with
// theta = ((eta+delta)/2, (eta-delta)/2) and the weighted potential table is
// computed once per eta value
inline Box2 scan_native_2d(const PotentialModel& model, const CoresetWeights& w,
                           double cutoff) {
  std::vector<double> etas = scalar_candidates(model.scan_anchor_etas(), true);
  std::sort(etas.begin(), etas.end());
  etas.erase(std::unique(etas.begin(), etas.end()), etas.end());

  std::vector<double> deltas;
  append_geomscale(deltas, 1e-6, 1e12, 8, true);
  for (int i = 0; i <= 240; ++i) deltas.push_back(-60.0 + 0.5 * i);
  deltas.push_back(0.0);
  std::sort(deltas.begin(), deltas.end());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());

  auto box_from = [&](const std::vector<double>& es, const std::vector<double>& ds,
                      const std::vector<double>& table) {
    double vmax = -kInf;
    for (std::size_t i = 0; i < es.size(); ++i) {
      if (!std::isfinite(table[i])) continue;
      for (std::size_t j = 0; j < ds.size(); ++j) {
        const ThetaPoint t{0.5 * (es[i] + ds[j]), 0.5 * (es[i] - ds[j])};
        vmax = std::max(vmax, model.log_prior(t) + table[i]);
      }
    }
    if (!std::isfinite(vmax)) throw std::runtime_error("scan: no finite density found");
    const double level = vmax - cutoff;
    Box2 b{kInf, -kInf, kInf, -kInf, vmax};
    for (std::size_t i = 0; i < es.size(); ++i) {
      if (!std::isfinite(table[i])) continue;
      // margin of one local net cell on each side of an above-cutoff point
      const double de_lo = i > 0 ? es[i] - es[i - 1] : 0.0;
      const double de_hi = i + 1 < es.size() ? es[i + 1] - es[i] : 0.0;
      for (std::size_t j = 0; j < ds.size(); ++j) {
        const double t0 = 0.5 * (es[i] + ds[j]);
        const double t1 = 0.5 * (es[i] - ds[j]);
        if (model.log_prior({t0, t1}) + table[i] < level) continue;
        const double dd_lo = j > 0 ? ds[j] - ds[j - 1] : 0.0;
        const double dd_hi = j + 1 < ds.size() ? ds[j + 1] - ds[j] : 0.0;
        b.lo0 = std::min(b.lo0, 0.5 * (es[i] - de_lo + ds[j] - dd_lo));
        b.hi0 = std::max(b.hi0, 0.5 * (es[i] + de_hi + ds[j] + dd_hi));
        b.lo1 = std::min(b.lo1, 0.5 * (es[i] - de_lo - ds[j] - dd_hi));
        b.hi1 = std::max(b.hi1, 0.5 * (es[i] + de_hi - ds[j] + dd_lo));
      }
    }
    return b;
  };

  std::vector<double> table(etas.size(), 0.0);
  model.accumulate_weighted(w, etas, table);
  Box2 coarse = box_from(etas, deltas, table);

  // one linear refinement pass over the incumbent box
  const double e_lo = coarse.lo0 + coarse.lo1, e_hi = coarse.hi0 + coarse.hi1;
  const double d_lo = coarse.lo0 - coarse.hi1, d_hi = coarse.hi0 - coarse.lo1;
  const double e_pad = 0.25 * (e_hi - e_lo) + 1e-12, d_pad = 0.25 * (d_hi - d_lo) + 1e-12;
  std::vector<double> es2(257), ds2(257);
  for (int i = 0; i <= 256; ++i) {
    es2[static_cast<std::size_t>(i)] = e_lo - e_pad + (e_hi - e_lo + 2 * e_pad) * i / 256.0;
    ds2[static_cast<std::size_t>(i)] = d_lo - d_pad + (d_hi - d_lo + 2 * d_pad) * i / 256.0;
  }
  std::vector<double> table2(es2.size(), 0.0);
  model.accumulate_weighted(w, es2, table2);
  Box2 fine = box_from(es2, ds2, table2);
  fine.max_value = std::max(fine.max_value, coarse.max_value);
  return fine;
}

inline int resolve_nodes(int requested, int dims) {
  if (requested > 0) return std::max(requested, 64);
  return dims == 1 ? kDefaultNodes1d : kDefaultNodes2d;
}

inline int ceil_pow2(double x) {
  int n = 64;
  while (n < x && n < (1 << 26)) n <<= 1;
  return n;
}

}  // namespace detail

// Grid whose bounds contain every point with unnormalized log density within
// cutoff_nats of the maximum, padded by 10% per side. Two-dimensional grids
// are forced to equal steps on both axes so that eta = theta_1 + theta_2
// takes repeated values across nodes. Requests exceeding the total node cap
// are clamped and the cutoff drops to 30 nats.
inline Grid auto_grid(const PotentialModel& model, Rep rep, const CoresetWeights& weights,
                      const AutoGridOptions& opts = {}) {
  for (const auto& [n, w] : weights.entries())
    if (w < 0.0) throw std::invalid_argument("auto_grid: negative weight");
  const int dims = rep_dim(model, rep);
  double cutoff = opts.cutoff_nats;
  std::array<int, 2> nodes{detail::resolve_nodes(opts.nodes[0], dims),
                           detail::resolve_nodes(opts.nodes[1], dims)};
  if (dims == 2 &&
      static_cast<std::int64_t>(nodes[0]) * nodes[1] > kMaxTotalNodes) {
    nodes[0] = std::min(nodes[0], 1024);
    nodes[1] = std::min(nodes[1], 1024);
    cutoff = std::min(cutoff, 30.0);
  }

  Grid g;
  g.dims = dims;
  g.nodes = nodes;
  if (rep == Rep::pushforward) {
    const auto sc = detail::scan_pushforward(model, weights, cutoff);
    const double pad = 0.1 * sc.width();
    const auto [slo, shi] = model.eta_support();
    g.lo[0] = std::max(sc.lo - pad, slo);
    g.hi[0] = std::min(sc.hi + pad, shi);
  } else if (dims == 1) {
    const auto anchors_eta = model.scan_anchor_etas();
    std::vector<double> anchors;
    for (double e : anchors_eta) {
      if (e >= 0.0) {
        anchors.push_back(std::sqrt(e));
        anchors.push_back(-std::sqrt(e));
      }
      anchors.push_back(e);
    }
    auto value = [&](double t) {
      const ThetaPoint p{t, 0.0};
      const double base = model.log_prior(p);
      if (!std::isfinite(base)) return -kInf;
      double acc[1] = {0.0};
      const double es[1] = {model.eta(p)};
      model.accumulate_weighted(weights, std::span<const double>(es, 1),
                                std::span<double>(acc, 1));
      return base + acc[0];
    };
    const auto sc = detail::scan_coordinate(value, detail::scalar_candidates(anchors, true),
                                            -1e12, 1e12, cutoff);
    const double pad = 0.1 * sc.width();
    g.lo[0] = sc.lo - pad;
    g.hi[0] = sc.hi + pad;
  } else {
    auto box = detail::scan_native_2d(model, weights, cutoff);
    const double pad0 = 0.1 * (box.hi0 - box.lo0), pad1 = 0.1 * (box.hi1 - box.lo1);
    g.lo[0] = box.lo0 - pad0;
    g.hi[0] = box.hi0 + pad0;
    g.lo[1] = box.lo1 - pad1;
    g.hi[1] = box.hi1 + pad1;
    // equalize steps by widening the narrower axis about its center
    const double r0 = g.hi[0] - g.lo[0], r1 = g.hi[1] - g.lo[1];
    const double r = std::max(r0, r1);
    for (int a = 0; a < 2; ++a) {
      const auto i = static_cast<std::size_t>(a);
      const double c = 0.5 * (g.lo[i] + g.hi[i]);
      g.lo[i] = c - 0.5 * r;
      g.hi[i] = c + 0.5 * r;
    }
  }
  g.validate();
  return g;
}

// Distinct eta values across grid nodes, with a node -> unique index map.
// Values within a relative 1e-9 of each other collapse to one entry, which
// makes equal-step diagonals of a 2D grid exact duplicates.
struct EtaCache {
  std::vector<double> unique_etas;
  std::vector<std::int32_t> node_index;
};

inline EtaCache make_eta_cache(const PotentialModel& model, Rep rep, const Grid& grid) {
  grid.validate();
  const std::int64_t total = grid.total_nodes();
  std::vector<double> etas(static_cast<std::size_t>(total));
  if (rep == Rep::pushforward) {
    for (std::int64_t i = 0; i < total; ++i)
      etas[static_cast<std::size_t>(i)] = grid.node_point(i)[0];
  } else {
    for (std::int64_t i = 0; i < total; ++i)
      etas[static_cast<std::size_t>(i)] = model.eta(grid.node_point(i));
  }
  std::vector<std::int32_t> order(etas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::int32_t a, std::int32_t b) { return etas[static_cast<std::size_t>(a)] < etas[static_cast<std::size_t>(b)]; });

  EtaCache cache;
  cache.node_index.resize(etas.size());
  double rep_val = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = etas[static_cast<std::size_t>(order[k])];
    if (cache.unique_etas.empty() ||
        v - rep_val > 1e-9 * std::max(1.0, std::abs(v))) {
      cache.unique_etas.push_back(v);
      rep_val = v;
    }
    cache.node_index[static_cast<std::size_t>(order[k])] =
        static_cast<std::int32_t>(cache.unique_etas.size() - 1);
  }
  return cache;
}

inline std::vector<double> weighted_potential_table(const PotentialModel& model,
                                                    const CoresetWeights& weights,
                                                    std::span<const double> unique_etas) {
  std::vector<double> table(unique_etas.size(), 0.0);
  model.accumulate_weighted(weights, unique_etas, table);
  return table;
}

namespace detail {

inline std::vector<double> base_log_density(const PotentialModel& model, Rep rep,
                                            const Grid& grid) {
  const std::int64_t total = grid.total_nodes();
  std::vector<double> base(static_cast<std::size_t>(total));
  if (rep == Rep::pushforward) {
    for (std::int64_t i = 0; i < total; ++i)
      base[static_cast<std::size_t>(i)] = model.pushforward_log_prior(grid.node_point(i)[0]);
  } else {
    for (std::int64_t i = 0; i < total; ++i)
      base[static_cast<std::size_t>(i)] = model.log_prior(grid.node_point(i));
  }
  return base;
}

inline GridDistribution assemble(const Grid& grid, Rep rep, std::span<const double> base,
                                 const EtaCache& cache, std::span<const double> table,
                                 double table_scale) {
  GridDistribution d;
  d.grid = grid;
  d.rep = rep;
  d.log_masses.resize(base.size());
  const double logvol = std::log(grid.cell_volume());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double t = table[static_cast<std::size_t>(cache.node_index[i])];
    d.log_masses[i] =
        std::isfinite(base[i]) ? base[i] + table_scale * t + logvol : -kInf;
  }
  const double z = logsumexp(d.log_masses);
  if (!std::isfinite(z))
    throw std::runtime_error("build_posterior: all masses vanish on the grid");
  for (auto& lm : d.log_masses) lm -= z;
  d.log_normalizer = z;
  return d;
}

}  // namespace detail

inline GridDistribution build_posterior(const PotentialModel& model, Rep rep,
                                        const CoresetWeights& weights, const Grid& grid) {
  const EtaCache cache = make_eta_cache(model, rep, grid);
  const auto table = weighted_potential_table(model, weights, cache.unique_etas);
  const auto base = detail::base_log_density(model, rep, grid);
  return detail::assemble(grid, rep, base, cache, table, 1.0);
}

// KL(p || q) over a shared grid; 0 log 0 = 0, and p-mass on q-null nodes
// yields +infinity
inline double kl(const GridDistribution& p, const GridDistribution& q) {
  if (!p.grid.same_as(q.grid) || p.rep != q.rep)
    throw std::invalid_argument("kl: distributions live on different grids");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.log_masses.size(); ++i) {
    const double lp = p.log_masses[i];
    if (lp == -kInf) continue;
    const double lq = q.log_masses[i];
    if (lq == -kInf) return kInf;
    acc += std::exp(lp) * (lp - lq);
  }
  return std::max(acc, 0.0);
}

struct KlPair {
  double forward;  // KL(pi || pi_w)
  double reverse;  // KL(pi_w || pi)
  double min() const { return std::min(forward, reverse); }
  double max() const { return std::max(forward, reverse); }
};

struct KlPairOptions {
  Rep rep = Rep::pushforward;
  AutoGridOptions grid{};
  bool adaptive_nodes = true;  // refine 1D node counts until cells resolve the
                               // narrower of the two distributions
  int node_multiplier = 1;     // applied last; used by the refinement gate
  std::optional<Grid> fixed_grid;  // bypass the scans entirely
};

namespace detail {

struct SharedGridBuild {
  Grid grid;
  EtaCache cache;
  std::vector<double> base;
  GridDistribution pi;    // full posterior (w = 1)
  GridDistribution pi_w;  // coreset posterior
  std::vector<double> table_full, table_w;
};

inline SharedGridBuild build_pair(const PotentialModel& model, const CoresetWeights& weights,
                                  const KlPairOptions& opts) {
  const CoresetWeights ones = CoresetWeights::ones(model.size());
  SharedGridBuild out;
  const int dims = rep_dim(model, opts.rep);
  double cutoff = opts.grid.cutoff_nats;

  if (opts.fixed_grid) {
    out.grid = *opts.fixed_grid;
  } else if (dims == 1) {
    ScanResult sw, s1;
    if (opts.rep == Rep::pushforward) {
      sw = scan_pushforward(model, weights, cutoff);
      s1 = scan_pushforward(model, ones, cutoff);
    } else {
      // native one-dimensional bounds via auto_grid on each distribution
      const Grid gw = auto_grid(model, opts.rep, weights, opts.grid);
      const Grid g1 = auto_grid(model, opts.rep, ones, opts.grid);
      sw = {gw.lo[0], gw.hi[0], 0.0, 0.0};
      s1 = {g1.lo[0], g1.hi[0], 0.0, 0.0};
    }
    Grid g;
    g.dims = 1;
    const double pad_w = opts.rep == Rep::pushforward ? 0.1 * sw.width() : 0.0;
    const double pad_1 = opts.rep == Rep::pushforward ? 0.1 * s1.width() : 0.0;
    g.lo[0] = std::min(sw.lo - pad_w, s1.lo - pad_1);
    g.hi[0] = std::max(sw.hi + pad_w, s1.hi + pad_1);
    if (opts.rep == Rep::pushforward) {
      const auto [slo, shi] = model.eta_support();
      g.lo[0] = std::max(g.lo[0], slo);
      g.hi[0] = std::min(g.hi[0], shi);
    }
    int nodes = resolve_nodes(opts.grid.nodes[0], 1);
    if (opts.adaptive_nodes) {
      const double denom = 2.0 * std::sqrt(2.0 * cutoff);
      const double sd_min = std::min(sw.width(), s1.width()) / denom;
      if (sd_min > 0.0) {
        const double want = (g.hi[0] - g.lo[0]) * 24.0 / sd_min;
        nodes = std::clamp(ceil_pow2(want), nodes, kMaxAdaptiveNodes1d);
      }
    }
    g.nodes[0] = nodes * opts.node_multiplier;
    out.grid = g;
  } else {
    const Grid gw = auto_grid(model, opts.rep, weights, opts.grid);
    const Grid g1 = auto_grid(model, opts.rep, ones, opts.grid);
    Grid g;
    g.dims = 2;
    for (std::size_t a = 0; a < 2; ++a) {
      g.lo[a] = std::min(gw.lo[a], g1.lo[a]);
      g.hi[a] = std::max(gw.hi[a], g1.hi[a]);
      g.nodes[a] = gw.nodes[a] * opts.node_multiplier;
    }
    // restore equal steps after the union
    const double r = std::max(g.hi[0] - g.lo[0], g.hi[1] - g.lo[1]);
    for (std::size_t a = 0; a < 2; ++a) {
      const double c = 0.5 * (g.lo[a] + g.hi[a]);
      g.lo[a] = c - 0.5 * r;
      g.hi[a] = c + 0.5 * r;
    }
    out.grid = g;
  }
  out.grid.validate();

  out.cache = make_eta_cache(model, opts.rep, out.grid);
  out.base = base_log_density(model, opts.rep, out.grid);
  out.table_full = weighted_potential_table(model, ones, out.cache.unique_etas);
  out.table_w = weighted_potential_table(model, weights, out.cache.unique_etas);
  out.pi = assemble(out.grid, opts.rep, out.base, out.cache, out.table_full, 1.0);
  out.pi_w = assemble(out.grid, opts.rep, out.base, out.cache, out.table_w, 1.0);
  return out;
}

}  // namespace detail

// Builds pi and pi_w on one shared grid covering both 40-nat regions and
// returns (KL(pi || pi_w), KL(pi_w || pi)).
inline KlPair kl_pair(const PotentialModel& model, const CoresetWeights& weights,
                      const KlPairOptions& opts = {}) {
  const auto b = detail::build_pair(model, weights, opts);
  return {kl(b.pi, b.pi_w), kl(b.pi_w, b.pi)};
}

// Inverse-CDF sampling over cells with uniform jitter inside each cell, so
// repeated draws do not collide on node coordinates.
inline std::vector<ThetaPoint> sample(const GridDistribution& dist, int count, Rng& rng) {
  std::vector<double> cdf(dist.log_masses.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.log_masses.size(); ++i) {
    acc += std::exp(dist.log_masses[i]);
    cdf[i] = acc;
  }
  std::vector<ThetaPoint> out(static_cast<std::size_t>(count));
  for (auto& p : out) {
    const std::int64_t flat =
        static_cast<std::int64_t>(rng.categorical_from_cdf(cdf));
    p = dist.grid.node_point(flat);
    for (int a = 0; a < dist.grid.dims; ++a)
      p[static_cast<std::size_t>(a)] += (rng.uniform() - 0.5) * dist.grid.step(a);
  }
  return out;
}

inline double expectation(const GridDistribution& dist,
                          const std::function<double(const ThetaPoint&)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.log_masses.size(); ++i) {
    const double lm = dist.log_masses[i];
    if (lm == -kInf) continue;
    acc += std::exp(lm) * f(dist.grid.node_point(static_cast<std::int64_t>(i)));
  }
  return acc;
}

// Covariance matrix of the listed potentials under the grid measure.
inline Eigen::MatrixXd covariance_of_potentials(const GridDistribution& dist,
                                                const PotentialModel& model,
                                                std::span<const int> indices) {
  const EtaCache cache = make_eta_cache(model, dist.rep, dist.grid);
  const auto k = static_cast<Eigen::Index>(indices.size());
  const auto u = static_cast<Eigen::Index>(cache.unique_etas.size());

  Eigen::VectorXd pu = Eigen::VectorXd::Zero(u);
  for (std::size_t i = 0; i < dist.log_masses.size(); ++i)
    pu[cache.node_index[i]] += std::exp(dist.log_masses[i]);

  Eigen::MatrixXd t(k, u);
  std::vector<double> row(static_cast<std::size_t>(u), 0.0);
  for (Eigen::Index a = 0; a < k; ++a) {
    std::fill(row.begin(), row.end(), 0.0);
    model.add_scaled_potential(indices[static_cast<std::size_t>(a)], 1.0,
                               cache.unique_etas, row);
    for (Eigen::Index j = 0; j < u; ++j) t(a, j) = row[static_cast<std::size_t>(j)];
  }

  const Eigen::VectorXd mean = t * pu;
  Eigen::MatrixXd cov = t * pu.asDiagonal() * t.transpose() - mean * mean.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

}  // namespace coreset
