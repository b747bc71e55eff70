#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "coreset/models.hpp"
#include "coreset/quadrature.hpp"
#include "coreset/rng.hpp"
#include "coreset/weights.hpp"

namespace coreset {

// f(x) = -log x + x - 1 on [0, 1], zero above 1; decreasing and nonnegative
inline double f_lower(double x) {
  if (x < 0.0) throw std::invalid_argument("f_lower: negative argument");
  if (x == 0.0) return kInf;
  if (x > 1.0) return 0.0;
  return -std::log(x) + x - 1.0;
}

// Ellipsoid B = {t : (t - center)^T H (t - center) <= r^2}
struct Ball {
  ThetaPoint center{0.0, 0.0};
  Eigen::Matrix2d h = Eigen::Matrix2d::Identity();
  double r = 1.0;

  bool contains(const ThetaPoint& t, int dims) const {
    if (dims == 1) {
      const double d = t[0] - center[0];
      return h(0, 0) * d * d <= r * r;
    }
    const double d0 = t[0] - center[0], d1 = t[1] - center[1];
    const double q = h(0, 0) * d0 * d0 + 2.0 * h(0, 1) * d0 * d1 + h(1, 1) * d1 * d1;
    return q <= r * r;
  }
};

// Shared-grid quantities for one (model, weights) pair: raw potential sums per
// node, both normalized posteriors, and their KL pair. Every bound evaluated
// from one workspace uses the same discrete measure, so the inequalities of
// the bound machinery hold exactly (up to roundoff) regardless of resolution.
struct BoundsWorkspace {
  Rep rep = Rep::native;
  Grid grid;
  std::vector<double> base;      // log prior per node
  std::vector<double> ell_full;  // l(theta) per node (w = 1)
  std::vector<double> ell_w;     // l_w(theta) per node
  GridDistribution pi, pi_w;
  double kl_forward = 0.0, kl_reverse = 0.0;
};

inline BoundsWorkspace make_bounds_workspace(const PotentialModel& model,
                                             const CoresetWeights& weights,
                                             const KlPairOptions& opts = {}) {
  const auto b = detail::build_pair(model, weights, opts);
  BoundsWorkspace ws;
  ws.rep = opts.rep;
  ws.grid = b.grid;
  ws.base = b.base;
  const std::size_t total = b.base.size();
  ws.ell_full.resize(total);
  ws.ell_w.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto u = static_cast<std::size_t>(b.cache.node_index[i]);
    ws.ell_full[i] = b.table_full[u];
    ws.ell_w[i] = b.table_w[u];
  }
  ws.pi = b.pi;
  ws.pi_w = b.pi_w;
  ws.kl_forward = kl(ws.pi, ws.pi_w);
  ws.kl_reverse = kl(ws.pi_w, ws.pi);
  return ws;
}

// J_B(w): Hellinger-affinity fraction restricted to B plus sqrt(pi(B^c)).
// The three integrals share the workspace grid; both potential sums are
// shifted by their values at the grid MAP of pi before exponentiation, which
// leaves the ratio unchanged and keeps the exponents in range.
inline double j_b(const BoundsWorkspace& ws, const Ball& ball) {
  const std::size_t total = ws.base.size();
  std::int64_t map_node = 0;
  double map_val = -kInf;
  for (std::size_t i = 0; i < total; ++i) {
    const double v = ws.base[i] + ws.ell_full[i];
    if (std::isfinite(v) && v > map_val) {
      map_val = v;
      map_node = static_cast<std::int64_t>(i);
    }
  }
  const double shift_full = ws.ell_full[static_cast<std::size_t>(map_node)];
  const double shift_w = ws.ell_w[static_cast<std::size_t>(map_node)];
  const double logvol = std::log(ws.grid.cell_volume());

  std::vector<double> num, den1, den2;
  num.reserve(total);
  den1.reserve(total);
  den2.reserve(total);
  double mass_b = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    if (!std::isfinite(ws.base[i])) continue;
    const double lf = ws.ell_full[i] - shift_full;
    const double lw = ws.ell_w[i] - shift_w;
    den1.push_back(ws.base[i] + lf + logvol);
    den2.push_back(ws.base[i] + lw + logvol);
    if (ball.contains(ws.grid.node_point(static_cast<std::int64_t>(i)), ws.grid.dims)) {
      num.push_back(ws.base[i] + 0.5 * (lf + lw) + logvol);
      mass_b += std::exp(ws.pi.log_masses[i]);
    }
  }
  const double log_num = logsumexp(num);
  const double log_den = 0.5 * (logsumexp(den1) + logsumexp(den2));
  const double affinity = std::isfinite(log_num) ? std::exp(log_num - log_den) : 0.0;
  return affinity + std::sqrt(std::max(0.0, 1.0 - mass_b));
}

// convenience overload building its own workspace
inline double j_b(const PotentialModel& model, const CoresetWeights& weights,
                  const Ball& ball, const KlPairOptions& opts = {}) {
  return j_b(make_bounds_workspace(model, weights, opts), ball);
}

inline std::vector<double> default_lambda_grid() {
  std::vector<double> l(40);
  for (int i = 0; i < 40; ++i)
    l[static_cast<std::size_t>(i)] = std::pow(10.0, -3.0 + 6.0 * i / 39.0);
  return l;
}

struct UpperBound {
  double value = kInf;
  double argmin_lambda = 1.0;
};

// inf over the lambda grid of (1/lambda) log E_pi exp((1+lambda)(lbar_w - lbar)),
// with centering handled through delta = l_w - l minus its pi-mean
inline UpperBound kl_upper_bound(const BoundsWorkspace& ws,
                                 std::span<const double> lambdas) {
  const std::size_t total = ws.base.size();
  std::vector<double> delta(total, 0.0), lp(total, -kInf);
  double mean_delta = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    lp[i] = ws.pi.log_masses[i];
    delta[i] = ws.ell_w[i] - ws.ell_full[i];
    if (lp[i] != -kInf) mean_delta += std::exp(lp[i]) * delta[i];
  }
  UpperBound best;
  std::vector<double> terms(total);
  for (double lam : lambdas) {
    if (!(lam > 0.0)) throw std::invalid_argument("kl_upper_bound: lambda must be > 0");
    for (std::size_t i = 0; i < total; ++i)
      terms[i] = lp[i] == -kInf ? -kInf : lp[i] + (1.0 + lam) * (delta[i] - mean_delta);
    const double v = logsumexp(terms) / lam;
    if (v < best.value) {
      best.value = v;
      best.argmin_lambda = lam;
    }
  }
  return best;
}

inline UpperBound kl_upper_bound(const BoundsWorkspace& ws) {
  const auto grid = default_lambda_grid();
  return kl_upper_bound(ws, grid);
}

inline UpperBound kl_upper_bound(const PotentialModel& model, const CoresetWeights& weights,
                                 std::span<const double> lambdas,
                                 const KlPairOptions& opts = {}) {
  return kl_upper_bound(make_bounds_workspace(model, weights, opts), lambdas);
}

// Direction in potential-index space used when certifying subexponentiality.
struct DirectionSpec {
  std::vector<int> indices;
  std::vector<double> coeffs;
};

struct BetaFitOptions {
  int subset_size = 64;
  double beta_min = 1.0 / 1024.0;
  double beta_max = static_cast<double>(1 << 20);
  double slack = 1e-9;  // roundoff slack on the certification inequality
};

struct BetaFit {
  double beta = 0.0;
  bool certified = false;
  std::vector<int> subset;
};

namespace detail {

struct PreparedDirection {
  std::vector<double> values;  // l_u per unique eta
  double mean = 0.0;
  double var = 0.0;
};

inline PreparedDirection prepare_direction(const PotentialModel& model,
                                           const EtaCache& cache,
                                           const Eigen::VectorXd& pu,
                                           const DirectionSpec& dir) {
  PreparedDirection out;
  out.values.assign(cache.unique_etas.size(), 0.0);
  for (std::size_t k = 0; k < dir.indices.size(); ++k)
    if (dir.coeffs[k] != 0.0)
      model.add_scaled_potential(dir.indices[k], dir.coeffs[k], cache.unique_etas,
                                 out.values);
  for (std::size_t u = 0; u < out.values.size(); ++u)
    out.mean += pu[static_cast<Eigen::Index>(u)] * out.values[u];
  for (std::size_t u = 0; u < out.values.size(); ++u) {
    const double c = out.values[u] - out.mean;
    out.var += pu[static_cast<Eigen::Index>(u)] * c * c;
  }
  return out;
}

}  // namespace detail

// Smallest beta from a doubling search such that, for every sampled direction
// u scaled onto the boundary u^T (beta A) u = 1 with A = Cov_pi of the
// potentials, log E_pi exp(lbar_u) <= 1. Directions are sampled standard
// normal over a random potential subset; callers may supply extra directions
// (e.g. the exact perturbations a downstream bound will use).
inline BetaFit fit_beta(const PotentialModel& model, const GridDistribution& pi,
                        int trial_count, Rng& rng,
                        std::span<const DirectionSpec> extra_directions = {},
                        const BetaFitOptions& opts = {}) {
  if (trial_count < 1) throw std::invalid_argument("fit_beta: trial_count must be >= 1");
  const int n = model.size();
  const int k = std::min(opts.subset_size, n);

  // random distinct subset of potentials
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.uniform() * (n - i));
    std::swap(all[static_cast<std::size_t>(i)],
              all[static_cast<std::size_t>(std::min(j, n - 1))]);
  }
  std::vector<int> subset(all.begin(), all.begin() + k);

  const EtaCache cache = make_eta_cache(model, pi.rep, pi.grid);
  Eigen::VectorXd pu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cache.unique_etas.size()));
  for (std::size_t i = 0; i < pi.log_masses.size(); ++i)
    pu[cache.node_index[i]] += std::exp(pi.log_masses[i]);

  std::vector<detail::PreparedDirection> dirs;
  dirs.reserve(static_cast<std::size_t>(trial_count) + extra_directions.size());
  for (int t = 0; t < trial_count; ++t) {
    DirectionSpec d;
    d.indices = subset;
    d.coeffs.resize(subset.size());
    for (auto& c : d.coeffs) c = rng.normal();
    dirs.push_back(detail::prepare_direction(model, cache, pu, d));
  }
  for (const auto& d : extra_directions)
    dirs.push_back(detail::prepare_direction(model, cache, pu, d));

  std::vector<double> lpu(cache.unique_etas.size());
  for (std::size_t u = 0; u < lpu.size(); ++u) {
    const double p = pu[static_cast<Eigen::Index>(u)];
    lpu[u] = p > 0.0 ? std::log(p) : -kInf;
  }

  auto certifies = [&](double beta) {
    std::vector<double> terms(lpu.size());
    for (const auto& d : dirs) {
      if (d.var <= 0.0) continue;  // zero direction: both sides are 1
      const double scale = 1.0 / std::sqrt(beta * d.var);
      for (std::size_t u = 0; u < lpu.size(); ++u)
        terms[u] = lpu[u] == -kInf ? -kInf : lpu[u] + scale * (d.values[u] - d.mean);
      if (logsumexp(terms) > 1.0 + opts.slack) return false;
    }
    return true;
  };

  BetaFit fit;
  fit.subset = std::move(subset);
  for (double beta = opts.beta_min; beta <= opts.beta_max; beta *= 2.0) {
    if (certifies(beta)) {
      fit.beta = beta;
      fit.certified = true;
      return fit;
    }
  }
  fit.beta = opts.beta_max;
  fit.certified = false;
  return fit;
}

// spec-shaped convenience: builds the full posterior itself
inline BetaFit fit_beta(const PotentialModel& model, int trial_count, Rng& rng,
                        const BetaFitOptions& opts = {}) {
  const CoresetWeights ones = CoresetWeights::ones(model.size());
  const Grid grid = auto_grid(model, Rep::pushforward, ones);
  const GridDistribution pi = build_posterior(model, Rep::pushforward, ones, grid);
  return fit_beta(model, pi, trial_count, rng, {}, opts);
}

// Theorem-style upper bound 4 (w-1)^T (beta A) (w-1); absent above the
// admissible level 1. A is the potential covariance over all N coordinates.
inline std::optional<double> subexp_kl_bound(const CoresetWeights& weights,
                                             const Eigen::MatrixXd& a, double beta) {
  if (a.rows() != a.cols() || a.rows() != weights.n_total())
    throw std::invalid_argument("subexp_kl_bound: covariance must be N x N");
  const auto dense = weights.dense();
  Eigen::VectorXd diff(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    diff[i] = dense[static_cast<std::size_t>(i)] - 1.0;
  const double quad = diff.dot(a * diff);
  const double value = 4.0 * beta * quad;
  if (value > 1.0) return std::nullopt;
  return std::max(value, 0.0);
}

// ||sum_n w_n grad l_n(eta0)|| / sum_n w_n; scale-invariant in w
inline double grad_diagnostic(const PotentialModel& model, const CoresetWeights& weights) {
  const double sw = weights.sum();
  if (!(sw > 0.0)) throw std::invalid_argument("grad_diagnostic: weight sum is zero");
  const double eta0 = model.eta0();
  double g = 0.0;
  for (const auto& [n, w] : weights.entries()) g += w * model.potential_grad_eta(n, eta0);
  return std::abs(g) / sw;
}

struct BoundReport {
  double kl_forward = 0.0;
  double kl_reverse = 0.0;
  double lower = 0.0;              // best f(J_B) over the supplied balls
  double upper_lambda = kInf;      // optimized Lemma-style upper bound
  double argmin_lambda = 1.0;
  std::optional<double> upper_subexp;
  std::optional<double> beta_hat;

  double kl_min() const { return std::min(kl_forward, kl_reverse); }
  double kl_max() const { return std::max(kl_forward, kl_reverse); }
};

// all bound quantities for one (model, weights) pair on one shared grid
inline BoundReport bound_report(const PotentialModel& model, const CoresetWeights& weights,
                                std::span<const Ball> balls,
                                const KlPairOptions& opts = {}) {
  const BoundsWorkspace ws = make_bounds_workspace(model, weights, opts);
  BoundReport rep;
  rep.kl_forward = ws.kl_forward;
  rep.kl_reverse = ws.kl_reverse;
  rep.lower = 0.0;
  for (const auto& b : balls) rep.lower = std::max(rep.lower, f_lower(j_b(ws, b)));
  const auto ub = kl_upper_bound(ws);
  rep.upper_lambda = ub.value;
  rep.argmin_lambda = ub.argmin_lambda;
  return rep;
}

}  // namespace coreset
