#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "coreset/models.hpp"
#include "coreset/nnls.hpp"
#include "coreset/quadrature.hpp"
#include "coreset/rng.hpp"
#include "coreset/weights.hpp"

namespace coreset {

// Strictly positive categorical distribution over data indices.
class SamplingProbabilities {
 public:
  explicit SamplingProbabilities(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw std::invalid_argument("SamplingProbabilities: empty");
    for (double v : p_)
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument("SamplingProbabilities: entries must be positive");
    if (std::abs(compensated_sum(p_) - 1.0) > 1e-12)
      throw std::invalid_argument("SamplingProbabilities: must sum to 1");
  }

  // Kahan summation; the plain loop drifts past the 1e-12 gate around N ~ 3e4
  static double compensated_sum(std::span<const double> v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
      const double y = x - c;
      const double t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }

  int size() const { return static_cast<int>(p_.size()); }
  double operator[](int n) const { return p_[static_cast<std::size_t>(n)]; }
  std::span<const double> values() const { return p_; }

 private:
  std::vector<double> p_;
};

enum class ProbabilityMode { uniform, x_squared_thresholded };

// Subsampling probabilities: uniform, or proportional to the squared covariate
// magnitude clamped into [0.1/N, 10/N] and renormalized. A dataset of all-zero
// covariates falls back to uniform.
inline SamplingProbabilities importance_probabilities(const PotentialModel& model,
                                                      ProbabilityMode mode) {
  const int n = model.size();
  if (n < 1) throw std::invalid_argument("importance_probabilities: empty model");
  std::vector<double> p(static_cast<std::size_t>(n));
  if (mode == ProbabilityMode::uniform) {
    std::fill(p.begin(), p.end(), 1.0 / n);
    return SamplingProbabilities(std::move(p));
  }
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = model.datum_norm_sq(i);
  const double total = SamplingProbabilities::compensated_sum(p);
  if (total <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / n);
    return SamplingProbabilities(std::move(p));
  }
  const double lo = 0.1 / n, hi = 10.0 / n;
  for (auto& v : p) v = std::clamp(v / total, lo, hi);
  const double sum = SamplingProbabilities::compensated_sum(p);
  for (auto& v : p) v /= sum;
  return SamplingProbabilities(std::move(p));
}

// Importance-weighted construction: draw I_1..I_M iid from the probabilities
// and set w_n = (1/(M p_n)) * #{m : I_m = n}, so E[w_n] = 1.
inline CoresetWeights importance_weighted(const SamplingProbabilities& probs, int m,
                                          Rng& rng) {
  if (m < 1) throw std::invalid_argument("importance_weighted: M must be >= 1");
  const auto cdf = inclusive_prefix_sums(probs.values());
  std::map<int, int> counts;
  for (int draw = 0; draw < m; ++draw)
    counts[static_cast<int>(rng.categorical_from_cdf(cdf))]++;
  std::vector<CoresetWeights::Entry> entries;
  entries.reserve(counts.size());
  for (const auto& [idx, c] : counts)
    entries.emplace_back(idx, static_cast<double>(c) / (m * probs[idx]));
  return CoresetWeights(probs.size(), std::move(entries));
}

struct OptimalScaleOptions {
  double alpha_lo = 1e-6;
  double alpha_hi = 1e3;
  double rel_width = 1e-4;  // termination width of the golden bracket
  KlPairOptions quadrature{};
};

struct OptimalScaleResult {
  double alpha_star = 1.0;
  double kl = 0.0;          // KL(pi_{alpha* w} || pi)
  bool at_bracket_edge = false;
};

// Post-hoc scaling: minimize alpha -> KL(pi_{alpha w} || pi) by golden-section
// search on log alpha. All probes reuse one union grid (chosen from the
// unscaled weights and the full posterior) and one weighted potential table,
// so each evaluation is a rescale of the table followed by normalization.
// alpha = 0 and alpha = 1 are evaluated explicitly as well.
inline OptimalScaleResult optimal_scale(const PotentialModel& model,
                                        const CoresetWeights& weights,
                                        const OptimalScaleOptions& opts = {}) {
  if (weights.support_size() == 0)
    throw std::invalid_argument("optimal_scale: weights have empty support");

  const auto shared = detail::build_pair(model, weights, opts.quadrature);
  const auto& pi = shared.pi;

  auto reverse_kl_at = [&](double alpha) {
    const GridDistribution pw = detail::assemble(shared.grid, opts.quadrature.rep,
                                                 shared.base, shared.cache,
                                                 shared.table_w, alpha);
    return kl(pw, pi);
  };

  const double log_lo = std::log(opts.alpha_lo), log_hi = std::log(opts.alpha_hi);
  constexpr double inv_phi = 0.61803398874989485;
  double a = log_lo, b = log_hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = reverse_kl_at(std::exp(c));
  double fd = reverse_kl_at(std::exp(d));
  while (b - a > opts.rel_width) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = reverse_kl_at(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = reverse_kl_at(std::exp(d));
    }
  }

  OptimalScaleResult res;
  res.alpha_star = std::exp(0.5 * (a + b));
  res.kl = reverse_kl_at(res.alpha_star);

  const double kl_at_one = kl(shared.pi_w, pi);
  if (kl_at_one < res.kl) {
    res.alpha_star = 1.0;
    res.kl = kl_at_one;
  }
  const GridDistribution prior = detail::assemble(shared.grid, opts.quadrature.rep,
                                                  shared.base, shared.cache,
                                                  shared.table_w, 0.0);
  const double kl_at_zero = kl(prior, pi);
  if (kl_at_zero < res.kl) {
    res.alpha_star = 0.0;
    res.kl = kl_at_zero;
  }
  res.at_bracket_edge = res.alpha_star > 0.0 &&
                        (std::abs(std::log(res.alpha_star) - log_lo) < 2 * opts.rel_width ||
                         std::abs(std::log(res.alpha_star) - log_hi) < 2 * opts.rel_width);
  return res;
}

struct SubsampleOptimizeOptions {
  KlPairOptions quadrature{};
  double nnls_tol_scale = 1e-10;  // relative dual tolerance for the solver
};

struct SubsampleOptimizeResult {
  CoresetWeights weights;
  double objective = 0.0;       // NNLS residual ||V w - u||^2
  double target_sq_norm = 0.0;  // ||u||^2, the objective at w = 0
  int iterations = 0;
  bool converged = true;
};

// Weight optimization on a fixed support: draw S points from the full
// quadrature posterior, discretize every potential into a centered feature
// vector v_n = (l_n(theta_s) - mean_s)/sqrt(S), and solve the nonnegative
// least squares match of sum_{n in supp} w_n v_n to u = sum_{n=1}^N v_n.
// Centering makes the match insensitive to constants in l_w.
inline SubsampleOptimizeResult optimize_on_support(const PotentialModel& model,
                                                   std::span<const int> support, int s,
                                                   Rng& rng,
                                                   const SubsampleOptimizeOptions& opts = {}) {
  const int n = model.size();
  if (support.empty()) throw std::invalid_argument("optimize_on_support: empty support");
  if (s < 1) throw std::invalid_argument("optimize_on_support: S must be >= 1");

  const CoresetWeights ones = CoresetWeights::ones(n);
  const Grid grid = auto_grid(model, opts.quadrature.rep, ones, opts.quadrature.grid);
  const GridDistribution pi = build_posterior(model, opts.quadrature.rep, ones, grid);
  const auto points = sample(pi, s, rng);

  std::vector<double> etas(points.size());
  if (opts.quadrature.rep == Rep::pushforward)
    for (std::size_t i = 0; i < points.size(); ++i) etas[i] = points[i][0];
  else
    for (std::size_t i = 0; i < points.size(); ++i) etas[i] = model.eta(points[i]);

  const double inv_sqrt_s = 1.0 / std::sqrt(static_cast<double>(s));
  std::vector<double> row(etas.size());
  auto centered_feature = [&](int idx, Eigen::Ref<Eigen::VectorXd> dst) {
    std::fill(row.begin(), row.end(), 0.0);
    model.add_scaled_potential(idx, 1.0, etas, row);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (std::size_t i = 0; i < row.size(); ++i)
      dst[static_cast<Eigen::Index>(i)] = (row[i] - mean) * inv_sqrt_s;
  };

  const auto m = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd v(static_cast<Eigen::Index>(s), m);
  for (Eigen::Index j = 0; j < m; ++j)
    centered_feature(support[static_cast<std::size_t>(j)], v.col(j));

  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s));
  Eigen::VectorXd feat(static_cast<Eigen::Index>(s));
  for (int idx = 0; idx < n; ++idx) {
    centered_feature(idx, feat);
    u += feat;
  }

  NnlsProblem problem;
  problem.G = std::move(v);
  problem.b = u;
  problem.tol = opts.nnls_tol_scale *
                std::max(1.0, (problem.G.transpose() * problem.b).cwiseAbs().maxCoeff());
  const NnlsSolution nn = nnls(problem);

  std::vector<CoresetWeights::Entry> entries;
  for (Eigen::Index j = 0; j < m; ++j)
    if (nn.w[j] > 0.0) entries.emplace_back(support[static_cast<std::size_t>(j)], nn.w[j]);

  SubsampleOptimizeResult res{CoresetWeights(n, std::move(entries)), nn.objective,
                              u.squaredNorm(), nn.iterations, nn.converged};
  return res;
}

// Subsample-optimize construction: sample M candidate indices from the
// probabilities, merge duplicates into a support set, then optimize the
// weights on that support.
inline SubsampleOptimizeResult subsample_optimize(const PotentialModel& model,
                                                  const SamplingProbabilities& probs,
                                                  int m, int s, Rng& rng,
                                                  const SubsampleOptimizeOptions& opts = {}) {
  if (m < 1) throw std::invalid_argument("subsample_optimize: M must be >= 1");
  if (s < m) throw std::invalid_argument("subsample_optimize: need S >= M");
  const auto cdf = inclusive_prefix_sums(probs.values());
  std::vector<int> support;
  for (int draw = 0; draw < m; ++draw)
    support.push_back(static_cast<int>(rng.categorical_from_cdf(cdf)));
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  return optimize_on_support(model, support, s, rng, opts);
}

}  // namespace coreset
