#include <catch2/catch_amalgamated.hpp>

#include "coreset/bounds.hpp"
#include "coreset/coresets.hpp"
#include "test_support.hpp"

using namespace coreset;
using coreset::testing::GaussianPairModel;

TEST_CASE("f_lower piecewise values and shape", "[bounds]") {
  REQUIRE(f_lower(1.0) == 0.0);
  REQUIRE(f_lower(2.0) == 0.0);
  REQUIRE(f_lower(0.5) == Catch::Approx(0.19314718055994529).epsilon(1e-14));
  REQUIRE(f_lower(0.0) == kInf);
  REQUIRE_THROWS_AS(f_lower(-1e-9), std::invalid_argument);

  // nonincreasing on a 1000-point grid of [0, 2]
  double prev = kInf;
  for (int i = 1; i <= 1000; ++i) {
    const double v = f_lower(2.0 * i / 1000.0);
    REQUIRE(v <= prev + 1e-15);
    prev = v;
  }
  // continuity at x = 1
  REQUIRE(std::abs(f_lower(1.0 - 1e-10) - f_lower(1.0 + 1e-10)) < 1e-9);
}

namespace {

CauchyLocationModel fixed_cauchy(int n, std::uint64_t seed) {
  Rng rng(seed);
  return generate_cauchy_data(n, 5.0, rng);
}

Ball sd_ball(const BoundsWorkspace& ws, double r_scale) {
  std::int64_t map_node = 0;
  double best = -kInf;
  for (std::size_t i = 0; i < ws.pi.log_masses.size(); ++i)
    if (ws.pi.log_masses[i] > best) {
      best = ws.pi.log_masses[i];
      map_node = static_cast<std::int64_t>(i);
    }
  double var = 0.0;
  for (int a = 0; a < ws.grid.dims; ++a) {
    const double mean_a = expectation(
        ws.pi, [&](const ThetaPoint& p) { return p[static_cast<std::size_t>(a)]; });
    var += expectation(ws.pi, [&](const ThetaPoint& p) {
      const double d = p[static_cast<std::size_t>(a)] - mean_a;
      return d * d;
    });
  }
  Ball b;
  b.center = ws.grid.node_point(map_node);
  b.h = Eigen::Matrix2d::Identity() * (ws.grid.dims / std::max(var, 1e-300));
  b.r = r_scale;
  return b;
}

}  // namespace

TEST_CASE("j_b equals one when B covers the grid and w = 1", "[bounds]") {
  auto m = fixed_cauchy(150, 51);
  const CoresetWeights ones = CoresetWeights::ones(m.size());
  const BoundsWorkspace ws = make_bounds_workspace(m, ones);
  Ball everything;
  everything.center = {0.0, 0.0};
  everything.h = Eigen::Matrix2d::Identity();
  everything.r = 1e12;
  const double j = j_b(ws, everything);
  REQUIRE(j == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(f_lower(std::min(j, 1.0)) <= 1e-9);
}

TEST_CASE("j_b with 75% ball mass gives J = 1.25 at w = 1", "[bounds]") {
  auto m = fixed_cauchy(150, 52);
  const CoresetWeights ones = CoresetWeights::ones(m.size());
  const BoundsWorkspace ws = make_bounds_workspace(m, ones);

  // bisect r so the quadrature ball mass is 0.75
  auto mass_of = [&](double r) {
    Ball b = sd_ball(ws, r);
    double mass = 0.0;
    for (std::size_t i = 0; i < ws.pi.log_masses.size(); ++i)
      if (b.contains(ws.grid.node_point(static_cast<std::int64_t>(i)), ws.grid.dims))
        mass += std::exp(ws.pi.log_masses[i]);
    return mass;
  };
  double lo = 0.01, hi = 10.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass_of(mid) < 0.75 ? lo : hi) = mid;
  }
  const double r = 0.5 * (lo + hi);
  const double j = j_b(ws, sd_ball(ws, r));
  // at w = 1 the affinity over B is the ball mass itself
  REQUIRE(j == Catch::Approx(0.75 + std::sqrt(0.25)).margin(2e-3));
  REQUIRE(f_lower(j) == 0.0);
}

TEST_CASE("lemma sandwich holds on random configurations", "[bounds]") {
  Rng master(53);
  for (int rep = 0; rep < 12; ++rep) {
    const int n = 300;
    auto m = fixed_cauchy(n, 530 + static_cast<std::uint64_t>(rep));
    const auto probs = importance_probabilities(m, ProbabilityMode::x_squared_thresholded);
    Rng rng = master.child(static_cast<std::uint64_t>(rep));
    const int msize = rep % 3 == 0 ? 10 : (rep % 3 == 1 ? 50 : 300);
    const auto w = importance_weighted(probs, msize, rng);

    KlPairOptions opts;
    opts.rep = rep % 2 == 0 ? Rep::native : Rep::pushforward;
    const BoundsWorkspace ws = make_bounds_workspace(m, w, opts);
    const double kl_min = std::min(ws.kl_forward, ws.kl_reverse);
    const double kl_max = std::max(ws.kl_forward, ws.kl_reverse);

    for (double scale : {1.0, 2.0, 4.0}) {
      const double lower = f_lower(j_b(ws, sd_ball(ws, scale)));
      REQUIRE(lower <= kl_min + 1e-6 * std::max(1.0, kl_min));
      REQUIRE(lower >= 0.0);
    }
    const auto ub = kl_upper_bound(ws);
    REQUIRE(kl_max <= ub.value + 1e-6 * std::max(1.0, kl_max));
  }
}

TEST_CASE("upper bound vanishes at w = 1 and stays modest nearby", "[bounds]") {
  auto m = fixed_cauchy(250, 54);
  const CoresetWeights ones = CoresetWeights::ones(m.size());
  const BoundsWorkspace at_one = make_bounds_workspace(m, ones);
  const auto ub = kl_upper_bound(at_one);
  REQUIRE(std::abs(ub.value) < 1e-9);

  // perturb one weight by 1e-3
  std::vector<double> dense(250, 1.0);
  dense[17] += 1e-3;
  const CoresetWeights w = CoresetWeights::from_dense(dense);
  const BoundsWorkspace ws = make_bounds_workspace(m, w);
  const auto ub2 = kl_upper_bound(ws);
  const double kl_max = std::max(ws.kl_forward, ws.kl_reverse);
  REQUIRE(std::isfinite(ub2.value));
  REQUIRE(ub2.value >= kl_max - 1e-9);
  REQUIRE(ub2.value <= 10.0 * std::max(kl_max, 1e-12));
}

TEST_CASE("bound quantities are invariant to constant potential shifts", "[bounds]") {
  auto m = fixed_cauchy(80, 55);
  coreset::testing::ShiftedPotentialModel shifted(m, -7.25);
  Rng rng(56);
  const auto probs = importance_probabilities(m, ProbabilityMode::uniform);
  const auto w = importance_weighted(probs, 25, rng);

  // force the identical grid on both models so values are comparable
  KlPairOptions opts;
  opts.rep = Rep::pushforward;
  const BoundsWorkspace ws1 = make_bounds_workspace(m, w, opts);
  opts.fixed_grid = ws1.grid;
  BoundsWorkspace ws2 = make_bounds_workspace(shifted, w, opts);
  REQUIRE(ws1.grid.same_as(ws2.grid));

  const Ball b = sd_ball(ws1, 2.0);
  REQUIRE(j_b(ws1, b) == Catch::Approx(j_b(ws2, b)).margin(1e-9));
  REQUIRE(kl_upper_bound(ws1).value ==
          Catch::Approx(kl_upper_bound(ws2).value).margin(1e-9));
}

TEST_CASE("beta fit certifies the gaussian oracle at beta = 2", "[bounds]") {
  GaussianPairModel gm;
  const CoresetWeights ones = CoresetWeights::ones(2);
  const Grid g = auto_grid(gm, Rep::pushforward, ones);
  const GridDistribution pi = build_posterior(gm, Rep::pushforward, ones, g);
  Rng rng(57);
  const BetaFit fit = fit_beta(gm, pi, 200, rng);
  REQUIRE(fit.certified);
  // linear potentials under a gaussian: log mgf = var/2, so any beta >= 1/2
  // certifies; the doubling search must stop at or before 2
  REQUIRE(fit.beta <= 2.0);

  // certified beta stays certified when doubled (stricter constraint set)
  BetaFitOptions strict;
  strict.beta_min = fit.beta * 2.0;
  strict.beta_max = fit.beta * 2.0;
  Rng rng2(57);
  const BetaFit doubled = fit_beta(gm, pi, 200, rng2, {}, strict);
  REQUIRE(doubled.certified);
}

TEST_CASE("subexp bound arithmetic and threshold", "[bounds]") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4) * 0.25;
  const CoresetWeights ones = CoresetWeights::ones(4);
  const auto at_one = subexp_kl_bound(ones, a, 2.0);
  REQUIRE(at_one.has_value());
  REQUIRE(*at_one == 0.0);

  // (w-1)^T (beta A) (w-1) = 0.5 -> 4 * 0.5 = 2 > 1 -> absent
  std::vector<double> dense{1.0 + std::sqrt(2.0 / (2.0 * 0.25)), 1.0, 1.0, 1.0};
  const auto over = subexp_kl_bound(CoresetWeights::from_dense(dense), a, 2.0);
  REQUIRE_FALSE(over.has_value());

  REQUIRE_THROWS_AS(subexp_kl_bound(ones, Eigen::MatrixXd::Identity(3, 3), 1.0),
                    std::invalid_argument);
}

TEST_CASE("small-N theorem sandwich with the full covariance", "[bounds]") {
  const int n = 128;
  auto m = fixed_cauchy(n, 58);
  Rng rng(59);

  const BoundsWorkspace ws0 = make_bounds_workspace(m, CoresetWeights::ones(n));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Eigen::MatrixXd a0 = covariance_of_potentials(ws0.pi, m, all);

  Eigen::VectorXd dir(n);
  for (int i = 0; i < n; ++i) dir[i] = 2.0 * rng.uniform() - 1.0;
  const double q0 = dir.dot(a0 * dir);
  const double eps = std::sqrt(0.3 / (4.0 * std::max(q0, 1e-300)));
  std::vector<double> dense(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    dense[static_cast<std::size_t>(i)] = std::max(0.0, 1.0 + eps * dir[i]);
  const CoresetWeights w = CoresetWeights::from_dense(dense);

  const BoundsWorkspace ws = make_bounds_workspace(m, w);
  const Eigen::MatrixXd a = covariance_of_potentials(ws.pi, m, all);

  DirectionSpec w_dir;
  w_dir.indices = all;
  w_dir.coeffs.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w_dir.coeffs[static_cast<std::size_t>(i)] = 2.0 * (dense[static_cast<std::size_t>(i)] - 1.0);
  const BetaFit fit = fit_beta(m, ws.pi, 64, rng, std::span<const DirectionSpec>(&w_dir, 1));
  REQUIRE(fit.certified);

  const auto bound = subexp_kl_bound(w, a, fit.beta);
  if (bound) {
    const double kl_max = std::max(ws.kl_forward, ws.kl_reverse);
    REQUIRE(*bound >= kl_max - 1e-6 * std::max(1.0, kl_max));
  }
}

TEST_CASE("grad diagnostic identities", "[bounds]") {
  CauchyLocationModel m(5.0, {25.0, 27.0, 23.0, 30.0});

  // all residuals zero at eta0 = 25
  CauchyLocationModel exact(5.0, {25.0, 25.0, 25.0});
  REQUIRE(grad_diagnostic(exact, CoresetWeights::ones(3)) == 0.0);

  // single support point: value is |grad l_n| independent of the weight
  for (double scale : {0.1, 1.0, 42.0}) {
    const CoresetWeights w(4, {{1, scale}});
    REQUIRE(grad_diagnostic(m, w) ==
            Catch::Approx(std::abs(m.potential_grad_eta(1, 25.0))).epsilon(1e-12));
  }

  // scale invariance: exact for power-of-two scales, where the floating
  // point scaling commutes with every rounding step
  const CoresetWeights w(4, {{0, 0.5}, {2, 1.5}, {3, 2.0}});
  for (double c : {0.25, 2.0, 64.0})
    REQUIRE(grad_diagnostic(m, w) == grad_diagnostic(m, w.scaled(c)));
  REQUIRE(grad_diagnostic(m, w) ==
          Catch::Approx(grad_diagnostic(m, w.scaled(3.7))).epsilon(1e-12));
  REQUIRE_THROWS_AS(grad_diagnostic(m, CoresetWeights::zeros(4)),
                    std::invalid_argument);
}

TEST_CASE("w = 1 gradient norm shrinks with N", "[bounds]") {
  int wins = 0;
  const int pairs = 40;
  for (int t = 0; t < pairs; ++t) {
    Rng r1 = Rng(60).child(static_cast<std::uint64_t>(t)).child(1);
    Rng r2 = Rng(60).child(static_cast<std::uint64_t>(t)).child(2);
    auto small = generate_cauchy_data(100, 5.0, r1);
    auto large = generate_cauchy_data(10000, 5.0, r2);
    const double g_small = grad_diagnostic(small, CoresetWeights::ones(100));
    const double g_large = grad_diagnostic(large, CoresetWeights::ones(10000));
    if (g_large < g_small) ++wins;
  }
  REQUIRE(wins >= pairs * 9 / 10);
}
