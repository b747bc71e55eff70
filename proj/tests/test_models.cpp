#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "coreset/models.hpp"

using namespace coreset;

TEST_CASE("cauchy data: empirical median sits at theta0 squared", "[models]") {
  // Cauchy median equals its location; at n = 1e5 the median standard error
  // is pi/(2 sqrt(n)) ~ 0.005, so 0.05 is a 10-sigma corridor
  Rng rng(2024);
  auto m = generate_cauchy_data(100000, 5.0, rng);
  std::vector<double> x = m.data();
  std::nth_element(x.begin(), x.begin() + x.size() / 2, x.end());
  REQUIRE(std::abs(x[x.size() / 2] - 25.0) < 0.05);
}

TEST_CASE("standard cauchy quantile transform maps 1/2 to zero", "[models]") {
  REQUIRE(std_cauchy_from_uniform(0.5) == 0.0);
}

TEST_CASE("generation length and argument contracts", "[models]") {
  Rng rng(1);
  REQUIRE(generate_cauchy_data(3, 1.0, rng).size() == 3);
  REQUIRE_THROWS_AS(generate_cauchy_data(0, 5.0, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_logreg_data(0, {1.0, 6.0}, rng), std::invalid_argument);
}

TEST_CASE("logreg labels follow the sigmoid through c = x1 + x2", "[models]") {
  Rng rng(77);
  auto m = generate_logreg_data(100000, {1.0, 6.0}, rng);
  double pos_sum = 0.0;
  int pos_count = 0;
  for (int i = 0; i < m.size(); ++i) {
    const auto& x = m.covariates()[static_cast<std::size_t>(i)];
    REQUIRE(x[0] * x[0] + x[1] * x[1] <= 1.0 + 1e-12);
    if (x[0] + x[1] > 0.0) {
      pos_sum += m.labels()[static_cast<std::size_t>(i)];
      ++pos_count;
    }
  }
  REQUIRE(pos_count > 1000);
  REQUIRE(pos_sum / pos_count > 0.5);
}

TEST_CASE("logreg covariates stay in the unit disk at small n", "[models]") {
  Rng rng(4);
  auto m = generate_logreg_data(50, {1.0, 6.0}, rng);
  for (const auto& x : m.covariates())
    REQUIRE(x[0] * x[0] + x[1] * x[1] <= 1.0 + 1e-12);
}

TEST_CASE("log prior closed forms", "[models]") {
  CauchyLocationModel cm(5.0, {1.0, 2.0});
  REQUIRE(cm.log_prior({0.0, 0.0}) == Catch::Approx(-1.1447298858494002).epsilon(1e-12));
  for (double t : {0.3, 1.7, 42.0})
    REQUIRE(cm.log_prior({t, 0.0}) == Catch::Approx(cm.log_prior({-t, 0.0})));

  LogRegModel lm({1.0, 6.0}, {{0.1, 0.2}}, {1});
  const double at_origin = lm.log_prior({0.0, 0.0});
  REQUIRE(std::isfinite(at_origin));
  for (double a : {-2.0, -0.5, 0.5, 2.0})
    for (double b : {-2.0, -0.5, 0.5, 2.0})
      REQUIRE(lm.log_prior({a, b}) < at_origin);
}

TEST_CASE("potential closed forms and overflow safety", "[models]") {
  CauchyLocationModel cm(5.0, {25.0, 3.0});
  // residual zero: X_n = theta^2
  REQUIRE(cm.potential(0, {5.0, 0.0}) == Catch::Approx(-kLogPi).epsilon(1e-14));

  LogRegModel lm({1.0, 6.0}, {{0.0, 0.0}, {0.5, 0.5}}, {1, 1});
  REQUIRE(lm.potential(0, {3.0, 4.0}) == Catch::Approx(std::log(0.5)).epsilon(1e-14));
  // s = c * eta = 1 * 50; high-precision value of -log(1+e^-50)
  REQUIRE(lm.potential_eta(1, 50.0) ==
          Catch::Approx(-1.9287498479639178e-22).epsilon(1e-6));
  REQUIRE(std::isfinite(lm.potential_eta(1, 5000.0)));
  REQUIRE(std::isfinite(lm.potential_eta(1, -5000.0)));
}

TEST_CASE("potentials are bounded above", "[models]") {
  Rng rng(11);
  auto cm = generate_cauchy_data(50, 5.0, rng);
  auto lm = generate_logreg_data(50, {1.0, 6.0}, rng);
  for (int k = 0; k < 500; ++k) {
    const double eta_c = 100.0 * (rng.uniform() - 0.25);
    const int n = static_cast<int>(rng.uniform() * 50);
    REQUIRE(cm.potential_eta(n, std::abs(eta_c)) <= -kLogPi + 1e-12);
    REQUIRE(lm.potential_eta(n, eta_c) <= 1e-12);
  }
}

TEST_CASE("analytic eta gradients match central differences", "[models]") {
  Rng rng(42);
  auto cm = generate_cauchy_data(40, 5.0, rng);
  auto lm = generate_logreg_data(40, {1.0, 6.0}, rng);

  // hand cases first
  CauchyLocationModel exact(5.0, {25.0, 26.0});
  REQUIRE(exact.potential_grad_eta(0, 25.0) == 0.0);
  REQUIRE(exact.potential_grad_eta(1, 25.0) == Catch::Approx(1.0).epsilon(1e-14));

  const double h = 1e-5;
  for (int k = 0; k < 100; ++k) {
    const int n = static_cast<int>(rng.uniform() * 40);
    const double e = 50.0 * (rng.uniform() - 0.5) + 25.0;
    const double fd_c =
        (cm.potential_eta(n, e + h) - cm.potential_eta(n, e - h)) / (2 * h);
    REQUIRE(std::abs(cm.potential_grad_eta(n, e) - fd_c) < 1e-6);
    const double e2 = 20.0 * (rng.uniform() - 0.5);
    const double fd_l =
        (lm.potential_eta(n, e2 + h) - lm.potential_eta(n, e2 - h)) / (2 * h);
    REQUIRE(std::abs(lm.potential_grad_eta(n, e2) - fd_l) < 1e-6);
  }
}

TEST_CASE("generation is reproducible for a fixed seed", "[models]") {
  Rng a(5150), b(5150);
  auto m1 = generate_cauchy_data(500, 5.0, a);
  auto m2 = generate_cauchy_data(500, 5.0, b);
  REQUIRE(m1.data() == m2.data());
  Rng c(5150), d(5150);
  auto l1 = generate_logreg_data(200, {1.0, 6.0}, c);
  auto l2 = generate_logreg_data(200, {1.0, 6.0}, d);
  REQUIRE(l1.covariates() == l2.covariates());
  REQUIRE(l1.labels() == l2.labels());
}

TEST_CASE("csv round trip", "[models]") {
  Rng rng(8);
  auto cm = generate_cauchy_data(20, 5.0, rng);
  std::stringstream ss;
  cm.write_csv(ss);
  auto back = load_cauchy_csv(ss);
  REQUIRE(back.data() == cm.data());

  auto lm = generate_logreg_data(20, {1.0, 6.0}, rng);
  std::stringstream ss2;
  lm.write_csv(ss2);
  auto back2 = load_logreg_csv(ss2);
  REQUIRE(back2.covariates() == lm.covariates());
  REQUIRE(back2.labels() == lm.labels());
}

TEST_CASE("pushforward prior densities integrate to one", "[models]") {
  CauchyLocationModel cm(5.0, {1.0});
  double acc = 0.0;
  const int k = 400000;
  // eta = theta^2 density on a log-spaced ladder plus trapezoid tails
  for (int i = 0; i < k; ++i) {
    const double e = 1e-8 * std::pow(1e14 / 1e-8, (i + 0.5) / k);
    const double e_next = 1e-8 * std::pow(1e14 / 1e-8, (i + 1.5) / k);
    acc += std::exp(cm.pushforward_log_prior(e)) * (e_next - e);
  }
  REQUIRE(acc == Catch::Approx(1.0).margin(2e-3));

  LogRegModel lm({1.0, 6.0}, {{0.1, 0.1}}, {1});
  double acc2 = 0.0;
  const int k2 = 200000;
  for (int i = 0; i < k2; ++i) {
    const double e = -4000.0 + 8000.0 * (i + 0.5) / k2;
    acc2 += std::exp(lm.pushforward_log_prior(e)) * 8000.0 / k2;
  }
  REQUIRE(acc2 == Catch::Approx(1.0).margin(2e-3));
}

TEST_CASE("index bounds are enforced", "[models]") {
  CauchyLocationModel cm(5.0, {1.0, 2.0});
  REQUIRE_THROWS_AS(cm.potential(2, {0.0, 0.0}), std::out_of_range);
  REQUIRE_THROWS_AS(cm.potential(-1, {0.0, 0.0}), std::out_of_range);
}
