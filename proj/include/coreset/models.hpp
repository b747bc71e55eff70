#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coreset/rng.hpp"
#include "coreset/weights.hpp"

namespace coreset {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogPi = 1.1447298858494001741;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// A point in parameter space; only the first theta_dim() coordinates are used.
using ThetaPoint = std::array<double, 2>;

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// Bayesian model with per-datum log-likelihood potentials. Both validation
// models share a key structural property: every potential depends on theta
// only through a scalar pushforward coordinate eta. The quadrature layer
// exploits this to evaluate weighted potential sums once per distinct eta, and
// the same map gives an exact one-dimensional representation of the posterior
// (the log density ratio of any two coreset posteriors is a function of eta,
// so KL divergences agree between the native and pushforward coordinates).
//
// Models are immutable after construction; all member functions are const and
// safe to call concurrently.
class PotentialModel {
 public:
  virtual ~PotentialModel() = default;

  virtual std::string name() const = 0;
  virtual int theta_dim() const = 0;
  virtual int size() const = 0;  // number of data points N

  // normalized log density of the base distribution at a native point
  virtual double log_prior(const ThetaPoint& t) const = 0;

  // pushforward coordinate and the exact log density of the base distribution
  // pushed through it
  virtual double eta(const ThetaPoint& t) const = 0;
  virtual double pushforward_log_prior(double eta) const = 0;
  virtual std::pair<double, double> eta_support() const = 0;
  virtual double eta0() const = 0;  // eta at the data-generating parameter

  virtual double potential_eta(int n, double eta) const = 0;
  virtual double potential_grad_eta(int n, double eta) const = 0;

  // squared covariate magnitude, the statistic behind the nonuniform
  // subsampling probabilities
  virtual double datum_norm_sq(int n) const = 0;

  // data-informed eta values seeding the mode scans in auto_grid
  virtual std::vector<double> scan_anchor_etas() const = 0;

  double potential(int n, const ThetaPoint& t) const {
    check_index(n);
    return potential_eta(n, eta(t));
  }

  // out[i] += w * potential_eta(n, etas[i]); overridden by the concrete
  // models with tight loops since this is the hot path of posterior builds
  virtual void add_scaled_potential(int n, double w, std::span<const double> etas,
                                    std::span<double> out) const {
    check_index(n);
    for (std::size_t i = 0; i < etas.size(); ++i) out[i] += w * potential_eta(n, etas[i]);
  }

  void accumulate_weighted(const CoresetWeights& weights, std::span<const double> etas,
                           std::span<double> out) const {
    if (weights.n_total() != size())
      throw std::invalid_argument("accumulate_weighted: weights sized for a different dataset");
    for (const auto& [n, w] : weights.entries())
      if (w != 0.0) add_scaled_potential(n, w, etas, out);
  }

  virtual void write_csv(std::ostream& os) const = 0;

 protected:
  void check_index(int n) const {
    if (n < 0 || n >= size()) throw std::out_of_range("potential index out of range");
  }
};

// Location model with a Cauchy(0,1) prior on theta and Cauchy(theta^2, 1)
// likelihood. The potentials act through eta = theta^2, which makes the
// posterior bimodal in theta (unidentifiable sign) and heavy tailed.
class CauchyLocationModel final : public PotentialModel {
 public:
  CauchyLocationModel(double theta0, std::vector<double> data)
      : theta0_(theta0), data_(std::move(data)) {
    if (data_.empty()) throw std::invalid_argument("CauchyLocationModel: empty data");
    for (double x : data_)
      if (!std::isfinite(x)) throw std::invalid_argument("CauchyLocationModel: non-finite datum");
  }

  std::string name() const override { return "cauchy"; }
  int theta_dim() const override { return 1; }
  int size() const override { return static_cast<int>(data_.size()); }
  double theta0() const { return theta0_; }
  const std::vector<double>& data() const { return data_; }

  double log_prior(const ThetaPoint& t) const override {
    return -kLogPi - std::log1p(t[0] * t[0]);
  }

  double eta(const ThetaPoint& t) const override { return t[0] * t[0]; }

  // density of theta^2 under Cauchy(0,1): 1 / (pi sqrt(eta) (1+eta)) on eta>0
  double pushforward_log_prior(double eta) const override {
    if (eta <= 0.0) return -kInf;
    return -kLogPi - 0.5 * std::log(eta) - std::log1p(eta);
  }

  std::pair<double, double> eta_support() const override { return {0.0, kInf}; }
  double eta0() const override { return theta0_ * theta0_; }

  double potential_eta(int n, double eta) const override {
    check_index(n);
    const double r = data_[static_cast<std::size_t>(n)] - eta;
    return -kLogPi - std::log1p(r * r);
  }

  double potential_grad_eta(int n, double eta) const override {
    check_index(n);
    const double r = data_[static_cast<std::size_t>(n)] - eta;
    return 2.0 * r / (r * r + 1.0);
  }

  double datum_norm_sq(int n) const override {
    check_index(n);
    const double x = data_[static_cast<std::size_t>(n)];
    return x * x;
  }

  std::vector<double> scan_anchor_etas() const override {
    // central quantiles of the data straddle the likelihood mode of eta
    std::vector<double> s = data_;
    std::sort(s.begin(), s.end());
    std::vector<double> anchors;
    for (int q = 1; q < 32; ++q) {
      const auto i = static_cast<std::size_t>((s.size() - 1) * q / 32);
      anchors.push_back(s[i]);
    }
    return anchors;
  }

  void add_scaled_potential(int n, double w, std::span<const double> etas,
                            std::span<double> out) const override {
    check_index(n);
    const double x = data_[static_cast<std::size_t>(n)];
    const double c = -w * kLogPi;
    for (std::size_t i = 0; i < etas.size(); ++i) {
      const double r = x - etas[i];
      out[i] += c - w * std::log1p(r * r);
    }
  }

  void write_csv(std::ostream& os) const override {
    os << "x\n";
    char buf[48];
    for (double x : data_) {
      std::snprintf(buf, sizeof(buf), "%.17g\n", x);
      os << buf;
    }
  }

 private:
  double theta0_;
  std::vector<double> data_;
};

// Logistic regression with rank-one coupling matrix A = [[1,1],[1,1]] and
// independent Cauchy(0,1) priors per coordinate. Since A theta depends only on
// theta_1 + theta_2, the potentials act through eta = theta_1 + theta_2 whose
// prior pushforward is Cauchy(0,2); the posterior has a ridge of equivalent
// parameters in the native coordinates.
class LogRegModel final : public PotentialModel {
 public:
  LogRegModel(ThetaPoint theta0, std::vector<ThetaPoint> covariates,
              std::vector<int> labels)
      : theta0_(theta0), covariates_(std::move(covariates)), labels_(std::move(labels)) {
    if (covariates_.empty()) throw std::invalid_argument("LogRegModel: empty data");
    if (covariates_.size() != labels_.size())
      throw std::invalid_argument("LogRegModel: covariate/label length mismatch");
    c_.reserve(covariates_.size());
    for (std::size_t i = 0; i < covariates_.size(); ++i) {
      const auto& x = covariates_[i];
      if (!std::isfinite(x[0]) || !std::isfinite(x[1]))
        throw std::invalid_argument("LogRegModel: non-finite covariate");
      if (x[0] * x[0] + x[1] * x[1] > 1.0 + 1e-12)
        throw std::invalid_argument("LogRegModel: covariate outside the unit disk");
      if (labels_[i] != 0 && labels_[i] != 1)
        throw std::invalid_argument("LogRegModel: label must be 0 or 1");
      c_.push_back(x[0] + x[1]);
    }
  }

  std::string name() const override { return "logreg"; }
  int theta_dim() const override { return 2; }
  int size() const override { return static_cast<int>(covariates_.size()); }
  const ThetaPoint& theta0() const { return theta0_; }
  const std::vector<ThetaPoint>& covariates() const { return covariates_; }
  const std::vector<int>& labels() const { return labels_; }

  double log_prior(const ThetaPoint& t) const override {
    return -2.0 * kLogPi - std::log1p(t[0] * t[0]) - std::log1p(t[1] * t[1]);
  }

  double eta(const ThetaPoint& t) const override { return t[0] + t[1]; }

  // sum of two independent Cauchy(0,1) variables is Cauchy(0,2)
  double pushforward_log_prior(double eta) const override {
    return std::log(2.0) - kLogPi - std::log(4.0 + eta * eta);
  }

  std::pair<double, double> eta_support() const override { return {-kInf, kInf}; }
  double eta0() const override { return theta0_[0] + theta0_[1]; }

  // y*s - log(1+e^s) with s = c_n * eta, evaluated without overflow
  double potential_eta(int n, double eta) const override {
    check_index(n);
    const double s = c_[static_cast<std::size_t>(n)] * eta;
    const double y = static_cast<double>(labels_[static_cast<std::size_t>(n)]);
    if (s > 0.0) return (y - 1.0) * s - std::log1p(std::exp(-s));
    return y * s - std::log1p(std::exp(s));
  }

  double potential_grad_eta(int n, double eta) const override {
    check_index(n);
    const std::size_t i = static_cast<std::size_t>(n);
    const double s = c_[i] * eta;
    return (static_cast<double>(labels_[i]) - sigmoid(s)) * c_[i];
  }

  double datum_norm_sq(int n) const override {
    check_index(n);
    const auto& x = covariates_[static_cast<std::size_t>(n)];
    return x[0] * x[0] + x[1] * x[1];
  }

  std::vector<double> scan_anchor_etas() const override {
    std::vector<double> anchors;
    for (int k = -60; k <= 60; ++k) anchors.push_back(0.5 * k);
    return anchors;
  }

  void add_scaled_potential(int n, double w, std::span<const double> etas,
                            std::span<double> out) const override {
    check_index(n);
    const std::size_t i = static_cast<std::size_t>(n);
    const double c = c_[i];
    const double y = static_cast<double>(labels_[i]);
    for (std::size_t k = 0; k < etas.size(); ++k) {
      const double s = c * etas[k];
      out[k] += (s > 0.0) ? w * ((y - 1.0) * s - std::log1p(std::exp(-s)))
                          : w * (y * s - std::log1p(std::exp(s)));
    }
  }

  void write_csv(std::ostream& os) const override {
    os << "x1,x2,y\n";
    char buf[96];
    for (std::size_t i = 0; i < covariates_.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", covariates_[i][0],
                    covariates_[i][1], labels_[i]);
      os << buf;
    }
  }

 private:
  ThetaPoint theta0_;
  std::vector<ThetaPoint> covariates_;
  std::vector<int> labels_;
  std::vector<double> c_;  // x1 + x2 per datum
};

// standard Cauchy quantile transform; u = 1/2 maps to zero
inline double std_cauchy_from_uniform(double u) { return std::tan(kPi * (u - 0.5)); }

inline CauchyLocationModel generate_cauchy_data(int n, double theta0, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_cauchy_data: n must be >= 1");
  std::vector<double> x(static_cast<std::size_t>(n));
  const double loc = theta0 * theta0;
  for (auto& v : x) v = loc + std_cauchy_from_uniform(rng.uniform_open());
  return CauchyLocationModel(theta0, std::move(x));
}

inline LogRegModel generate_logreg_data(int n, const ThetaPoint& theta0, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_logreg_data: n must be >= 1");
  std::vector<ThetaPoint> xs(static_cast<std::size_t>(n));
  std::vector<int> ys(static_cast<std::size_t>(n));
  const double eta0 = theta0[0] + theta0[1];
  for (int i = 0; i < n; ++i) {
    const double r = std::sqrt(rng.uniform());
    const double a = 2.0 * kPi * rng.uniform();
    const ThetaPoint x{r * std::cos(a), r * std::sin(a)};
    const double p = sigmoid((x[0] + x[1]) * eta0);
    xs[static_cast<std::size_t>(i)] = x;
    ys[static_cast<std::size_t>(i)] = rng.uniform() < p ? 1 : 0;
  }
  return LogRegModel(theta0, std::move(xs), std::move(ys));
}

inline CauchyLocationModel load_cauchy_csv(std::istream& is, double theta0 = 5.0) {
  std::string line;
  if (!std::getline(is, line) || line != "x")
    throw std::runtime_error("load_cauchy_csv: bad header");
  std::vector<double> x;
  while (std::getline(is, line))
    if (!line.empty()) x.push_back(std::stod(line));
  return CauchyLocationModel(theta0, std::move(x));
}

inline LogRegModel load_logreg_csv(std::istream& is, ThetaPoint theta0 = {1.0, 6.0}) {
  std::string line;
  if (!std::getline(is, line) || line != "x1,x2,y")
    throw std::runtime_error("load_logreg_csv: bad header");
  std::vector<ThetaPoint> xs;
  std::vector<int> ys;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f1, f2, f3;
    std::getline(ss, f1, ',');
    std::getline(ss, f2, ',');
    std::getline(ss, f3, ',');
    xs.push_back({std::stod(f1), std::stod(f2)});
    ys.push_back(std::stoi(f3));
  }
  return LogRegModel(theta0, std::move(xs), std::move(ys));
}

}  // namespace coreset
