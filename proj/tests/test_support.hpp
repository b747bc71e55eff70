#pragma once

// Test-only models: analytically tractable potentials for quadrature oracles.

#include <memory>
#include <vector>

#include "coreset/models.hpp"

namespace coreset::testing {

// One-dimensional model with a standard normal base measure and linear
// potentials l_1 = theta, l_2 = -theta. With w = (1,1) the posterior is
// N(0,1); with w = (1,0) it is N(1,1), so KL in both directions is 1/2.
class GaussianPairModel final : public PotentialModel {
 public:
  std::string name() const override { return "gaussian_pair"; }
  int theta_dim() const override { return 1; }
  int size() const override { return 2; }

  double log_prior(const ThetaPoint& t) const override { return -0.5 * t[0] * t[0]; }
  double eta(const ThetaPoint& t) const override { return t[0]; }
  double pushforward_log_prior(double e) const override { return -0.5 * e * e; }
  std::pair<double, double> eta_support() const override { return {-kInf, kInf}; }
  double eta0() const override { return 0.0; }

  double potential_eta(int n, double e) const override {
    check_index(n);
    return n == 0 ? e : -e;
  }
  double potential_grad_eta(int n, double) const override {
    check_index(n);
    return n == 0 ? 1.0 : -1.0;
  }
  double datum_norm_sq(int n) const override {
    check_index(n);
    return 1.0;
  }
  std::vector<double> scan_anchor_etas() const override {
    std::vector<double> a;
    for (int i = -20; i <= 20; ++i) a.push_back(0.5 * i);
    return a;
  }
  void write_csv(std::ostream& os) const override { os << "n\n1\n2\n"; }
};

// Wraps a model and adds a fixed constant to every potential; KL quantities
// and centered bounds must be unchanged.
class ShiftedPotentialModel final : public PotentialModel {
 public:
  ShiftedPotentialModel(const PotentialModel& inner, double shift)
      : inner_(inner), shift_(shift) {}

  std::string name() const override { return inner_.name() + "_shifted"; }
  int theta_dim() const override { return inner_.theta_dim(); }
  int size() const override { return inner_.size(); }
  double log_prior(const ThetaPoint& t) const override { return inner_.log_prior(t); }
  double eta(const ThetaPoint& t) const override { return inner_.eta(t); }
  double pushforward_log_prior(double e) const override {
    return inner_.pushforward_log_prior(e);
  }
  std::pair<double, double> eta_support() const override { return inner_.eta_support(); }
  double eta0() const override { return inner_.eta0(); }
  double potential_eta(int n, double e) const override {
    return inner_.potential_eta(n, e) + shift_;
  }
  double potential_grad_eta(int n, double e) const override {
    return inner_.potential_grad_eta(n, e);
  }
  double datum_norm_sq(int n) const override { return inner_.datum_norm_sq(n); }
  std::vector<double> scan_anchor_etas() const override {
    return inner_.scan_anchor_etas();
  }
  void write_csv(std::ostream& os) const override { inner_.write_csv(os); }

 private:
  const PotentialModel& inner_;
  double shift_;
};

}  // namespace coreset::testing
