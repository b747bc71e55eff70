#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace coreset {

// min_{w >= 0} ||G w - b||^2
struct NnlsProblem {
  Eigen::MatrixXd G;       // S x m, columns are features
  Eigen::VectorXd b;       // length S
  double tol = 1e-10;      // dual feasibility tolerance
  int max_iter = 0;        // 0 selects 10 * m
};

struct NnlsSolution {
  Eigen::VectorXd w;       // length m, elementwise >= 0
  double objective = 0.0;  // ||G w - b||^2
  Eigen::VectorXd dual;    // G^T (G w - b)
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// minimum-norm least squares on the passive columns, small and dense
inline Eigen::VectorXd passive_solve(const Eigen::MatrixXd& g,
                                     const std::vector<int>& passive,
                                     const Eigen::VectorXd& b) {
  const auto k = static_cast<Eigen::Index>(passive.size());
  Eigen::MatrixXd sub(g.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) sub.col(j) = g.col(passive[static_cast<std::size_t>(j)]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-12);
  return svd.solve(b);
}

}  // namespace detail

// Lawson-Hanson active-set iteration. Rank-deficient passive systems are
// solved in the minimum-norm sense with a 1e-12 singular value cutoff, which
// keeps duplicate or near-parallel columns finite.
inline NnlsSolution nnls(const NnlsProblem& problem) {
  const Eigen::Index s = problem.G.rows();
  const Eigen::Index m = problem.G.cols();
  if (s < 1 || m < 1) throw std::invalid_argument("nnls: empty problem");
  if (!problem.G.allFinite() || !problem.b.allFinite())
    throw std::invalid_argument("nnls: non-finite entries");
  const int max_iter = problem.max_iter > 0 ? problem.max_iter : 10 * static_cast<int>(m);
  const double tol = problem.tol;

  NnlsSolution sol;
  sol.w = Eigen::VectorXd::Zero(m);
  std::vector<int> passive;
  std::vector<bool> in_passive(static_cast<std::size_t>(m), false);

  Eigen::VectorXd resid = problem.b;
  double objective = resid.squaredNorm();
  int iter = 0;
  bool optimal = false;

  while (iter < max_iter) {
    const Eigen::VectorXd t = problem.G.transpose() * resid;  // negative gradient
    int best = -1;
    double best_t = tol;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!in_passive[static_cast<std::size_t>(j)] && t[j] > best_t) {
        best_t = t[j];
        best = static_cast<int>(j);
      }
    if (best < 0) {
      optimal = true;
      break;
    }
    passive.push_back(best);
    in_passive[static_cast<std::size_t>(best)] = true;
    ++iter;

    // inner loop: solve on the passive set, walk back to feasibility
    while (true) {
      const Eigen::VectorXd z = detail::passive_solve(problem.G, passive, problem.b);
      bool all_positive = true;
      for (Eigen::Index j = 0; j < z.size(); ++j)
        if (z[j] <= 0.0) all_positive = false;
      if (all_positive) {
        for (std::size_t j = 0; j < passive.size(); ++j)
          sol.w[passive[j]] = z[static_cast<Eigen::Index>(j)];
        break;
      }
      double alpha = 1.0;
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const double zj = z[static_cast<Eigen::Index>(j)];
        if (zj <= 0.0) {
          const double wj = sol.w[passive[j]];
          if (wj - zj > 0.0) alpha = std::min(alpha, wj / (wj - zj));
        }
      }
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const double zj = z[static_cast<Eigen::Index>(j)];
        double& wj = sol.w[passive[j]];
        wj += alpha * (zj - wj);
      }
      std::vector<int> next;
      for (int j : passive) {
        if (sol.w[j] <= 1e-14 * std::max(1.0, sol.w.cwiseAbs().maxCoeff())) {
          sol.w[j] = 0.0;
          in_passive[static_cast<std::size_t>(j)] = false;
        } else {
          next.push_back(j);
        }
      }
      if (next.size() == passive.size()) {
        // no coordinate left the passive set; accept the clipped point
        break;
      }
      passive.swap(next);
      if (passive.empty()) break;
    }

    resid = problem.b - problem.G * sol.w;
    const double new_objective = resid.squaredNorm();
#ifndef NDEBUG
    assert(new_objective <= objective + 1e-12 * std::max(1.0, objective));
#endif
    if (new_objective > objective) break;  // numerical stall
    objective = new_objective;
  }

  sol.objective = objective;
  sol.dual = problem.G.transpose() * (problem.G * sol.w - problem.b);
  sol.iterations = iter;

  // KKT certificate: dual >= -tol everywhere, complementary on the support
  bool kkt = true;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (sol.dual[j] < -tol) kkt = false;
    if (sol.w[j] > 0.0 && std::abs(sol.dual[j]) > tol) kkt = false;
  }
  sol.converged = optimal && kkt;
  return sol;
}

}  // namespace coreset
