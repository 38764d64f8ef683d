#pragma once
// Independent reference computations used only by tests. Nothing here calls
// into the SVD-based code paths of the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace oracle {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  return random_matrix(n, 1, rng).col(0);
}

// Φ (ΦᵀΦ)† Φᵀ through a complete orthogonal decomposition.
inline Eigen::MatrixXd hat_matrix(const Eigen::MatrixXd& phi) {
  Eigen::MatrixXd gram = phi.transpose() * phi;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  return phi * cod.pseudoInverse() * phi.transpose();
}

inline double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// ½‖(I − H)(y − γ)‖² + λ‖γ‖₁ with H given explicitly.
inline double outlier_objective(const Eigen::MatrixXd& hat, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& gamma, double lambda) {
  Eigen::VectorXd r = y - gamma;
  r -= hat * r;
  return 0.5 * r.squaredNorm() + lambda * gamma.lpNorm<1>();
}

// Dense brute force of the similarity graph: ω = exp(ip²/δ) on the k most
// similar rows (ties to lower index), δ the median of those ip² values.
inline Eigen::MatrixXd dense_transition(const Eigen::MatrixXd& psi, int k) {
  const Eigen::Index n = psi.rows();
  std::vector<std::vector<std::pair<double, Eigen::Index>>> cand(n);
  std::vector<double> all;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a == b) continue;
      double ip = psi.row(a).dot(psi.row(b));
      cand[a].push_back({ip * ip, b});
    }
    std::stable_sort(cand[a].begin(), cand[a].end(),
                     [](const auto& l, const auto& r) { return l.first > r.first; });
    cand[a].resize(k);
    for (const auto& c : cand[a]) all.push_back(c.first);
  }
  std::sort(all.begin(), all.end());
  const std::size_t m = all.size();
  double delta = m % 2 ? all[m / 2] : 0.5 * (all[m / 2 - 1] + all[m / 2]);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (const auto& c : cand[a]) p(a, c.second) = std::exp(c.first / delta);
    p.row(a) /= p.row(a).sum();
  }
  return p;
}

}  // namespace oracle

namespace oracle {

// Cyclic coordinate descent on ½‖A(y − γ)‖² + λ‖γ‖₁ for a symmetric
// idempotent A, written against A directly.
inline Eigen::VectorXd projected_lasso_cd(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                          double lambda, int sweeps = 100000, double tol = 1e-15) {
  const Eigen::Index n = y.size();
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = a * y;  // A(y − γ)
  for (int s = 0; s < sweeps; ++s) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ajj = a(j, j);
      if (ajj <= 1e-14) continue;
      const double old = gamma(j);
      const double z = r(j) + ajj * old;
      const double updated = soft(z, lambda) / ajj;
      if (updated != old) {
        r += a.col(j) * (old - updated);
        gamma(j) = updated;
        change = std::max(change, std::abs(updated - old));
      }
    }
    if (change < tol) break;
  }
  return gamma;
}

}  // namespace oracle
