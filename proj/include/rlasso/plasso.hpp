#pragma once

#include "rlasso/dataset.hpp"
#include "rlasso/error.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace rlasso {

using Index = Eigen::Index;

/// SVD factors of a design Φ = U Σ Vᵀ split into column space (U1) and
/// kernel (U2). The hat matrix H = U1 U1ᵀ is available on demand.
struct Preconditioner {
  Matrix u1;               // n x r
  Matrix u2;               // n x (n - r)
  Vector singular_values;  // r, descending
  Matrix v;                // p x r
  Index rank = 0;
  double rank_tolerance = 1e-10;

  Index observations() const { return u1.rows(); }
  Index effective_observations() const { return u2.cols(); }

  Matrix hat() const;
  /// (I - H) x without forming H.
  Vector residualize(const Vector& x) const;
  /// Throws DataError when the design leaves no kernel space.
  void require_kernel() const;
};

Preconditioner precondition(const Matrix& phi, double rank_tolerance = 1e-10);

/// β̂ = (ΦᵀΦ)†Φᵀ(y − γ), computed from the SVD factors.
Vector solve_beta(const Preconditioner& pre, const Vector& y, const Vector& gamma);
Vector solve_beta(const Matrix& phi, const Vector& y, const Vector& gamma);

struct Breakpoint {
  double lambda = 0.0;
  std::vector<Index> active;                   // support of gamma at lambda
  std::vector<int> signs;                      // sign of gamma for each active index
  std::vector<std::pair<Index, double>> gamma; // nonzero coefficients at lambda
  std::vector<Index> entered;                  // become nonzero just below lambda
  std::vector<Index> dropped;                  // hit zero at lambda
  /// dγ/d(−λ) on the segment below lambda, for every index in the working set.
  std::vector<std::pair<Index, double>> direction;
};

/// Piecewise-linear solution path of the outlier LASSO, breakpoints in
/// strictly decreasing lambda order starting at lambda_max.
struct RegularizationPath {
  std::vector<Breakpoint> breakpoints;
  double lambda_max = 0.0;
  Index n = 0;

  /// Dense coefficient vector at a breakpoint.
  Vector gamma_at(std::size_t k) const;
  /// Linear interpolation between the enclosing breakpoints; zero above lambda_max.
  Vector gamma_at_lambda(double lambda) const;
};

/// Thrown when a homotopy step fails; carries the valid prefix computed so far.
class PathError : public NumericalError {
 public:
  PathError(const std::string& what, RegularizationPath prefix)
      : NumericalError(what), prefix_(std::move(prefix)) {}
  const RegularizationPath& prefix() const { return prefix_; }

 private:
  RegularizationPath prefix_;
};

struct LassoPathOptions {
  double lambda_min_ratio = 1e-6;
  Index max_active = 0;  // 0: unlimited
  Index max_steps = 0;   // 0: 8 n
  /// Relative KKT slack checked at every breakpoint.
  double kkt_tolerance = 1e-8;
};

/// Homotopy solution of min ½‖U2ᵀy − U2ᵀγ‖² + λ‖γ‖₁ with exact add/drop
/// breakpoints, from lambda_max = ‖(I − H)y‖∞ down to lambda_min.
RegularizationPath lasso_path(const Preconditioner& pre, const Vector& y,
                              const LassoPathOptions& opts = {});

/// Largest stationarity violation over all breakpoints of the path:
/// |c_j − λ s_j| for active j, max(0, |c_j| − λ) otherwise, with c = (I − H)(y − γ).
double max_kkt_violation(const RegularizationPath& path, const Preconditioner& pre, const Vector& y);
double kkt_violation(const Preconditioner& pre, const Vector& y, const Vector& gamma, double lambda);

struct CoordinateDescentOptions {
  double tolerance = 1e-14;
  int max_sweeps = 200000;
};

/// Cyclic coordinate descent for min ½‖b − Aγ‖² + λ‖γ‖₁.
Vector lasso_coordinate_descent(const Matrix& design, const Vector& response, double lambda,
                                const CoordinateDescentOptions& opts = {},
                                const Vector* warm_start = nullptr);

struct EquivalenceResult {
  Vector gamma_hat_form;     // design I − H, response (I − H) y
  Vector gamma_kernel_form;  // design U2ᵀ, response U2ᵀ y
  double max_diff = 0.0;
};

EquivalenceResult equivalence_check(const Preconditioner& pre, const Vector& y, double lambda);

enum class SelectionRule { None, Count, CrossValidation };

struct OutlierReport {
  std::vector<Index> ranking;
  std::vector<double> activation_lambdas;
  std::vector<Index> selected;
  SelectionRule rule = SelectionRule::None;
  int rule_parameter = 0;  // k for Count, folds for CrossValidation
  std::vector<std::pair<double, double>> cv_trace;  // (lambda, mean held-out accuracy)
};

/// Ranks instances by the largest lambda at which they enter the path.
/// Ties at one breakpoint: larger |slope| first, then lower index.
OutlierReport order_by_activation(const RegularizationPath& path);

/// Takes the first k ranked instances as outliers.
OutlierReport select_top_k(OutlierReport report, Index k);

struct CrossValidationOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  double reg_c = 1.0;
  int epochs = 60;
};

/// For each breakpoint treats its support as outliers, cross-validates the
/// linear classifier on the remaining instances, and selects the support
/// with the highest mean held-out accuracy (ties go to the larger lambda).
OutlierReport select_outliers_cv(const RegularizationPath& path, const Dataset& ds,
                                 const CrossValidationOptions& opts = {});

struct IpodResult {
  std::vector<Index> support;
  int iterations = 0;
  bool converged = true;  // false: max_iter reached while the support still changed
};

/// Hard-thresholding outlier iteration started from a path support, keeping
/// exactly |init_support| residuals per step.
IpodResult ipod_refine(const Preconditioner& pre, const Vector& y,
                       const std::vector<Index>& init_support, int max_iter = 100);

void write_path_json(const RegularizationPath& path, std::ostream& out);
/// Long format rows (lambda, instance, gamma[, is_outlier]).
void write_path_csv(const RegularizationPath& path, std::ostream& out,
                    const std::optional<std::vector<bool>>& outlier_mask = std::nullopt);

/// Fraction of the given instances that are true outliers.
double outlier_precision(const std::vector<Index>& detected, const std::vector<bool>& mask);
/// Fraction of true outliers found among the given instances.
double outlier_recall(const std::vector<Index>& detected, const std::vector<bool>& mask);

}  // namespace rlasso
