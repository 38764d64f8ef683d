#include "rlasso/plasso.hpp"

#include <Eigen/SVD>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace rlasso {

namespace {

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

void check_length(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw DataError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                    std::to_string(n));
  }
}

}  // namespace

Matrix Preconditioner::hat() const { return u1 * u1.transpose(); }

Vector Preconditioner::residualize(const Vector& x) const {
  return x - u1 * (u1.transpose() * x);
}

void Preconditioner::require_kernel() const {
  if (effective_observations() == 0) {
    throw DataError("no kernel space: reduce feature dimension (use TDCA)");
  }
}

Preconditioner precondition(const Matrix& phi, double rank_tolerance) {
  const Index n = phi.rows();
  if (n < 2) throw DataError("precondition needs at least two instances");
  if (!phi.allFinite()) throw DataError("design matrix contains non-finite entries");
  if (!(rank_tolerance > 0.0)) throw ConfigError("rank tolerance must be positive");

  Preconditioner pre;
  pre.rank_tolerance = rank_tolerance;
  if (phi.cols() == 0) {
    pre.u1.resize(n, 0);
    pre.u2 = Matrix::Identity(n, n);
    pre.v.resize(0, 0);
    return pre;
  }

  Eigen::JacobiSVD<Matrix> svd(phi, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = rank_tolerance * (sv.size() > 0 ? sv[0] : 0.0);
  Index r = 0;
  while (r < sv.size() && sv[r] > cutoff) ++r;

  pre.rank = r;
  pre.u1 = svd.matrixU().leftCols(r);
  pre.u2 = svd.matrixU().rightCols(n - r);
  pre.singular_values = sv.head(r);
  pre.v = svd.matrixV().leftCols(r);
  return pre;
}

Vector solve_beta(const Preconditioner& pre, const Vector& y, const Vector& gamma) {
  check_length(y, pre.observations(), "y");
  check_length(gamma, pre.observations(), "gamma");
  const Vector coeffs = (pre.u1.transpose() * (y - gamma)).cwiseQuotient(pre.singular_values);
  return pre.v * coeffs;
}

Vector solve_beta(const Matrix& phi, const Vector& y, const Vector& gamma) {
  return solve_beta(precondition(phi), y, gamma);
}

Vector RegularizationPath::gamma_at(std::size_t k) const {
  Vector g = Vector::Zero(n);
  for (const auto& [i, v] : breakpoints.at(k).gamma) g[i] = v;
  return g;
}

Vector RegularizationPath::gamma_at_lambda(double lambda) const {
  if (breakpoints.empty() || lambda >= lambda_max) return Vector::Zero(n);
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    const double hi = breakpoints[k].lambda;
    const double lo = breakpoints[k + 1].lambda;
    if (lambda <= hi && lambda >= lo) {
      const double t = (hi - lambda) / (hi - lo);
      return (1.0 - t) * gamma_at(k) + t * gamma_at(k + 1);
    }
  }
  return gamma_at(breakpoints.size() - 1);
}

namespace {

/// Working-set state of the homotopy. The Gram matrix of the outlier design
/// is G = I − H = I − U1 U1ᵀ, so G_AA⁻¹ follows from the Woodbury identity
/// with the r x r matrix I − U1_Aᵀ U1_A.
class Homotopy {
 public:
  Homotopy(const Preconditioner& pre, const Vector& y) : pre_(pre), y_(y), gamma_(Vector::Zero(y.size())) {}

  Vector correlations() const { return pre_.residualize(y_ - gamma_); }

  void add(Index j, int s) {
    active_.push_back(j);
    signs_.push_back(s);
  }

  void remove(Index j) {
    auto it = std::find(active_.begin(), active_.end(), j);
    const auto pos = it - active_.begin();
    active_.erase(it);
    signs_.erase(signs_.begin() + pos);
    gamma_[j] = 0.0;
  }

  /// Solves G_AA d = s_A. Returns false when G_AA is singular: the working
  /// set supports a vector of the column space.
  bool direction(Vector& d_active, Vector& a_all) const {
    const Index m = static_cast<Index>(active_.size());
    const Index r = pre_.rank;
    Matrix ua(m, r);
    Vector s(m);
    for (Index i = 0; i < m; ++i) {
      ua.row(i) = pre_.u1.row(active_[static_cast<std::size_t>(i)]);
      s[i] = signs_[static_cast<std::size_t>(i)];
    }
    if (r == 0) {
      d_active = s;
    } else {
      Matrix inner = Matrix::Identity(r, r) - ua.transpose() * ua;
      Eigen::SelfAdjointEigenSolver<Matrix> eig(inner);
      const double min_eig = eig.eigenvalues().minCoeff();
      if (!(min_eig > 1e-11)) return false;
      const Vector proj = ua.transpose() * s;
      const Vector solved = eig.eigenvectors() *
                            (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * proj));
      d_active = s + ua * solved;
    }
    // a = G_{:,A} d = d (embedded) − U1 U1_Aᵀ d
    a_all = Vector::Zero(pre_.observations());
    for (Index i = 0; i < m; ++i) a_all[active_[static_cast<std::size_t>(i)]] = d_active[i];
    if (r > 0) a_all -= pre_.u1 * (ua.transpose() * d_active);
    return true;
  }

  const std::vector<Index>& active() const { return active_; }
  const std::vector<int>& signs() const { return signs_; }
  Vector& gamma() { return gamma_; }
  const Vector& gamma() const { return gamma_; }

 private:
  const Preconditioner& pre_;
  const Vector& y_;
  Vector gamma_;
  std::vector<Index> active_;
  std::vector<int> signs_;
};

Breakpoint snapshot(double lambda, const Vector& gamma) {
  Breakpoint bp;
  bp.lambda = lambda;
  for (Index i = 0; i < gamma.size(); ++i) {
    if (gamma[i] != 0.0) {
      bp.active.push_back(i);
      bp.signs.push_back(sign_of(gamma[i]));
      bp.gamma.emplace_back(i, gamma[i]);
    }
  }
  return bp;
}

}  // namespace

double kkt_violation(const Preconditioner& pre, const Vector& y, const Vector& gamma, double lambda) {
  const Vector c = pre.residualize(y - gamma);
  double worst = 0.0;
  for (Index j = 0; j < c.size(); ++j) {
    if (gamma[j] != 0.0) {
      worst = std::max(worst, std::abs(c[j] - lambda * sign_of(gamma[j])));
    } else {
      worst = std::max(worst, std::abs(c[j]) - lambda);
    }
  }
  return worst;
}

double max_kkt_violation(const RegularizationPath& path, const Preconditioner& pre, const Vector& y) {
  double worst = 0.0;
  for (std::size_t k = 0; k < path.breakpoints.size(); ++k) {
    worst = std::max(worst, kkt_violation(pre, y, path.gamma_at(k), path.breakpoints[k].lambda));
  }
  return worst;
}

RegularizationPath lasso_path(const Preconditioner& pre, const Vector& y, const LassoPathOptions& opts) {
  pre.require_kernel();
  const Index n = pre.observations();
  check_length(y, n, "y");
  if (!y.allFinite()) throw DataError("labels contain non-finite values");
  if (!(opts.lambda_min_ratio >= 0.0 && opts.lambda_min_ratio < 1.0)) {
    throw ConfigError("lambda_min_ratio must lie in [0, 1)");
  }

  RegularizationPath path;
  path.n = n;
  Homotopy h(pre, y);
  const Vector c0 = h.correlations();
  const double lambda_max = c0.cwiseAbs().maxCoeff();
  path.lambda_max = lambda_max;

  Breakpoint first;
  first.lambda = lambda_max;
  if (lambda_max <= 0.0) {
    path.breakpoints.push_back(std::move(first));
    return path;
  }

  const double lambda_min = opts.lambda_min_ratio * lambda_max;
  const double tiny = 1e-13 * lambda_max;
  const double window = 1e-11 * lambda_max;
  const Index max_steps = opts.max_steps > 0 ? opts.max_steps : 8 * n + 16;
  const auto check_kkt = [&](double lambda) {
    const double slack = opts.kkt_tolerance * lambda + 1e-11 * lambda_max;
    const double v = kkt_violation(pre, y, h.gamma(), lambda);
    if (v > slack) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "KKT violation %.3e at lambda %.6e exceeds %.3e", v, lambda, slack);
      throw PathError(msg, path);
    }
  };

  for (Index j = 0; j < n; ++j) {
    if (std::abs(c0[j]) >= lambda_max - window) {
      h.add(j, sign_of(c0[j]));
      first.entered.push_back(j);
    }
  }
  path.breakpoints.push_back(std::move(first));

  struct Event {
    double t;
    Index j;
    int sign;  // 0: drop, ±1: add with this sign
  };

  double lambda = lambda_max;
  std::vector<Index> just_dropped;
  Vector d, a;
  std::vector<char> in_active(static_cast<std::size_t>(n), 0);

  for (Index step = 0;; ++step) {
    if (step >= max_steps) {
      throw PathError("homotopy exceeded " + std::to_string(max_steps) + " steps", path);
    }
    if (!h.direction(d, a)) break;  // working set spans the kernel: path is complete
    auto& current = path.breakpoints.back();
    current.direction.clear();
    for (std::size_t i = 0; i < h.active().size(); ++i) {
      current.direction.emplace_back(h.active()[i], d[static_cast<Index>(i)]);
    }

    const bool saturated = opts.max_active > 0 && static_cast<Index>(h.active().size()) >= opts.max_active;
    const Vector c = h.correlations();
    std::fill(in_active.begin(), in_active.end(), 0);
    for (Index j : h.active()) in_active[static_cast<std::size_t>(j)] = 1;
    for (Index j : just_dropped) in_active[static_cast<std::size_t>(j)] = 2;

    // Each candidate t = λ_now − λ_event: an inactive correlation reaches ±λ
    // or an active coefficient crosses zero.
    std::vector<Event> events;
    if (!saturated) {
      for (Index j = 0; j < n; ++j) {
        if (in_active[static_cast<std::size_t>(j)] != 0) continue;
        for (int s : {1, -1}) {
          const double denom = 1.0 - s * a[j];
          if (denom <= 1e-14) continue;
          const double t = (lambda - s * c[j]) / denom;
          if (t > tiny) events.push_back({t, j, s});
        }
      }
    }
    for (std::size_t i = 0; i < h.active().size(); ++i) {
      const Index j = h.active()[i];
      const double dj = d[static_cast<Index>(i)];
      if (dj == 0.0) continue;
      const double t = -h.gamma()[j] / dj;
      if (t > tiny) events.push_back({t, j, 0});
    }

    const double t_floor = lambda - lambda_min;
    double t_best = t_floor;
    for (const auto& e : events) t_best = std::min(t_best, e.t);

    for (std::size_t i = 0; i < h.active().size(); ++i) {
      h.gamma()[h.active()[i]] += t_best * d[static_cast<Index>(i)];
    }
    lambda -= t_best;

    if (t_best >= t_floor) {
      lambda = lambda_min;
      check_kkt(lambda);
      path.breakpoints.push_back(snapshot(lambda, h.gamma()));
      break;
    }

    std::vector<Index> entered, dropped;
    std::vector<int> entered_signs;
    for (const auto& e : events) {
      if (e.t > t_best + window) continue;
      if (e.sign == 0) {
        dropped.push_back(e.j);
      } else if (std::find(entered.begin(), entered.end(), e.j) == entered.end()) {
        entered.push_back(e.j);
        entered_signs.push_back(e.sign);
      }
    }
    std::sort(dropped.begin(), dropped.end());
    for (Index j : dropped) h.remove(j);
    for (std::size_t i = 0; i < entered.size(); ++i) h.add(entered[i], entered_signs[i]);
    just_dropped = dropped;

    check_kkt(lambda);
    Breakpoint bp = snapshot(lambda, h.gamma());
    bp.entered = std::move(entered);
    bp.dropped = std::move(dropped);
    path.breakpoints.push_back(std::move(bp));
    if (lambda <= lambda_min) break;
  }
  return path;
}

Vector lasso_coordinate_descent(const Matrix& design, const Vector& response, double lambda,
                                const CoordinateDescentOptions& opts, const Vector* warm_start) {
  if (design.rows() != response.size()) throw DataError("design and response row counts differ");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  const Index m = design.cols();
  Vector gamma = warm_start ? *warm_start : Vector::Zero(m);
  check_length(gamma, m, "warm start");
  const Vector norms = design.colwise().squaredNorm().transpose();
  Vector residual = response - design * gamma;

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    double max_coef = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (norms[j] <= 1e-300) {
        gamma[j] = 0.0;
        continue;
      }
      const double old = gamma[j];
      const double z = design.col(j).dot(residual) + norms[j] * old;
      const double shrunk = std::max(std::abs(z) - lambda, 0.0);
      const double updated = (z >= 0.0 ? shrunk : -shrunk) / norms[j];
      if (updated != old) {
        residual.noalias() -= (updated - old) * design.col(j);
        gamma[j] = updated;
      }
      max_change = std::max(max_change, std::abs(updated - old));
      max_coef = std::max(max_coef, std::abs(updated));
    }
    if (max_change <= opts.tolerance * std::max(1.0, max_coef)) break;
  }
  return gamma;
}

EquivalenceResult equivalence_check(const Preconditioner& pre, const Vector& y, double lambda) {
  pre.require_kernel();
  const Index n = pre.observations();
  check_length(y, n, "y");
  const Matrix x_tilde = Matrix::Identity(n, n) - pre.hat();
  const Matrix kernel_t = pre.u2.transpose();

  EquivalenceResult out;
  out.gamma_hat_form = lasso_coordinate_descent(x_tilde, x_tilde * y, lambda);
  out.gamma_kernel_form = lasso_coordinate_descent(kernel_t, kernel_t * y, lambda);
  out.max_diff = (out.gamma_hat_form - out.gamma_kernel_form).cwiseAbs().maxCoeff();
  return out;
}

OutlierReport order_by_activation(const RegularizationPath& path) {
  OutlierReport report;
  std::vector<char> seen(static_cast<std::size_t>(path.n), 0);
  for (const auto& bp : path.breakpoints) {
    std::vector<std::pair<Index, double>> fresh;
    for (Index j : bp.entered) {
      if (j < 0 || j >= path.n || seen[static_cast<std::size_t>(j)]) continue;
      double slope = 0.0;
      for (const auto& [i, v] : bp.direction) {
        if (i == j) slope = v;
      }
      fresh.emplace_back(j, std::abs(slope));
    }
    std::sort(fresh.begin(), fresh.end(), [](const auto& l, const auto& r) {
      if (l.second != r.second) return l.second > r.second;
      return l.first < r.first;
    });
    for (const auto& [j, slope] : fresh) {
      seen[static_cast<std::size_t>(j)] = 1;
      report.ranking.push_back(j);
      report.activation_lambdas.push_back(bp.lambda);
    }
  }
  return report;
}

OutlierReport select_top_k(OutlierReport report, Index k) {
  if (k < 0) throw ConfigError("outlier count must be non-negative");
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), report.ranking.size());
  report.selected.assign(report.ranking.begin(), report.ranking.begin() + static_cast<std::ptrdiff_t>(take));
  report.rule = SelectionRule::Count;
  report.rule_parameter = static_cast<int>(k);
  report.cv_trace.clear();
  return report;
}

IpodResult ipod_refine(const Preconditioner& pre, const Vector& y, const std::vector<Index>& init_support,
                       int max_iter) {
  const Index n = pre.observations();
  check_length(y, n, "y");
  if (max_iter < 1) throw ConfigError("max_iter must be positive");
  IpodResult result;
  const auto k = init_support.size();
  if (k == 0) return result;
  if (k > static_cast<std::size_t>(n)) throw ConfigError("initial support larger than the dataset");

  std::vector<Index> support(init_support);
  std::sort(support.begin(), support.end());
  // Φβ̂ = H (y − γ), so residuals never need Φ itself.
  const auto residuals = [&](const Vector& gamma) {
    const Vector fitted_target = y - gamma;
    return Vector(y - (fitted_target - pre.residualize(fitted_target)));
  };
  Vector gamma = Vector::Zero(n);
  {
    const Vector r0 = residuals(gamma);
    for (Index i : support) gamma[i] = r0[i];
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  result.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    result.iterations = it;
    const Vector r = residuals(gamma);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index l, Index rr) { return std::abs(r[l]) > std::abs(r[rr]); });
    std::vector<Index> next(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(next.begin(), next.end());
    gamma.setZero();
    for (Index i : next) gamma[i] = r[i];
    const bool same = next == support;
    support = std::move(next);
    if (same) {
      result.converged = true;
      break;
    }
  }
  result.support = std::move(support);
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_path_json(const RegularizationPath& path, std::ostream& out) {
  nlohmann::ordered_json j;
  j["lambda_max"] = path.lambda_max;
  j["n"] = path.n;
  auto bps = nlohmann::ordered_json::array();
  for (const auto& bp : path.breakpoints) {
    nlohmann::ordered_json b;
    b["lambda"] = bp.lambda;
    b["active"] = bp.active;
    b["signs"] = bp.signs;
    auto sparse = nlohmann::ordered_json::array();
    for (const auto& [i, v] : bp.gamma) sparse.push_back({i, v});
    b["gamma_sparse"] = std::move(sparse);
    b["entered"] = bp.entered;
    b["dropped"] = bp.dropped;
    bps.push_back(std::move(b));
  }
  j["breakpoints"] = std::move(bps);
  out << j.dump(1) << '\n';
}

void write_path_csv(const RegularizationPath& path, std::ostream& out,
                    const std::optional<std::vector<bool>>& outlier_mask) {
  out << "lambda,instance,gamma";
  if (outlier_mask) out << ",is_outlier";
  out << '\n';
  for (const auto& bp : path.breakpoints) {
    std::vector<std::pair<Index, double>> rows(bp.gamma.begin(), bp.gamma.end());
    for (Index j : bp.entered) rows.emplace_back(j, 0.0);
    for (Index j : bp.dropped) rows.emplace_back(j, 0.0);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end(),
                           [](const auto& l, const auto& r) { return l.first == r.first; }),
               rows.end());
    for (const auto& [i, v] : rows) {
      out << fmt(bp.lambda) << ',' << i << ',' << fmt(v);
      if (outlier_mask) out << ',' << ((*outlier_mask)[static_cast<std::size_t>(i)] ? 1 : 0);
      out << '\n';
    }
  }
}

double outlier_precision(const std::vector<Index>& detected, const std::vector<bool>& mask) {
  if (detected.empty()) return 0.0;
  std::size_t hits = 0;
  for (Index i : detected) hits += mask.at(static_cast<std::size_t>(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(detected.size());
}

double outlier_recall(const std::vector<Index>& detected, const std::vector<bool>& mask) {
  const auto truth = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (truth == 0) return 0.0;
  std::size_t hits = 0;
  for (Index i : detected) hits += mask.at(static_cast<std::size_t>(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth);
}

}  // namespace rlasso
