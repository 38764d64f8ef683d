#include "rlasso/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace rlasso::optim {

namespace {

using Eigen::VectorXd;

struct LinePoint {
  double step;
  double value;
  double slope;  // directional derivative
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), kept
// inside the central part of [a, b]; bisection when the cubic is degenerate.
double interpolate(const LinePoint& lo, const LinePoint& hi) {
  const double a = lo.step;
  const double b = hi.step;
  const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
  const double disc = d1 * d1 - lo.slope * hi.slope;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = hi.slope - lo.slope + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (hi.slope + d2 - d1) / denom;
  }
  const double left = std::min(a, b);
  const double right = std::max(a, b);
  const double margin = 0.1 * (right - left);
  if (!std::isfinite(t) || t < left + margin || t > right - margin) t = 0.5 * (a + b);
  return t;
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const VectorXd& x, const VectorXd& dir, double f0, double g0,
             const LbfgsOptions& opts)
      : f_(f), x_(x), dir_(dir), f0_(f0), g0_(g0), opts_(opts) {}

  // Returns true on a step satisfying the strong Wolfe conditions.
  bool run(double initial_step, VectorXd& x_out, VectorXd& g_out, double& f_out) {
    LinePoint prev{0.0, f0_, g0_};
    double step = initial_step;
    for (int i = 0; i < opts_.max_linesearch; ++i) {
      const LinePoint cur = eval(step);
      if (!std::isfinite(cur.value)) {
        step *= 0.5;
        continue;
      }
      if (cur.value > f0_ + opts_.armijo * step * g0_ || (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, x_out, g_out, f_out);
      }
      if (std::abs(cur.slope) <= -opts_.curvature * g0_) return accept(x_out, g_out, f_out);
      if (cur.slope >= 0.0) return zoom(cur, prev, x_out, g_out, f_out);
      prev = cur;
      step *= 2.0;
    }
    return best_effort(x_out, g_out, f_out);
  }

 private:
  LinePoint eval(double step) {
    last_x_ = x_ + step * dir_;
    last_g_.resize(x_.size());
    last_f_ = f_(last_x_, last_g_);
    const LinePoint p{step, last_f_, last_g_.dot(dir_)};
    if (std::isfinite(last_f_) && last_f_ < best_f_) {
      best_f_ = last_f_;
      best_x_ = last_x_;
      best_g_ = last_g_;
    }
    return p;
  }

  bool accept(VectorXd& x_out, VectorXd& g_out, double& f_out) {
    x_out = last_x_;
    g_out = last_g_;
    f_out = last_f_;
    return true;
  }

  bool best_effort(VectorXd& x_out, VectorXd& g_out, double& f_out) {
    if (best_f_ < f0_) {
      x_out = best_x_;
      g_out = best_g_;
      f_out = best_f_;
      return true;
    }
    return false;
  }

  bool zoom(LinePoint lo, LinePoint hi, VectorXd& x_out, VectorXd& g_out, double& f_out) {
    for (int i = 0; i < opts_.max_linesearch; ++i) {
      const double step = interpolate(lo, hi);
      const LinePoint cur = eval(step);
      if (!std::isfinite(cur.value) || cur.value > f0_ + opts_.armijo * step * g0_ || cur.value >= lo.value) {
        hi = cur;
        if (!std::isfinite(hi.value)) hi.value = std::numeric_limits<double>::max();
      } else {
        if (std::abs(cur.slope) <= -opts_.curvature * g0_) return accept(x_out, g_out, f_out);
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = cur;
      }
      if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
    }
    return best_effort(x_out, g_out, f_out);
  }

  const Objective& f_;
  const VectorXd& x_;
  const VectorXd& dir_;
  double f0_;
  double g0_;
  const LbfgsOptions& opts_;
  VectorXd last_x_, last_g_;
  double last_f_ = 0.0;
  double best_f_ = std::numeric_limits<double>::infinity();
  VectorXd best_x_, best_g_;
};

}  // namespace

LbfgsResult minimize(const Objective& f, VectorXd x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  VectorXd g(x0.size());
  double fx = f(x0, g);
  res.initial_value = fx;
  res.trace.push_back(fx);
  res.x = x0;
  res.value = fx;
  if (!std::isfinite(fx) || !g.allFinite()) {
    res.status = LbfgsStatus::NonFinite;
    return res;
  }

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  VectorXd x = std::move(x0);
  const auto converged = [&](const VectorXd& grad, const VectorXd& at) {
    const double scale = std::max(1.0, at.cwiseAbs().maxCoeff());
    return grad.cwiseAbs().maxCoeff() / scale <= opts.gradient_tolerance;
  };

  if (converged(g, x)) {
    res.status = LbfgsStatus::Converged;
    return res;
  }

  std::vector<double> alpha(static_cast<std::size_t>(opts.memory));
  for (int it = 1; it <= opts.max_iterations; ++it) {
    // Two-loop recursion for d = −H g.
    VectorXd q = g;
    const auto m = s_hist.size();
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    const double step0 = m == 0 ? std::min(1.0, 1.0 / g.cwiseAbs().maxCoeff()) : 1.0;

    VectorXd x_new, g_new;
    double f_new = fx;
    LineSearch ls(f, x, dir, fx, slope, opts);
    if (!ls.run(step0, x_new, g_new, f_new)) {
      res.status = LbfgsStatus::LineSearchFailed;
      res.iterations = it - 1;
      break;
    }
    if (!std::isfinite(f_new) || !g_new.allFinite()) {
      res.status = LbfgsStatus::NonFinite;
      res.iterations = it;
      break;
    }

    VectorXd s = x_new - x;
    VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x = std::move(x_new);
    g = std::move(g_new);
    fx = f_new;
    res.trace.push_back(fx);
    res.iterations = it;
    if (converged(g, x)) {
      res.status = LbfgsStatus::Converged;
      break;
    }
    if (it == opts.max_iterations) res.status = LbfgsStatus::MaxIterations;
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace rlasso::optim
