#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace rlasso::optim {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int memory = 10;
  double gradient_tolerance = 1e-6;  // on ‖g‖∞ / max(1, ‖x‖∞)
  int max_iterations = 500;
  int max_linesearch = 40;
  double armijo = 1e-4;
  double curvature = 0.9;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed, NonFinite };

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double initial_value = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<double> trace;  // objective after each accepted step, starting with f(x0)
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom).
LbfgsResult minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opts = {});

}  // namespace rlasso::optim
