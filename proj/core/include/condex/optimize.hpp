#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace condex::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct Result {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
  /// Objective value after each iteration.
  std::vector<double> trace;
};

struct NelderMeadOptions {
  double initial_step = 0.1;
  double tolerance = 1e-10;
  int max_iterations = 5000;
};

/// Derivative-free simplex minimization.
Result nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& options = {});

struct BfgsOptions {
  double gradient_step = 1e-3;
  /// Converged when the objective changes by less than this over an iteration.
  double value_tolerance = 1e-6;
  int max_iterations = 200;
  /// Largest allowed step length (in the unconstrained scale) per iteration.
  double max_step = 1.0;
};

/// Quasi-Newton minimization with central finite-difference gradients and a
/// backtracking line search.
Result bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& options = {});

Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x, double step);
/// Central-difference Hessian; `fx` is f(x) when already known.
Eigen::MatrixXd hessian(const Objective& f, const Eigen::VectorXd& x, double step, double fx);

}  // namespace condex::optim
