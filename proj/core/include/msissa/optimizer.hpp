#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

namespace msissa {

struct BfgsOptions {
  int max_iter = 500;
  double gtol = 1e-6;   // sup-norm of the gradient
  double ftol = 1e-10;  // relative change of the objective
  double max_step = 5.0;  // largest coordinate change per iteration
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Objective returning f(x) and filling the gradient.
using ObjectiveWithGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Quasi-Newton minimization with inverse-Hessian BFGS updates and a
/// backtracking Armijo line search. Non-finite trial values are treated as
/// rejections. Never throws for lack of convergence; see `converged`.
BfgsResult bfgs_minimize(const ObjectiveWithGradient& f, Eigen::VectorXd x0,
                         const BfgsOptions& options = {});

/// Central-difference gradient with h = cbrt(eps) * max(1, |x_j|).
Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x);
/// Five-point stencil gradient, used to cross-check the central one.
Eigen::VectorXd five_point_gradient(const Objective& f, const Eigen::VectorXd& x);
/// Step used by central_gradient for coordinate value x.
double central_step(double x);

}  // namespace msissa
