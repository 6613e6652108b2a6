#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace vpd::optim {

// Objective: return f(x) and fill grad (same size as x).  Out-of-domain points
// may return +inf; the line search backs away from them and the gradient at
// such points is ignored.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// Called once per accepted iterate (including the starting point).
using Callback =
    std::function<void(int iter, double f, double grad_norm, const Eigen::VectorXd& x)>;

struct Options {
  int max_iterations = 500;
  double gradient_tol = 1e-7;  // max-norm of the gradient at convergence
  int memory = 8;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_line_search = 60;
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;  // gradient tolerance met
  std::string message;
};

Result minimize(const Objective& fn, const Eigen::VectorXd& x0,
                const Options& opt = Options(), const Callback& cb = Callback());

}  // namespace vpd::optim
