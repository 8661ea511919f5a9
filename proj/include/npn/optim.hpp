#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <string>

namespace npn::optim {

/// Returns f(x) and writes the gradient. Non-finite values or thrown npn::Error
/// are treated as "outside the domain" by the line search.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct Options {
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;  // sup|g| < grad_tol * max(1, |f|)
  std::size_t memory = 100;
  double armijo = 1e-4;
  std::size_t max_backtrack = 50;
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Limited-memory BFGS minimisation with backtracking Armijo line search.
Result minimize(const Objective& fn, Eigen::VectorXd x0, const Options& opts = {});

/// True when the gradient meets the relative sup-norm tolerance.
bool gradient_converged(double f, const Eigen::VectorXd& g, double tol);

}  // namespace npn::optim
