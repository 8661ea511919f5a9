#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "npn/data_model.hpp"

namespace npn::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// f(x, grad) returns the value and, when grad is non-null, writes the gradient.
using GradFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

/// Central finite differences against the analytic gradient. A coordinate
/// fails when |analytic - fd| > rel_tol * max(|fd|, |analytic|, floor);
/// the worst coordinate is named in the detail string.
CheckResult fd_gradient_check(const std::string& name, const GradFn& f, const Eigen::VectorXd& x,
                              const std::vector<std::string>& names, double rel_tol, double step = 1e-5,
                              double floor = 1e-3);

/// Second differences of f along segments [a_k, b_k] at t = 0, 1/2, 1;
/// passes when every 2 f(mid) <= f(a) + f(b) + tol (convexity of f).
CheckResult convexity_segments(const std::string& name, const std::function<double(const Eigen::VectorXd&)>& f,
                               const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& segments,
                               double tol = 1e-8);

/// N draws from N(0, R), R a correlation matrix, returned as an N x J matrix.
Eigen::MatrixXd gaussian_sample(std::size_t N, const Eigen::MatrixXd& R, std::uint64_t seed);

/// Continuous dataset with columns y1..yJ from a sample matrix.
Dataset continuous_dataset(const Eigen::MatrixXd& Y);

/// Integral of the N(0, C C') density over a box by composite Simpson rules,
/// infinite sides clipped at 8 standard deviations. J = 1 or 2.
double grid_box_probability(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::MatrixXd& C,
                            double step);

/// The registered verification battery.
std::vector<CheckResult> run_battery();

void print(std::ostream& out, const CheckResult& r);

}  // namespace npn::checks
