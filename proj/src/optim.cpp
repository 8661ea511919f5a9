#include "npn/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "npn/error.hpp"

namespace npn::optim {

using Eigen::VectorXd;

bool gradient_converged(double f, const VectorXd& g, double tol) {
  const double gn = g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff();
  return gn < tol * std::max(1.0, std::abs(f));
}

namespace {

double safe_eval(const Objective& fn, const VectorXd& x, VectorXd& g, std::size_t& count) {
  ++count;
  try {
    const double f = fn(x, g);
    if (!std::isfinite(f) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return f;
  } catch (const npn::Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

Result minimize(const Objective& fn, VectorXd x0, const Options& opts) {
  Result res;
  res.x = std::move(x0);
  const Eigen::Index n = res.x.size();
  res.grad = VectorXd::Zero(n);
  res.f = safe_eval(fn, res.x, res.grad, res.evaluations);
  if (!std::isfinite(res.f)) throw InitError("objective is not finite at the starting point");
  if (n == 0 || gradient_converged(res.f, res.grad, opts.grad_tol)) {
    res.converged = true;
    res.message = "converged";
    return res;
  }

  std::deque<VectorXd> S, Y;
  std::deque<double> RHO;
  VectorXd g_new(n), x_new(n);
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    // two-loop recursion
    VectorXd q = res.grad;
    std::vector<double> alpha(S.size());
    for (std::size_t k = S.size(); k-- > 0;) {
      alpha[k] = RHO[k] * S[k].dot(q);
      q -= alpha[k] * Y[k];
    }
    double gamma = 1.0;
    if (!S.empty()) gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
    VectorXd d = gamma * q;
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = RHO[k] * Y[k].dot(d);
      d += (alpha[k] - beta) * S[k];
    }
    d = -d;
    double slope = res.grad.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      RHO.clear();
      d = -res.grad;
      slope = -res.grad.squaredNorm();
    }
    double step = 1.0;
    if (S.empty()) step = std::min(1.0, 1.0 / res.grad.cwiseAbs().maxCoeff());

    bool accepted = false;
    double f_new = 0.0;
    for (std::size_t bt = 0; bt < opts.max_backtrack; ++bt) {
      x_new = res.x + step * d;
      f_new = safe_eval(fn, x_new, g_new, res.evaluations);
      if (f_new <= res.f + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!S.empty()) {
        // retry once from steepest descent with fresh memory
        S.clear();
        Y.clear();
        RHO.clear();
        continue;
      }
      res.message = "line search failed";
      return res;
    }
    const VectorXd s = x_new - res.x;
    const VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      RHO.push_back(1.0 / sy);
      if (S.size() > opts.memory) {
        S.pop_front();
        Y.pop_front();
        RHO.pop_front();
      }
    }
    if (gradient_converged(res.f, res.grad, opts.grad_tol)) {
      ++res.iterations;
      res.converged = true;
      res.message = "converged";
      return res;
    }
  }
  res.message = "iteration limit reached";
  return res;
}

}  // namespace npn::optim
