#pragma once

// Reference computations for the tests. Nothing here calls into the npn
// library: parameters are turned into matrices from first principles and
// probabilities come from brute-force quadrature or closed forms.

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double Phi_inv(double p) {
  static const boost::math::normal_distribution<double> n01;
  return boost::math::quantile(n01, p);
}

// Unit lower triangular Lambda from row-wise packed lambda (l21, l31, l32, ...).
inline MatrixXd unit_lower(const VectorXd& lam, int J) {
  MatrixXd L = MatrixXd::Identity(J, J);
  int k = 0;
  for (int r = 1; r < J; ++r)
    for (int c = 0; c < r; ++c) L(r, c) = lam[k++];
  return L;
}

// Inverse Cholesky factor Omega for constraint s (1: diag(Omega) = 1,
// 2: diag(Sigma) = 1).
inline MatrixXd omega(const VectorXd& lam, int J, int s) {
  const MatrixXd L = unit_lower(lam, J);
  if (s == 1) return L;
  const MatrixXd Li = L.inverse();
  const VectorXd D = (Li * Li.transpose()).diagonal();
  MatrixXd O = L;
  for (int c = 0; c < J; ++c) O.col(c) *= std::sqrt(D[c]);
  return O;
}

inline MatrixXd sigma(const VectorXd& lam, int J, int s) {
  const MatrixXd Oi = omega(lam, J, s).inverse();
  return Oi * Oi.transpose();
}

// det(Omega) (2 pi)^{-J/2} exp(-|Omega z|^2 / 2)
inline double density(const VectorXd& z, const MatrixXd& O) {
  const int J = static_cast<int>(z.size());
  const VectorXd r = O * z;
  return O.diagonal().prod() * std::pow(2.0 * std::numbers::pi, -0.5 * J) * std::exp(-0.5 * r.squaredNorm());
}

inline std::vector<double> simpson_weights(int n, double h) {
  std::vector<double> w(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) w[static_cast<std::size_t>(k)] = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
  for (auto& v : w) v *= h / 3.0;
  return w;
}

// Composite Simpson integration of the density over a box with n (even)
// panels per axis. Infinite sides are clipped at `clip` marginal standard
// deviations. J = 1, 2 or 3.
inline double box_probability(const VectorXd& lower, const VectorXd& upper, const MatrixXd& O, int n = 200,
                              double clip = 9.0) {
  const int J = static_cast<int>(lower.size());
  const MatrixXd Oi = O.inverse();
  const VectorXd sd = (Oi * Oi.transpose()).diagonal().cwiseSqrt();
  std::vector<double> a(J), h(J);
  std::vector<std::vector<double>> w(J);
  for (int j = 0; j < J; ++j) {
    const double lo = std::isfinite(lower[j]) ? lower[j] : -clip * sd[j];
    const double hi = std::isfinite(upper[j]) ? upper[j] : clip * sd[j];
    a[j] = lo;
    h[j] = (hi - lo) / n;
    w[j] = simpson_weights(n, h[j]);
  }
  double total = 0.0;
  VectorXd z(J);
  if (J == 1) {
    for (int i = 0; i <= n; ++i) {
      z[0] = a[0] + i * h[0];
      total += w[0][i] * density(z, O);
    }
  } else if (J == 2) {
    for (int i = 0; i <= n; ++i)
      for (int k = 0; k <= n; ++k) {
        z << a[0] + i * h[0], a[1] + k * h[1];
        total += w[0][i] * w[1][k] * density(z, O);
      }
  } else {
    // the inner axis is summed with the quadratic form expanded by hand
    const double c = O.diagonal().prod() * std::pow(2.0 * std::numbers::pi, -1.5);
    for (int i = 0; i <= n; ++i)
      for (int k = 0; k <= n; ++k) {
        const double z0 = a[0] + i * h[0], z1 = a[1] + k * h[1];
        const double r0 = O(0, 0) * z0;
        const double r1 = O(1, 0) * z0 + O(1, 1) * z1;
        const double base = O(2, 0) * z0 + O(2, 1) * z1;
        double inner = 0.0;
        for (int m = 0; m <= n; ++m) {
          const double r2 = base + O(2, 2) * (a[2] + m * h[2]);
          inner += w[2][m] * std::exp(-0.5 * r2 * r2);
        }
        total += w[0][i] * w[1][k] * std::exp(-0.5 * (r0 * r0 + r1 * r1)) * inner;
      }
    total *= c;
  }
  return total;
}

// P(Z1 <= 0, Z2 <= 0) for a standard bivariate normal with correlation rho.
inline double orthant(double rho) { return 0.25 + std::asin(rho) / (2.0 * std::numbers::pi); }

// Pearson correlation of two columns.
inline double pearson(const VectorXd& x, const VectorXd& y) {
  const VectorXd a = x.array() - x.mean();
  const VectorXd b = y.array() - y.mean();
  return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

// Phi^{-1}(rank / (N + 1)); assumes no ties.
inline VectorXd normal_scores(const VectorXd& x) {
  const auto N = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](auto p, auto q) { return x[p] < x[q]; });
  VectorXd out(N);
  for (Eigen::Index i = 0; i < N; ++i)
    out[idx[static_cast<std::size_t>(i)]] = Phi_inv(static_cast<double>(i + 1) / static_cast<double>(N + 1));
  return out;
}

// Sample correlation matrix of the columns of Y (the Gaussian MLE).
inline MatrixXd sample_correlation(const MatrixXd& Y) {
  const MatrixXd C = Y.rowwise() - Y.colwise().mean();
  const MatrixXd S = C.transpose() * C / static_cast<double>(Y.rows());
  const VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * S * d.asDiagonal();
}

// Central finite-difference gradient.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-5) {
  VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    VectorXd xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x[k]));
    xp[k] += step;
    xm[k] -= step;
    g[k] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

// Richardson-extrapolated central difference, accurate to O(h^4).
inline VectorXd fd_gradient_richardson(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                       double h = 1e-3) {
  const VectorXd g1 = fd_gradient(f, x, h);
  const VectorXd g2 = fd_gradient(f, x, h / 2.0);
  return (4.0 * g2 - g1) / 3.0;
}

}  // namespace oracle
