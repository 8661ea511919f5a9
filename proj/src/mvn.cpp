#include "npn/mvn.hpp"

#include <algorithm>
#include <cmath>

#include "npn/error.hpp"
#include "npn/normal.hpp"

namespace npn::mvn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double log_density(const VectorXd& z, const MatrixXd& Omega) {
  const Index J = z.size();
  if (Omega.rows() != J || Omega.cols() != J) throw DimensionError("Omega must be J x J");
  double logdet = 0.0;
  for (Index j = 0; j < J; ++j) {
    if (!(Omega(j, j) > 0.0)) throw DomainError("Omega needs a positive diagonal");
    logdet += std::log(Omega(j, j));
  }
  const VectorXd r = Omega.triangularView<Eigen::Lower>() * z;
  return -static_cast<double>(J) * kLogSqrt2Pi + logdet - 0.5 * r.squaredNorm();
}

void Workspace::reserve(std::size_t dim, std::size_t M) {
  y.resize(dim);
  at.resize(dim);
  bt.resize(dim);
  d.resize(dim);
  e.resize(dim);
  f.resize(dim);
  ybar.resize(dim);
  clamped.resize(dim);
  points.resize(M * (dim > 0 ? dim - 1 : 0));
}

struct Kernel {
  // Two dimensions: one draw per replicate, everything kept in registers.
  static double run2(std::span<const double> lower, std::span<const double> upper,
                     std::span<const double> C, std::span<const double> w, std::size_t M,
                     std::span<double> gl, std::span<double> gu, std::span<double> gc, double at0,
                     double bt0, double d0, double e0, double pa0, double pb0) {
    const double f0 = std::max(e0 - d0, 0.0);
    if (!(f0 > 0.0)) return 0.0;
    const double c00 = C[0], c10 = C[2], c11 = C[3];
    const double l1 = lower[1], u1 = upper[1];
    const bool lfin = std::isfinite(l1), ufin = std::isfinite(u1);
    double total = 0.0;
    double s_f1 = 0.0, s_ubar_lo = 0.0, s_ubar_hi = 0.0;  // level-0 adjoints
    double g_l1 = 0.0, g_u1 = 0.0, g_c11 = 0.0, g_c10 = 0.0;
    for (std::size_t n = 0; n < M; ++n) {
      const double wn = w[n];
      const double u = d0 + wn * f0;
      const bool clamped = u < kQuantileClampLo || u > kQuantileClampHi;
      const double y0 = norm_quantile(u);
      const double s = c10 * y0;
      const double a = lfin ? (l1 - s) / c11 : l1;
      const double b = ufin ? (u1 - s) / c11 : u1;
      const double pa = lfin ? norm_pdf(a) : 0.0;
      const double pb = ufin ? norm_pdf(b) : 0.0;
      const double f1 = std::max(norm_cdf(b) - norm_cdf(a), 0.0);
      const double P = f0 * f1;
      total += P;
      if (!(P > 0.0)) continue;
      // second level: fbar = f0
      const double abar = -f0 * pa;
      const double bbar = f0 * pb;
      g_l1 += abar;
      g_u1 += bbar;
      double diag = 0.0;
      if (lfin) diag -= abar * a;
      if (ufin) diag -= bbar * b;
      g_c11 += diag;
      const double sbar = -(abar + bbar) / c11;
      g_c10 += sbar * y0;
      // first level
      s_f1 += f1;
      const double ybar = sbar * c10;
      if (!clamped && ybar != 0.0) {
        const double ubar = ybar / norm_pdf(y0);
        s_ubar_lo += ubar * (1.0 - wn);
        s_ubar_hi += ubar * wn;
      }
    }
    gl[1] += g_l1 / c11;
    gu[1] += g_u1 / c11;
    gc[3] += g_c11 / c11;
    gc[2] += g_c10;
    const double abar0 = (-s_f1 + s_ubar_lo) * pa0;
    const double bbar0 = (s_f1 + s_ubar_hi) * pb0;
    gl[0] += abar0 / c00;
    gu[0] += bbar0 / c00;
    double diag0 = 0.0;
    if (abar0 != 0.0) diag0 -= abar0 * at0;
    if (bbar0 != 0.0) diag0 -= bbar0 * bt0;
    gc[0] += diag0 / c00;
    return total;
  }

  static double run(std::span<const double> lower, std::span<const double> upper,
                    std::span<const double> C, std::size_t J, std::span<const double> w,
                    std::size_t M, Workspace& ws, std::span<double> gl, std::span<double> gu,
                    std::span<double> gc) {
    const std::size_t wd = J - 1;
    double total = 0.0;
    // the first dimension does not depend on the draws
    const double c00 = C[0];
    const double at0 = std::isinf(lower[0]) ? lower[0] : lower[0] / c00;
    const double bt0 = std::isinf(upper[0]) ? upper[0] : upper[0] / c00;
    const double d0 = norm_cdf(at0);
    const double e0 = norm_cdf(bt0);
    const double pa0 = std::isfinite(at0) ? norm_pdf(at0) : 0.0;
    const double pb0 = std::isfinite(bt0) ? norm_pdf(bt0) : 0.0;

    if (J == 1) {
      // no draws enter a one-dimensional box
      const double f = e0 - d0;
      if (!(f > 0.0)) return 0.0;
      const double m = static_cast<double>(M);
      gl[0] -= m * pa0 / c00;
      gu[0] += m * pb0 / c00;
      double diag = 0.0;
      if (pa0 != 0.0) diag += pa0 * at0;
      if (pb0 != 0.0) diag -= pb0 * bt0;
      gc[0] += m * diag / c00;
      return m * f;
    }

    if (J == 2) return run2(lower, upper, C, w, M, gl, gu, gc, at0, bt0, d0, e0, pa0, pb0);

    for (std::size_t n = 0; n < M; ++n) {
      const double* wn = w.data() + n * wd;
      double P = 1.0;
      for (std::size_t j = 0; j < J; ++j) {
        if (j == 0) {
          ws.at[0] = at0;
          ws.bt[0] = bt0;
          ws.d[0] = d0;
          ws.e[0] = e0;
        } else {
          const double* Cj = C.data() + j * J;
          double s = 0.0;
          for (std::size_t k = 0; k < j; ++k) s += Cj[k] * ws.y[k];
          const double cjj = Cj[j];
          const double a = std::isinf(lower[j]) ? lower[j] : (lower[j] - s) / cjj;
          const double b = std::isinf(upper[j]) ? upper[j] : (upper[j] - s) / cjj;
          ws.at[j] = a;
          ws.bt[j] = b;
          ws.d[j] = norm_cdf(a);
          ws.e[j] = norm_cdf(b);
        }
        ws.f[j] = ws.e[j] - ws.d[j];
        if (ws.f[j] < 0.0) ws.f[j] = 0.0;
        P *= ws.f[j];
        if (j + 1 < J) {
          const double u = ws.d[j] + wn[j] * ws.f[j];
          ws.clamped[j] = (u < kQuantileClampLo || u > kQuantileClampHi);
          ws.y[j] = norm_quantile(u);
        }
      }
      total += P;
      if (!(P > 0.0)) continue;

      for (std::size_t j = 0; j < J; ++j) ws.ybar[j] = 0.0;
      for (std::size_t jj = J; jj-- > 0;) {
        const double fbar = P / ws.f[jj];
        double dbar = -fbar;
        double ebar = fbar;
        if (jj + 1 < J && !ws.clamped[jj] && ws.ybar[jj] != 0.0) {
          const double ubar = ws.ybar[jj] / norm_pdf(ws.y[jj]);
          dbar += ubar * (1.0 - wn[jj]);
          ebar += ubar * wn[jj];
        }
        const double a = ws.at[jj];
        const double b = ws.bt[jj];
        double abar = 0.0;
        double bbar = 0.0;
        if (jj == 0) {
          abar = dbar * pa0;
          bbar = ebar * pb0;
        } else {
          if (std::isfinite(a)) abar = dbar * norm_pdf(a);
          if (std::isfinite(b)) bbar = ebar * norm_pdf(b);
        }
        const double* Cj = C.data() + jj * J;
        const double cjj = Cj[jj];
        gl[jj] += abar / cjj;
        gu[jj] += bbar / cjj;
        double diag = 0.0;
        if (abar != 0.0) diag -= abar * a;
        if (bbar != 0.0) diag -= bbar * b;
        gc[jj * J + jj] += diag / cjj;
        const double sbar = -(abar + bbar) / cjj;
        if (sbar != 0.0) {
          for (std::size_t k = 0; k < jj; ++k) {
            gc[jj * J + k] += sbar * ws.y[k];
            ws.ybar[k] += sbar * Cj[k];
          }
        }
      }
    }
    return total;
  }
};

double accumulate_box(std::span<const double> lower, std::span<const double> upper,
                      std::span<const double> chol, std::size_t dim, std::span<const double> w,
                      std::size_t M, Workspace& ws, std::span<double> g_lower,
                      std::span<double> g_upper, std::span<double> g_chol) {
  if (dim == 0) return static_cast<double>(M);
  if (ws.y.size() < dim) ws.reserve(dim, M);
  return Kernel::run(lower, upper, chol, dim, w, M, ws, g_lower, g_upper, g_chol);
}

MvnScore log_prob_box(const LatentBox& box, const MatrixXd& C, const QmcConfig& cfg,
                      std::uint64_t stream) {
  const Index J = box.lower.size();
  if (box.upper.size() != J || C.rows() != J || C.cols() != J)
    throw DimensionError("box and Cholesky factor dimensions disagree");
  for (Index j = 0; j < J; ++j) {
    if (!(box.lower[j] < box.upper[j])) throw DomainError("box sides must satisfy lower < upper");
    if (!(C(j, j) > 0.0)) throw DomainError("Cholesky factor needs a positive diagonal");
  }
  const std::size_t dim = static_cast<std::size_t>(J);
  Workspace ws;
  ws.reserve(dim, cfg.M);
  fill_points(cfg, dim - 1, stream, ws.points);

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor Cr = C.triangularView<Eigen::Lower>();
  std::vector<double> gl(dim, 0.0), gu(dim, 0.0), gc(dim * dim, 0.0);
  const double total =
      accumulate_box({box.lower.data(), dim}, {box.upper.data(), dim}, {Cr.data(), dim * dim}, dim,
                     ws.points, cfg.M, ws, gl, gu, gc);

  MvnScore out;
  out.d_lower = VectorXd::Zero(J);
  out.d_upper = VectorXd::Zero(J);
  out.d_chol = MatrixXd::Zero(J, J);
  const double mean = total / static_cast<double>(cfg.M);
  if (!(mean > 0.0)) {
    out.value = -kInf;
    out.underflow = true;
    return out;
  }
  out.value = std::log(mean);
  out.underflow = mean < 1e-300;
  for (Index j = 0; j < J; ++j) {
    out.d_lower[j] = gl[static_cast<std::size_t>(j)] / total;
    out.d_upper[j] = gu[static_cast<std::size_t>(j)] / total;
    for (Index k = 0; k <= j; ++k)
      out.d_chol(j, k) = gc[static_cast<std::size_t>(j * J + k)] / total;
  }
  return out;
}

VectorXd score_to_lambda(const MvnScore& s, const chol::CholeskyBundle& b) {
  return chol::omega_grad_to_lambda(b, chol::cholesky_grad_to_omega(b, s.d_chol));
}

}  // namespace npn::mvn
