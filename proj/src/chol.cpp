#include "npn/chol.hpp"

#include <cmath>

#include "npn/error.hpp"

namespace npn::chol {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

CholeskyBundle build(const LambdaParams& lambda, std::size_t J) {
  if (static_cast<std::size_t>(lambda.values.size()) != lambda_count(J))
    throw DimensionError("lambda has length " + std::to_string(lambda.values.size()) +
                         ", expected " + std::to_string(lambda_count(J)));
  const Index n = static_cast<Index>(J);
  CholeskyBundle b;
  b.constraint = lambda.constraint;
  b.Lambda = MatrixXd::Identity(n, n);
  for (Index r = 1; r < n; ++r)
    for (Index c = 0; c < r; ++c)
      b.Lambda(r, c) = lambda.values[static_cast<Index>(lambda_index(r, c))];

  // forward substitution, unit diagonal
  b.LambdaInv = MatrixXd::Identity(n, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = c + 1; r < n; ++r) {
      double s = 0.0;
      for (Index k = c; k < r; ++k) s += b.Lambda(r, k) * b.LambdaInv(k, c);
      b.LambdaInv(r, c) = -s;
    }

  b.scale = b.LambdaInv.rowwise().squaredNorm();
  if (b.constraint == Constraint::UnitDiagonal) {
    b.Omega = b.Lambda;
    b.OmegaInv = b.LambdaInv;
  } else {
    const VectorXd root = b.scale.cwiseSqrt();
    b.Omega = b.Lambda * root.asDiagonal();
    b.OmegaInv = root.cwiseInverse().asDiagonal() * b.LambdaInv;
  }
  b.Sigma = b.OmegaInv * b.OmegaInv.transpose();
  return b;
}

namespace {

// dOmega / dlambda_{row,col} as a dense matrix.
MatrixXd domega(const CholeskyBundle& b, Index row, Index col) {
  const Index n = b.Lambda.rows();
  MatrixXd d = MatrixXd::Zero(n, n);
  if (b.constraint == Constraint::UnitDiagonal) {
    d(row, col) = 1.0;
    return d;
  }
  const VectorXd root = b.scale.cwiseSqrt();
  d(row, col) = root[col];
  // dD_k = -2 (LambdaInv)_{k,row} (LambdaInv LambdaInv^T)_{k,col}
  const MatrixXd S = b.LambdaInv * b.LambdaInv.transpose();
  for (Index k = 0; k < n; ++k) {
    const double dD = -2.0 * b.LambdaInv(k, row) * S(k, col);
    if (dD == 0.0) continue;
    const double droot = dD / (2.0 * root[k]);
    for (Index r = k; r < n; ++r) d(r, k) += b.Lambda(r, k) * droot;
  }
  return d;
}

}  // namespace

std::vector<MatrixXd> dsigma_dlambda(const CholeskyBundle& b) {
  const Index n = b.Lambda.rows();
  std::vector<MatrixXd> out;
  out.reserve(lambda_count(static_cast<std::size_t>(n)));
  const MatrixXd& C = b.OmegaInv;
  for (Index r = 1; r < n; ++r)
    for (Index c = 0; c < r; ++c) {
      const MatrixXd dC = -C * domega(b, r, c) * C;
      out.push_back(dC * C.transpose() + C * dC.transpose());
    }
  return out;
}

std::vector<MatrixXd> dlambda_inv_dlambda(const CholeskyBundle& b) {
  const Index n = b.Lambda.rows();
  std::vector<MatrixXd> out;
  for (Index r = 1; r < n; ++r)
    for (Index c = 0; c < r; ++c)
      out.push_back(-b.LambdaInv.col(r) * b.LambdaInv.row(c));
  return out;
}

VectorXd omega_grad_to_lambda(const CholeskyBundle& b, const MatrixXd& G) {
  const Index n = b.Lambda.rows();
  VectorXd g(static_cast<Index>(lambda_count(static_cast<std::size_t>(n))));
  if (b.constraint == Constraint::UnitDiagonal) {
    for (Index r = 1; r < n; ++r)
      for (Index c = 0; c < r; ++c) g[static_cast<Index>(lambda_index(r, c))] = G(r, c);
    return g;
  }
  // Omega = Lambda diag(D)^{1/2}, D = diag(LambdaInv LambdaInv^T).
  const VectorXd root = b.scale.cwiseSqrt();
  const MatrixXd S = b.LambdaInv * b.LambdaInv.transpose();
  VectorXd w(n);
  for (Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Index r = k; r < n; ++r) s += G(r, k) * b.Lambda(r, k);
    w[k] = s / (2.0 * root[k]);
  }
  for (Index r = 1; r < n; ++r)
    for (Index c = 0; c < r; ++c) {
      double v = G(r, c) * root[c];
      for (Index k = 0; k < n; ++k) v -= 2.0 * w[k] * S(k, c) * b.LambdaInv(k, r);
      g[static_cast<Index>(lambda_index(r, c))] = v;
    }
  return g;
}

MatrixXd cholesky_grad_to_omega(const CholeskyBundle& b, const MatrixXd& dC) {
  const MatrixXd& C = b.OmegaInv;
  MatrixXd lower = dC.triangularView<Eigen::Lower>();
  MatrixXd G = -C.transpose() * lower * C.transpose();
  return G.triangularView<Eigen::Lower>();
}

MatrixXd correlation(const CholeskyBundle& b) {
  const VectorXd inv_sd = b.Sigma.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * b.Sigma * inv_sd.asDiagonal();
}

VectorXd dcorrelation_dlambda(const CholeskyBundle& b, std::size_t row, std::size_t col) {
  const auto dS = dsigma_dlambda(b);
  const Index r = static_cast<Index>(row);
  const Index c = static_cast<Index>(col);
  const double srr = b.Sigma(r, r);
  const double scc = b.Sigma(c, c);
  const double src = b.Sigma(r, c);
  const double denom = std::sqrt(srr * scc);
  VectorXd g(static_cast<Index>(dS.size()));
  for (std::size_t m = 0; m < dS.size(); ++m) {
    const MatrixXd& d = dS[m];
    g[static_cast<Index>(m)] =
        d(r, c) / denom - 0.5 * src / denom * (d(r, r) / srr + d(c, c) / scc);
  }
  return g;
}

VectorXd lambda_from_covariance(const MatrixXd& Sigma) {
  const Index n = Sigma.rows();
  Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
  const MatrixXd L = llt.matrixL();
  // LambdaInv = diag(L)^{-1} L, Lambda = L^{-1} diag(L)
  const MatrixXd Linv = L.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
  const MatrixXd Lambda = Linv * L.diagonal().asDiagonal();
  VectorXd out(static_cast<Index>(lambda_count(static_cast<std::size_t>(n))));
  for (Index r = 1; r < n; ++r)
    for (Index c = 0; c < r; ++c) out[static_cast<Index>(lambda_index(r, c))] = Lambda(r, c);
  return out;
}

double rho_from_lambda21(double lambda21) {
  if (!std::isfinite(lambda21)) throw DomainError("lambda21 must be finite");
  return -lambda21 / std::sqrt(1.0 + lambda21 * lambda21);
}

double drho_dlambda21(double lambda21) {
  const double q = 1.0 + lambda21 * lambda21;
  return -1.0 / (q * std::sqrt(q));
}

}  // namespace npn::chol
