#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace npn {

/// Identifiability constraint. UnitDiagonal fixes diag(Omega) = 1,
/// UnitVariance fixes diag(Sigma) = 1.
enum class Constraint { UnitDiagonal = 1, UnitVariance = 2 };

/// Free copula parameters, ordered (l21, l31, l32, ..., lJ,J-1).
struct LambdaParams {
  Eigen::VectorXd values;
  Constraint constraint = Constraint::UnitVariance;
};

namespace chol {

inline std::size_t lambda_count(std::size_t J) { return J * (J - 1) / 2; }

/// Position of lambda_{row,col} (0-based, row > col) in the packed vector.
inline std::size_t lambda_index(std::size_t row, std::size_t col) {
  return row * (row - 1) / 2 + col;
}

struct CholeskyBundle {
  Constraint constraint = Constraint::UnitVariance;
  Eigen::MatrixXd Lambda;      // unit lower triangular
  Eigen::MatrixXd LambdaInv;   // unit lower triangular
  Eigen::VectorXd scale;       // diag(LambdaInv LambdaInv^T)
  Eigen::MatrixXd Omega;       // inverse Cholesky factor of Sigma
  Eigen::MatrixXd OmegaInv;    // Cholesky factor of Sigma
  Eigen::MatrixXd Sigma;

  std::size_t dim() const { return static_cast<std::size_t>(Lambda.rows()); }
};

CholeskyBundle build(const LambdaParams& lambda, std::size_t J);

/// dSigma / dlambda_m for every packed index m.
std::vector<Eigen::MatrixXd> dsigma_dlambda(const CholeskyBundle& b);

/// d(Lambda^{-1}) / dlambda_m for every packed index m.
std::vector<Eigen::MatrixXd> dlambda_inv_dlambda(const CholeskyBundle& b);

/// Chain rule from a gradient with respect to the (lower triangular) entries
/// of Omega to the packed lambda vector. Diagonal entries of G are ignored
/// under UnitDiagonal, where diag(Omega) is fixed.
Eigen::VectorXd omega_grad_to_lambda(const CholeskyBundle& b, const Eigen::MatrixXd& dOmega);

/// Maps a gradient w.r.t. C = Omega^{-1} to one w.r.t. Omega using
/// dC = -C dOmega C. Only lower triangular entries are meaningful.
Eigen::MatrixXd cholesky_grad_to_omega(const CholeskyBundle& b, const Eigen::MatrixXd& dC);

/// Latent correlation matrix (Sigma standardised to unit diagonal).
Eigen::MatrixXd correlation(const CholeskyBundle& b);

/// Gradient of correlation entry (row, col) with respect to packed lambda.
Eigen::VectorXd dcorrelation_dlambda(const CholeskyBundle& b, std::size_t row, std::size_t col);

/// Recovers lambda from a correlation (or covariance) matrix via its
/// inverse Cholesky factor. Valid for both constraints up to marginal scaling.
Eigen::VectorXd lambda_from_covariance(const Eigen::MatrixXd& Sigma);

double rho_from_lambda21(double lambda21);
double drho_dlambda21(double lambda21);

}  // namespace chol
}  // namespace npn
