#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "npn/chol.hpp"
#include "npn/data_model.hpp"
#include "npn/qmc.hpp"

namespace npn::mvn {

/// Log-probability of a box together with the exact derivatives of the
/// finite-sample estimator (draws held fixed).
struct MvnScore {
  double value = 0.0;
  Eigen::VectorXd d_lower;
  Eigen::VectorXd d_upper;
  Eigen::MatrixXd d_chol;  // lower triangular, w.r.t. the Cholesky factor C
  bool underflow = false;
};

/// log phi(z | Omega) for lower triangular Omega with positive diagonal.
double log_density(const Eigen::VectorXd& z, const Eigen::MatrixXd& Omega);

/// Reusable buffers for the inner recursion; one per thread.
struct Workspace {
  void reserve(std::size_t dim, std::size_t M);
  std::vector<double> points;
  std::vector<double> y, at, bt, d, e, f, ybar;
  std::vector<char> clamped;
};

/// Raw accumulation of the estimator over the replicates in `w`
/// (row-major M x (dim-1)). Outputs are sums over replicates, not yet
/// normalised: returns sum of the products, gradients are sums of dP.
/// `chol` is row-major dim x dim lower triangular.
double accumulate_box(std::span<const double> lower, std::span<const double> upper,
                      std::span<const double> chol, std::size_t dim, std::span<const double> w,
                      std::size_t M, Workspace& ws, std::span<double> g_lower,
                      std::span<double> g_upper, std::span<double> g_chol);

/// Genz recursion estimate of log P(lower < Z <= upper), Z ~ N(0, C C^T),
/// for lower triangular C with positive diagonal. `stream` picks the
/// deterministic substream of draws.
MvnScore log_prob_box(const LatentBox& box, const Eigen::MatrixXd& C, const QmcConfig& cfg,
                      std::uint64_t stream = 0);

/// Chain rule from the Cholesky-factor score to the packed lambda vector.
Eigen::VectorXd score_to_lambda(const MvnScore& s, const chol::CholeskyBundle& b);

}  // namespace npn::mvn
