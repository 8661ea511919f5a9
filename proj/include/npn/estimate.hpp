#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "npn/data_model.hpp"
#include "npn/likelihood.hpp"

namespace npn {

enum class Strategy { Full, Pseudo, Acs, Sequential };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);

struct RhoEntry {
  std::string row;
  std::string col;
  double rho = 0.0;
  double se = 0.0;
};

struct FitOptions {
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;
  std::size_t acs_rounds = 20;
  double acs_tol = 1e-8;
  bool compute_se = true;
  ExecPolicy policy = ExecPolicy::Parallel;
};

struct FitResult {
  ModelSpec spec;  // with the resolved column order
  std::vector<std::string> names;
  Eigen::VectorXd natural;
  Eigen::VectorXd free;
  double loglik = 0.0;
  double grad_norm = 0.0;  // sup-norm of the free-coordinate gradient
  bool converged = false;
  std::size_t iterations = 0;
  Strategy strategy = Strategy::Full;
  double wall_time = 0.0;

  Eigen::MatrixXd hessian;  // observed information in free coordinates
  Eigen::VectorXd se;       // natural coordinates; NaN when unavailable
  bool se_available = false;
  Eigen::MatrixXd correlation;
  std::vector<RhoEntry> rho_table;

  std::vector<double> trace;  // ACS log-likelihood after each half-step
  std::vector<std::size_t> floored;
  std::string message;

  /// Packed lambda block.
  Eigen::VectorXd lambda() const;
};

/// Simultaneous maximisation. Without `init` the pseudo estimate is used as start.
FitResult fit_full(const ModelSpec& spec, const Dataset& data,
                   const std::optional<Eigen::VectorXd>& init = std::nullopt, const FitOptions& opts = {});

/// Margins first (normal scores or univariate likelihood fits), then the copula.
FitResult fit_pseudo(const ModelSpec& spec, const Dataset& data, const FitOptions& opts = {});

/// Alternating maximisation over the marginal block and the lambda block.
FitResult fit_acs(const ModelSpec& spec, const Dataset& data, const FitOptions& opts = {});

/// Column-by-column fits of (margin j, lambda row j) with earlier columns fixed.
FitResult fit_sequential(const ModelSpec& spec, const Dataset& data, const FitOptions& opts = {});

FitResult fit(Strategy strategy, const ModelSpec& spec, const Dataset& data, const FitOptions& opts = {},
              const std::optional<Eigen::VectorXd>& init = std::nullopt);

/// Observed Hessian by central differences of the analytic gradient,
/// standard errors and delta-method correlation table.
void standard_errors(FitResult& fit, const Model& model, ExecPolicy policy = ExecPolicy::Parallel);

/// Hessian of -f at x by central differences of grad f (f supplied as an objective to maximise).
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& loglik,
                           const Eigen::VectorXd& x, bool parallel = true);

/// Fills correlation and rho_table (SEs from `lambda_cov` when given).
void fill_rho_table(FitResult& fit, const Model& model, const Eigen::MatrixXd* lambda_cov);

/// Margin-only fit of column j as a one-column model. Returns natural parameters.
MarginalParams fit_marginal(const ModelSpec& spec, const Dataset& data, std::size_t j,
                            bool normal_scores, const FitOptions& opts = {});

}  // namespace npn
