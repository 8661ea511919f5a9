#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "npn/chol.hpp"
#include "npn/data_model.hpp"
#include "npn/marginals.hpp"
#include "npn/qmc.hpp"

namespace npn {

enum class Flavour { Npn, Smooth, Flow, Mixed };

const char* flavour_name(Flavour f);
Flavour parse_flavour(const std::string& s);

enum class ExecPolicy { Serial, Parallel };

struct ModelSpec {
  Flavour flavour = Flavour::Npn;
  Constraint constraint = Constraint::UnitVariance;
  std::size_t split = 0;              // leading continuous columns for Mixed
  std::vector<std::string> columns;   // model column order; empty = data order
  std::vector<MarginalSpec> margins;  // one per model column
  QmcConfig qmc;
};

/// First `ncols` model columns of a spec (flow and mixed splits are clipped).
ModelSpec restrict_spec(const ModelSpec& spec, std::size_t ncols);

/// Where each parameter group lives in the flat parameter vector:
/// per column [coefficients, beta?, xi?], then the packed lambda block.
struct Layout {
  std::vector<std::size_t> coef_offset;
  std::vector<std::size_t> coef_size;
  std::vector<long> beta_index;  // -1 when the column has no shift
  std::vector<long> xi_index;    // -1 when the column has no scale effect
  std::size_t lambda_offset = 0;
  std::size_t lambda_size = 0;
  std::size_t size = 0;
  std::vector<std::string> names;

  std::size_t index_of(const std::string& name) const;
};

struct NaturalParams {
  std::vector<MarginalParams> margins;
  Eigen::VectorXd lambda;
};

struct EvalStatus {
  std::vector<std::size_t> floored;  // observations whose log term hit the floor
};

inline constexpr double kLogFloor = -700.0;

class Model {
 public:
  Model(ModelSpec spec, const Dataset& data);

  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }
  const Layout& layout() const { return layout_; }
  std::size_t size() const { return layout_.size; }
  std::size_t cols() const { return data_.cols(); }
  /// Number of leading columns entering through their density.
  std::size_t flow_cols() const { return nflow_; }

  Eigen::VectorXd encode(const NaturalParams& p) const;
  NaturalParams decode(const Eigen::VectorXd& natural) const;

  Eigen::VectorXd to_free(const Eigen::VectorXd& natural) const;
  Eigen::VectorXd to_natural(const Eigen::VectorXd& free) const;
  /// g_free = J' g_natural, J the Jacobian of to_natural at `free`.
  Eigen::VectorXd chain_to_free(const Eigen::VectorXd& free, const Eigen::VectorXd& g_natural) const;

  /// Log-likelihood in natural coordinates with optional gradient.
  double loglik(const Eigen::VectorXd& natural, Eigen::VectorXd* grad = nullptr,
                EvalStatus* status = nullptr, ExecPolicy policy = ExecPolicy::Parallel) const;

  /// Same objective in free (unconstrained) coordinates.
  double loglik_free(const Eigen::VectorXd& free, Eigen::VectorXd* grad = nullptr,
                     EvalStatus* status = nullptr, ExecPolicy policy = ExecPolicy::Parallel) const;

  /// Per-observation log-likelihood terms (floored at kLogFloor).
  Eigen::VectorXd observation_logliks(const Eigen::VectorXd& natural) const;

  /// Rough starting point: normal-score margins and lambda = 0.
  NaturalParams default_start() const;

  /// Bundle for the lambda block of a natural parameter vector.
  chol::CholeskyBundle bundle(const Eigen::VectorXd& natural) const;

 private:
  struct Accum;
  struct Ctx;
  Ctx prepare(const Eigen::VectorXd& natural, bool check) const;
  void eval_chunk(std::size_t begin, std::size_t end, const Ctx& ctx, bool want_grad, Accum& acc) const;

  ModelSpec spec_;
  Dataset data_;
  Layout layout_;
  std::size_t nflow_ = 0;
  std::size_t nbox_ = 0;
  std::vector<long> shift_cov_;
  std::vector<long> scale_cov_;
  // Basis rows and derivatives at each grid point (non-step columns).
  std::vector<Eigen::MatrixXd> design_;
  std::vector<Eigen::MatrixXd> ddesign_;
  std::vector<double> points_;  // cached QMC draws, empty when generated on the fly
  std::size_t chunk_ = 16;
};

struct LogLik {
  double value = 0.0;
  Eigen::VectorXd gradient;  // natural coordinates, Model layout
  EvalStatus status;
};

/// Step-margin box likelihood.
LogLik loglik_npn(const std::vector<Eigen::VectorXd>& theta, const LambdaParams& lambda,
                  const Dataset& data, const QmcConfig& qmc = {});

/// Box likelihood with basis-expanded margins.
LogLik loglik_smooth(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                     const LambdaParams& lambda, const Dataset& data, const QmcConfig& qmc = {});

/// Change-of-variables density for fully observed continuous data.
LogLik loglik_flow(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                   const LambdaParams& lambda, const Dataset& data);

/// Density of the first `split` columns times the conditional box probability of the rest.
LogLik loglik_mixed(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                    const LambdaParams& lambda, const Dataset& data, std::size_t split,
                    const QmcConfig& qmc = {});

/// Dispatch on spec.flavour with a natural parameter vector.
LogLik eval(const ModelSpec& spec, const Eigen::VectorXd& natural, const Dataset& data);

}  // namespace npn
