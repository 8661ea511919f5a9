#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "npn/data_model.hpp"

namespace npn {

enum class BasisKind { Step, Linear, Bernstein };

/// Link between the basis expansion and the latent scale. Only the probit
/// link (identity on the latent scale) is implemented; the enum is where a
/// composed F_j link would be declared.
enum class Link { Probit };

struct MarginalSpec {
  BasisKind basis = BasisKind::Step;
  int order = 6;     // Bernstein degree; the basis has order + 1 functions
  double lo = 0.0;   // Bernstein support
  double hi = 1.0;
  Link link = Link::Probit;
  std::optional<std::string> shift_covariate;
  std::optional<std::string> scale_covariate;
};

/// Natural (constrained) marginal parameters.
struct MarginalParams {
  Eigen::VectorXd theta;  // basis coefficients
  double beta = 0.0;      // shift
  double xi = 0.0;        // log-scale
};

const char* basis_name(BasisKind b);
BasisKind parse_basis(const std::string& s);

/// Number of basis coefficients; `levels` is K(j), used by the step basis.
std::size_t coef_count(const MarginalSpec& spec, std::size_t levels);

/// Bernstein spec with support equal to the data range widened by 5% per side.
MarginalSpec bernstein_for(const VariableMeta& column, int order = 6);

struct BasisValue {
  Eigen::VectorXd a;
  Eigen::VectorXd da;
};

/// Basis vector and derivative at y. Linear and Bernstein only; the step basis
/// is indexed by grid position rather than evaluated at a value.
BasisValue basis_eval(const MarginalSpec& spec, double y);

struct TransformValue {
  double h = 0.0;
  double dh = 0.0;
};

/// h(y | x) = a(y)' theta exp(xi x) - beta x and its derivative in y.
TransformValue transform(const MarginalParams& p, const MarginalSpec& spec, double y, double x = 0.0);

/// Step-basis maximiser of the marginal empirical likelihood,
/// Phi^{-1}(c_k / N), or Phi^{-1}(c_k / (N + 1)) with normal scores.
/// Returns K - 1 values; the top value is +inf and omitted.
Eigen::VectorXd fit_empirical(const Dataset& data, std::size_t j, bool normal_scores = false);

/// Marginal empirical log-likelihood of column j for step values theta.
double empirical_loglik(const Dataset& data, std::size_t j, const Eigen::VectorXd& theta);

/// Cumulative exponential map onto increasing vectors.
Eigen::VectorXd reparam_monotone(const Eigen::VectorXd& free);
Eigen::MatrixXd reparam_monotone_jacobian(const Eigen::VectorXd& free);
/// Ties map to kTieFree; a decreasing pair throws ConstraintViolation.
Eigen::VectorXd reparam_monotone_inverse(const Eigen::VectorXd& theta);

/// Free value standing in for a zero increment (exp gives the smallest subnormal).
inline constexpr double kTieFree = -745.0;

/// Basis-aware versions: the linear basis only needs a positive slope.
Eigen::VectorXd coef_from_free(const MarginalSpec& spec, const Eigen::VectorXd& free);
Eigen::MatrixXd coef_jacobian(const MarginalSpec& spec, const Eigen::VectorXd& free);
Eigen::VectorXd coef_to_free(const MarginalSpec& spec, const Eigen::VectorXd& theta);

/// True when D theta >= 0 (or slope > 0 for the linear basis).
bool coef_admissible(const MarginalSpec& spec, const Eigen::VectorXd& theta);

}  // namespace npn
