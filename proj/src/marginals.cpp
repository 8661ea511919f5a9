#include "npn/marginals.hpp"

#include <algorithm>
#include <cmath>

#include "npn/error.hpp"
#include "npn/normal.hpp"

namespace npn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* basis_name(BasisKind b) {
  switch (b) {
    case BasisKind::Step: return "step";
    case BasisKind::Linear: return "linear";
    case BasisKind::Bernstein: return "bernstein";
  }
  return "?";
}

BasisKind parse_basis(const std::string& s) {
  if (s == "step") return BasisKind::Step;
  if (s == "linear") return BasisKind::Linear;
  if (s == "bernstein") return BasisKind::Bernstein;
  throw SchemaError("unknown basis '" + s + "'");
}

std::size_t coef_count(const MarginalSpec& spec, std::size_t levels) {
  switch (spec.basis) {
    case BasisKind::Step: return levels - 1;
    case BasisKind::Linear: return 2;
    case BasisKind::Bernstein: return static_cast<std::size_t>(spec.order) + 1;
  }
  return 0;
}

MarginalSpec bernstein_for(const VariableMeta& column, int order) {
  if (column.grid.empty()) throw SchemaError("column '" + column.name + "' has no finite values");
  MarginalSpec s;
  s.basis = BasisKind::Bernstein;
  s.order = order;
  const double lo = column.grid.front();
  const double hi = column.grid.back();
  double pad = 0.05 * (hi - lo);
  if (pad <= 0.0) pad = 0.05 * std::max(1.0, std::abs(lo));
  s.lo = lo - pad;
  s.hi = hi + pad;
  return s;
}

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Bernstein polynomials of degree n at t in [0, 1].
void bernstein(int n, double t, VectorXd& a, VectorXd& da, double inv_width) {
  a.resize(n + 1);
  da.resize(n + 1);
  for (int k = 0; k <= n; ++k) a[k] = binom(n, k) * std::pow(t, k) * std::pow(1.0 - t, n - k);
  if (n == 0) {
    da.setZero();
    return;
  }
  // derivative: n (B_{k-1,n-1} - B_{k,n-1})
  VectorXd low(n);
  for (int k = 0; k < n; ++k) low[k] = binom(n - 1, k) * std::pow(t, k) * std::pow(1.0 - t, n - 1 - k);
  for (int k = 0; k <= n; ++k) {
    double v = 0.0;
    if (k > 0) v += low[k - 1];
    if (k < n) v -= low[k];
    da[k] = n * v * inv_width;
  }
}

}  // namespace

BasisValue basis_eval(const MarginalSpec& spec, double y) {
  BasisValue out;
  switch (spec.basis) {
    case BasisKind::Linear:
      out.a = VectorXd(2);
      out.a << 1.0, y;
      out.da = VectorXd(2);
      out.da << 0.0, 1.0;
      return out;
    case BasisKind::Bernstein: {
      if (!(spec.hi > spec.lo)) throw DomainError("Bernstein support needs lo < hi");
      const double w = spec.hi - spec.lo;
      const double t = (y - spec.lo) / w;
      if (t < 0.0 || t > 1.0) {
        // linear continuation from the nearer boundary
        const double tb = t < 0.0 ? 0.0 : 1.0;
        bernstein(spec.order, tb, out.a, out.da, 1.0 / w);
        out.a += (y - (spec.lo + tb * w)) * out.da;
        return out;
      }
      bernstein(spec.order, t, out.a, out.da, 1.0 / w);
      return out;
    }
    case BasisKind::Step: break;
  }
  throw DomainError("step basis has no value-based evaluation");
}

TransformValue transform(const MarginalParams& p, const MarginalSpec& spec, double y, double x) {
  const BasisValue b = basis_eval(spec, y);
  if (b.a.size() != p.theta.size()) throw DimensionError("coefficient length does not match basis");
  const double s = std::exp(p.xi * x);
  TransformValue t;
  t.h = b.a.dot(p.theta) * s - p.beta * x;
  t.dh = b.da.dot(p.theta) * s;
  if (t.dh < 0.0) throw ConstraintViolation("negative derivative of the transformation");
  return t;
}

VectorXd fit_empirical(const Dataset& data, std::size_t j, bool normal_scores) {
  const VariableMeta& col = data.column(j);
  if (col.levels() < 2) throw SchemaError("column '" + col.name + "' has a single value");
  if (!data.column_exact(j))
    throw UnsupportedFlavour("column '" + col.name +
                             "' is not fully observed; use likelihood-based marginal fitting");
  const std::vector<std::size_t> c = cumulative_counts(data, j);
  const double denom = static_cast<double>(data.rows()) + (normal_scores ? 1.0 : 0.0);
  VectorXd theta(static_cast<Eigen::Index>(col.levels() - 1));
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    theta[k] = norm_quantile_exact(static_cast<double>(c[static_cast<std::size_t>(k)]) / denom);
  return theta;
}

double empirical_loglik(const Dataset& data, std::size_t j, const VectorXd& theta) {
  const std::size_t K = data.column(j).levels();
  if (static_cast<std::size_t>(theta.size()) != K - 1) throw DimensionError("theta length must be K - 1");
  auto side = [&](int idx) {
    if (idx <= 0) return -kInf;
    if (static_cast<std::size_t>(idx) >= K) return kInf;
    return theta[idx - 1];
  };
  double ll = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const CellBox& b = data.box(i, j);
    ll += std::log(norm_cdf(side(b.upper)) - norm_cdf(side(b.lower)));
  }
  return ll;
}

VectorXd reparam_monotone(const VectorXd& free) {
  VectorXd t(free.size());
  for (Eigen::Index k = 0; k < free.size(); ++k) t[k] = k == 0 ? free[0] : t[k - 1] + std::exp(free[k]);
  return t;
}

MatrixXd reparam_monotone_jacobian(const VectorXd& free) {
  const Eigen::Index n = free.size();
  MatrixXd J = MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = k == 0 ? 1.0 : std::exp(free[k]);
    for (Eigen::Index r = k; r < n; ++r) J(r, k) = d;
  }
  return J;
}

VectorXd reparam_monotone_inverse(const VectorXd& theta) {
  VectorXd f(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (k == 0) {
      f[0] = theta[0];
      continue;
    }
    const double d = theta[k] - theta[k - 1];
    if (!(d >= 0.0)) throw ConstraintViolation("coefficients must be nondecreasing");
    f[k] = d > 0.0 ? std::max(std::log(d), kTieFree) : kTieFree;
  }
  return f;
}

VectorXd coef_from_free(const MarginalSpec& spec, const VectorXd& free) {
  if (spec.basis == BasisKind::Linear) {
    VectorXd t(2);
    t << free[0], std::exp(free[1]);
    return t;
  }
  return reparam_monotone(free);
}

MatrixXd coef_jacobian(const MarginalSpec& spec, const VectorXd& free) {
  if (spec.basis == BasisKind::Linear) {
    MatrixXd J = MatrixXd::Zero(2, 2);
    J(0, 0) = 1.0;
    J(1, 1) = std::exp(free[1]);
    return J;
  }
  return reparam_monotone_jacobian(free);
}

VectorXd coef_to_free(const MarginalSpec& spec, const VectorXd& theta) {
  if (spec.basis == BasisKind::Linear) {
    if (!(theta[1] > 0.0)) throw ConstraintViolation("linear basis slope must be positive");
    VectorXd f(2);
    f << theta[0], std::log(theta[1]);
    return f;
  }
  return reparam_monotone_inverse(theta);
}

bool coef_admissible(const MarginalSpec& spec, const VectorXd& theta) {
  if (spec.basis == BasisKind::Linear) return theta.size() == 2 && theta[1] > 0.0;
  for (Eigen::Index k = 1; k < theta.size(); ++k)
    if (!(theta[k] >= theta[k - 1])) return false;
  return theta.allFinite();
}

}  // namespace npn
