#include "npn/normal.hpp"

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>

namespace npn {
namespace {

using QuietPolicy = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>,
    boost::math::policies::promote_double<false>>;

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_logpdf(double x) { return -kLogSqrt2Pi - 0.5 * x * x; }

double norm_quantile_exact(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p, QuietPolicy());
}

double norm_quantile(double p) {
  if (p < kQuantileClampLo) p = kQuantileClampLo;
  if (p > kQuantileClampHi) p = kQuantileClampHi;
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p, QuietPolicy());
}

}  // namespace npn
