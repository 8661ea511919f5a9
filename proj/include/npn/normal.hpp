#pragma once

// Scalar standard normal helpers used throughout the likelihood code.

namespace npn {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double norm_cdf(double x);
double norm_pdf(double x);
double norm_logpdf(double x);

/// Quantile of the standard normal. Inputs are clamped to [1e-16, 1 - 1e-16]
/// so the result is always finite.
double norm_quantile(double p);

/// Unclamped quantile: returns -inf / +inf at 0 / 1.
double norm_quantile_exact(double p);

inline constexpr double kQuantileClampLo = 1e-16;
inline constexpr double kQuantileClampHi = 1.0 - 1e-16;

}  // namespace npn
