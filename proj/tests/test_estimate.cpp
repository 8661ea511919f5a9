#include <gtest/gtest.h>

#include <cmath>

#include "npn/checks.hpp"
#include "npn/error.hpp"
#include "npn/estimate.hpp"
#include "npn/optim.hpp"
#include "oracles.hpp"

using namespace npn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MarginalSpec linear() {
  MarginalSpec s;
  s.basis = BasisKind::Linear;
  return s;
}

ModelSpec flow_spec(std::vector<MarginalSpec> margins, Constraint s = Constraint::UnitVariance) {
  ModelSpec spec;
  spec.flavour = Flavour::Flow;
  spec.constraint = s;
  spec.margins = std::move(margins);
  return spec;
}

ModelSpec bernstein_flow(const Dataset& d, int order = 4) {
  std::vector<MarginalSpec> m;
  for (std::size_t j = 0; j < d.cols(); ++j) m.push_back(bernstein_for(d.column(j), order));
  return flow_spec(m);
}

MatrixXd corr(double r) {
  MatrixXd R(2, 2);
  R << 1, r, r, 1;
  return R;
}

MatrixXd corr3() {
  MatrixXd R(3, 3);
  R << 1.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 1.0;
  return R;
}

// skewed but monotone margins
Dataset skewed(std::size_t N, std::uint64_t seed) {
  MatrixXd Y = checks::gaussian_sample(N, corr3(), seed);
  Y.col(0) = Y.col(0).array().exp();
  Y.col(1) = Y.col(1).array() + 0.3 * Y.col(1).array().cube();
  return checks::continuous_dataset(Y);
}

FitOptions tight(double tol = 1e-10) {
  FitOptions o;
  o.grad_tol = tol;
  o.max_iter = 2000;
  return o;
}

}  // namespace

TEST(Optim, MinimisesQuadraticAndRosenbrock) {
  MatrixXd A(3, 3);
  A << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const VectorXd m = (VectorXd(3) << 1, -2, 0.5).finished();
  auto quad = [&](const VectorXd& x, VectorXd& g) {
    g = A * (x - m);
    return 0.5 * (x - m).dot(A * (x - m));
  };
  optim::Options o;
  o.grad_tol = 1e-12;
  const auto r = optim::minimize(quad, VectorXd::Zero(3), o);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - m).cwiseAbs().maxCoeff(), 1e-10);

  auto rosen = [](const VectorXd& x, VectorXd& g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g << -2 * a - 400 * x[0] * b, 200 * b;
    return a * a + 100 * b * b;
  };
  o.grad_tol = 1e-10;
  o.max_iter = 5000;
  const auto rr = optim::minimize(rosen, (VectorXd(2) << -1.2, 1.0).finished(), o);
  EXPECT_TRUE(rr.converged) << rr.message;
  EXPECT_LT((rr.x - VectorXd::Ones(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Optim, IterationCapIsFlagged) {
  auto rosen = [](const VectorXd& x, VectorXd& g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g << -2 * a - 400 * x[0] * b, 200 * b;
    return a * a + 100 * b * b;
  };
  optim::Options o;
  o.max_iter = 3;
  const auto r = optim::minimize(rosen, (VectorXd(2) << -1.2, 1.0).finished(), o);
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.message.empty());
  EXPECT_TRUE(optim::gradient_converged(1000.0, VectorXd::Constant(2, 9e-4), 1e-6));
  EXPECT_FALSE(optim::gradient_converged(0.5, VectorXd::Constant(2, 2e-6), 1e-6));
}

TEST(Optim, LineSearchTreatsErrorsAsOutsideTheDomain) {
  // minimum of x - log x at 1; the objective throws for x <= 0
  auto f = [](const VectorXd& x, VectorXd& g) {
    if (!(x[0] > 0.0)) throw DomainError("x must be positive");
    g = VectorXd::Constant(1, 1.0 - 1.0 / x[0]);
    return x[0] - std::log(x[0]);
  };
  optim::Options o;
  o.grad_tol = 1e-12;
  const auto r = optim::minimize(f, VectorXd::Constant(1, 0.01), o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
}

TEST(StandardErrors, QuadraticHessianIsExact) {
  MatrixXd A(3, 3);
  A << 5, 1, -1, 1, 2, 0.3, -1, 0.3, 1.5;
  auto ll = [&](const VectorXd& x, VectorXd& g) {
    g = -A * x;
    return -0.5 * x.dot(A * x);
  };
  const VectorXd at = (VectorXd(3) << 0.2, -0.1, 0.4).finished();
  const MatrixXd H = fd_hessian(ll, at, false);
  EXPECT_LT((H - A).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(H.isApprox(H.transpose(), 0.0));
  const VectorXd se = H.inverse().diagonal().cwiseSqrt();
  const VectorXd exact = A.inverse().diagonal().cwiseSqrt();
  EXPECT_LT((se - exact).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(fd_hessian(ll, at, true), H);
}

TEST(Estimate, FlowLinearBivariateRecoversRho) {
  const std::size_t N = 5000;
  const MatrixXd Y = checks::gaussian_sample(N, corr(0.5), 21);
  const Dataset d = checks::continuous_dataset(Y);
  const FitResult f = fit_full(flow_spec({linear(), linear()}), d);
  ASSERT_TRUE(f.converged) << f.message;
  const double rho = f.correlation(1, 0);
  EXPECT_LT(std::abs(rho - 0.5), 3 * (1 - 0.25) / std::sqrt(static_cast<double>(N)));
  EXPECT_TRUE(f.se_available);
  EXPECT_LE(f.grad_norm, 1e-6 * std::max(1.0, std::abs(f.loglik)));
}

TEST(Estimate, FlowMatchesGaussianClosedForm) {
  const MatrixXd Y = checks::gaussian_sample(2000, corr3(), 22);
  const Dataset d = checks::continuous_dataset(Y);
  const FitResult f = fit_full(flow_spec({linear(), linear(), linear()}), d, std::nullopt, tight());
  ASSERT_TRUE(f.converged) << f.message;
  const VectorXd expect = chol::lambda_from_covariance(oracle::sample_correlation(Y));
  EXPECT_LT((f.lambda() - expect).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Estimate, IndependentDataGiveSmallLambda) {
  const MatrixXd Y = checks::gaussian_sample(300, MatrixXd::Identity(2, 2), 23);
  const Dataset d = checks::continuous_dataset(Y);
  const FitResult f = fit_full(flow_spec({linear(), linear()}), d);
  ASSERT_TRUE(f.se_available);
  const std::size_t k = f.natural.size() - 1;
  EXPECT_LT(std::abs(f.natural[static_cast<Eigen::Index>(k)]), 3 * f.se[static_cast<Eigen::Index>(k)]);
}

TEST(Estimate, PseudoBivariateIsNormalScoreCorrelation) {
  const MatrixXd Y = checks::gaussian_sample(400, corr(-0.4), 24);
  const Dataset d = checks::continuous_dataset(Y);
  ModelSpec spec;
  spec.flavour = Flavour::Npn;
  spec.margins.assign(2, MarginalSpec{});
  FitOptions o;
  o.compute_se = false;  // 800 step parameters
  const FitResult f = fit_pseudo(spec, d, o);
  const double r = oracle::pearson(oracle::normal_scores(Y.col(0)), oracle::normal_scores(Y.col(1)));
  EXPECT_NEAR(chol::rho_from_lambda21(f.lambda()[0]), r, 1e-8);
}

TEST(Estimate, PseudoSingleColumnIsTheMarginalFit) {
  const MatrixXd Y = checks::gaussian_sample(50, MatrixXd::Identity(1, 1), 25);
  const Dataset d = checks::continuous_dataset(Y);
  ModelSpec spec;
  spec.flavour = Flavour::Npn;
  spec.margins.assign(1, MarginalSpec{});
  const FitResult f = fit_pseudo(spec, d);
  EXPECT_EQ(f.lambda().size(), 0);
  EXPECT_TRUE(f.natural.isApprox(fit_empirical(d, 0, true), 1e-12));
}

TEST(Estimate, SequentialSecondStepIsLinearRegression) {
  const std::size_t N = 300;
  const MatrixXd Y = checks::gaussian_sample(N, corr(0.6), 26);
  const Dataset d = checks::continuous_dataset(Y * 1.7 + MatrixXd::Constant(N, 2, 0.4));
  for (Constraint s : {Constraint::UnitDiagonal, Constraint::UnitVariance}) {
    const FitResult f = fit_sequential(flow_spec({linear(), linear()}, s), d, tight());
    ASSERT_TRUE(f.converged) << f.message;
    // step 1: standardisation with the maximum likelihood scale
    VectorXd y1(N), y2(N);
    for (std::size_t i = 0; i < N; ++i) {
      y1[static_cast<Eigen::Index>(i)] = d.at(i, 0).lower;
      y2[static_cast<Eigen::Index>(i)] = d.at(i, 1).lower;
    }
    const double m1 = y1.mean();
    const double sd1 = std::sqrt((y1.array() - m1).square().mean());
    EXPECT_NEAR(f.natural[1], 1.0 / sd1, 1e-6);
    EXPECT_NEAR(f.natural[0], -m1 / sd1, 1e-6);
    const VectorXd z1 = (y1.array() - m1) / sd1;
    // step 2: least squares of y2 on (1, z1)
    MatrixXd X(N, 2);
    X.col(0).setOnes();
    X.col(1) = z1;
    const VectorXd c = X.colPivHouseholderQr().solve(y2);
    const double sigma = std::sqrt((y2 - X * c).squaredNorm() / static_cast<double>(N));
    const double lam = -c[1] / sigma;
    const double omega22 = s == Constraint::UnitDiagonal ? 1.0 : std::sqrt(1.0 + lam * lam);
    EXPECT_NEAR(f.natural[4], lam, 1e-6);
    EXPECT_NEAR(f.natural[3] * omega22, 1.0 / sigma, 1e-6);
    EXPECT_NEAR(f.natural[2] * omega22, -c[0] / sigma, 1e-6);
  }
}

TEST(Estimate, AcsTraceIsMonotone) {
  const Dataset d = skewed(150, 27);
  const FitResult f = fit_acs(bernstein_flow(d), d);
  ASSERT_GE(f.trace.size(), 3u);
  for (std::size_t k = 1; k < f.trace.size(); ++k) EXPECT_GE(f.trace[k], f.trace[k - 1] - 1e-10);
  EXPECT_EQ(f.trace.back(), f.loglik);
}

TEST(Estimate, FullDominatesTheApproximations) {
  const Dataset d = skewed(150, 28);
  const ModelSpec spec = bernstein_flow(d);
  FitOptions o;
  o.compute_se = false;
  const FitResult full = fit_full(spec, d, std::nullopt, o);
  ASSERT_TRUE(full.converged) << full.message;
  for (Strategy s : {Strategy::Pseudo, Strategy::Acs, Strategy::Sequential}) {
    const FitResult a = fit(s, spec, d, o);
    EXPECT_GE(full.loglik, a.loglik - 1e-6) << strategy_name(s);
  }
}

TEST(Estimate, FitsAreDeterministic) {
  const Dataset d = skewed(80, 29);
  ModelSpec spec = bernstein_flow(d);
  spec.flavour = Flavour::Smooth;
  spec.qmc.M = 200;
  const FitResult a = fit_full(spec, d);
  const FitResult b = fit_full(spec, d);
  EXPECT_EQ(a.natural, b.natural);
  EXPECT_EQ(a.loglik, b.loglik);
  EXPECT_EQ(a.se.size(), b.se.size());
  for (Eigen::Index k = 0; k < a.se.size(); ++k) {
    if (std::isnan(a.se[k])) EXPECT_TRUE(std::isnan(b.se[k]));
    else EXPECT_EQ(a.se[k], b.se[k]);
  }
}

TEST(Estimate, RhoTableUsesTheDeltaMethod) {
  const MatrixXd Y = checks::gaussian_sample(500, corr3(), 30);
  const Dataset d = checks::continuous_dataset(Y);
  const FitResult f = fit_full(flow_spec({linear(), linear(), linear()}), d);
  ASSERT_TRUE(f.se_available);
  ASSERT_EQ(f.rho_table.size(), 3u);
  // the first pair depends on lambda21 alone
  const std::size_t k = static_cast<std::size_t>(f.natural.size()) - 3;
  const double l21 = f.natural[static_cast<Eigen::Index>(k)];
  EXPECT_NEAR(f.rho_table[0].rho, chol::rho_from_lambda21(l21), 1e-12);
  EXPECT_NEAR(f.rho_table[0].se, std::abs(chol::drho_dlambda21(l21)) * f.se[static_cast<Eigen::Index>(k)], 1e-10);
  EXPECT_TRUE(f.hessian.isApprox(f.hessian.transpose(), 0.0));
  for (const auto& e : f.rho_table) EXPECT_GT(e.se, 0.0);
}

TEST(Estimate, BadInitIsInitError) {
  const Dataset d = skewed(30, 31);
  EXPECT_THROW(fit_full(bernstein_flow(d), d, VectorXd::Zero(3)), InitError);
}
