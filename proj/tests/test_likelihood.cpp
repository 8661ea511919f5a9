#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <random>
#include <sstream>

#include "npn/checks.hpp"
#include "npn/error.hpp"
#include "npn/likelihood.hpp"
#include "npn/mvn.hpp"
#include "oracles.hpp"

using namespace npn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset from_text(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return ingest_csv(in, schema);
}

MatrixXd corr3() {
  MatrixXd R(3, 3);
  R << 1.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 1.0;
  return R;
}

// Continuous data rounded to one decimal, so grids have ties and fewer levels.
Dataset rounded_sample(std::size_t N, std::uint64_t seed) {
  MatrixXd Y = checks::gaussian_sample(N, corr3(), seed);
  Y = (Y.array() * 10.0).round() / 10.0;
  return checks::continuous_dataset(Y);
}

MarginalSpec step() { return MarginalSpec{}; }

MarginalSpec linear() {
  MarginalSpec s;
  s.basis = BasisKind::Linear;
  return s;
}

MarginalSpec bern(const Dataset& d, std::size_t j, int order = 4) { return bernstein_for(d.column(j), order); }

QmcConfig qmc(std::size_t M) {
  QmcConfig c;
  c.M = M;
  c.seed = 3;
  return c;
}

ModelSpec make_spec(Flavour f, std::vector<MarginalSpec> margins, Constraint s = Constraint::UnitVariance,
                    std::size_t M = 500) {
  ModelSpec spec;
  spec.flavour = f;
  spec.constraint = s;
  spec.margins = std::move(margins);
  spec.qmc = qmc(M);
  return spec;
}

VectorXd lambda3() { return (VectorXd(3) << -0.5, 0.3, -0.2).finished(); }

// Bernstein coefficients that map the data range onto roughly (-2, 2).
VectorXd ramp(Eigen::Index P) { return VectorXd::LinSpaced(P, -2.5, 2.5); }

VectorXd fd(const Model& m, const VectorXd& x, double h = 1e-5) {
  return oracle::fd_gradient([&](const VectorXd& v) { return m.loglik(v); }, x, h);
}

void expect_gradient_matches(const Model& m, const VectorXd& x, double rel) {
  VectorXd g;
  m.loglik(x, &g);
  const VectorXd f = fd(m, x);
  for (Eigen::Index k = 0; k < x.size(); ++k)
    EXPECT_NEAR(g[k], f[k], rel * std::max(1.0, std::abs(f[k]))) << m.layout().names[static_cast<std::size_t>(k)];
}

}  // namespace

TEST(Likelihood, NpnAtIndependenceIsSumOfMarginals) {
  const Dataset d = rounded_sample(40, 1);
  std::vector<VectorXd> theta;
  double sum = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    theta.push_back(fit_empirical(d, j));
    // move off the maximiser so the check is not special to it
    theta.back() = theta.back() * 0.9 + VectorXd::Constant(theta.back().size(), 0.05);
    sum += empirical_loglik(d, j, theta.back());
  }
  const LogLik ll = loglik_npn(theta, {VectorXd::Zero(3), Constraint::UnitVariance}, d, qmc(200));
  EXPECT_NEAR(ll.value, sum, 1e-6);
}

TEST(Likelihood, BinaryPairMatchesOrthantCellProbabilities) {
  // cell counts (y1, y2): (0,0) x 7, (0,1) x 3, (1,0) x 2, (1,1) x 8
  std::string text = "a,b\n";
  for (int k = 0; k < 7; ++k) text += "0,0\n";
  for (int k = 0; k < 3; ++k) text += "0,1\n";
  for (int k = 0; k < 2; ++k) text += "1,0\n";
  for (int k = 0; k < 8; ++k) text += "1,1\n";
  const Dataset d = from_text(text, {{"a", ColumnRole::Discrete}, {"b", ColumnRole::Discrete}});
  const double l21 = -0.8;
  const double rho = -l21 / std::sqrt(1 + l21 * l21);
  const double p00 = oracle::orthant(rho);
  const double expect = 7 * std::log(p00) + 3 * std::log(0.5 - p00) + 2 * std::log(0.5 - p00) + 8 * std::log(p00);
  const LogLik ll = loglik_npn({VectorXd::Zero(1), VectorXd::Zero(1)}, {VectorXd::Constant(1, l21), Constraint::UnitVariance},
                               d, qmc(20000));
  EXPECT_NEAR(ll.value / expect, 1.0, 1e-3);

  // off-origin thresholds against the quadrature oracle
  const VectorXd t1 = VectorXd::Constant(1, 0.4), t2 = VectorXd::Constant(1, -0.3);
  const MatrixXd O = oracle::omega(VectorXd::Constant(1, l21), 2, 2);
  auto cell = [&](double a1, double b1, double a2, double b2) {
    return oracle::box_probability((VectorXd(2) << a1, a2).finished(), (VectorXd(2) << b1, b2).finished(), O, 400);
  };
  const double ninf = -kInf, pinf = kInf;
  const double q = 7 * std::log(cell(ninf, 0.4, ninf, -0.3)) + 3 * std::log(cell(ninf, 0.4, -0.3, pinf)) +
                   2 * std::log(cell(0.4, pinf, ninf, -0.3)) + 8 * std::log(cell(0.4, pinf, -0.3, pinf));
  const LogLik l2 = loglik_npn({t1, t2}, {VectorXd::Constant(1, l21), Constraint::UnitVariance}, d, qmc(20000));
  EXPECT_NEAR(l2.value / q, 1.0, 1e-3);
}

TEST(Likelihood, NpnGradientMatchesFiniteDifferences) {
  const Dataset d = rounded_sample(25, 2);
  for (Constraint s : {Constraint::UnitDiagonal, Constraint::UnitVariance}) {
    Model m(make_spec(Flavour::Npn, {step(), step(), step()}, s), d);
    NaturalParams p;
    for (std::size_t j = 0; j < 3; ++j) p.margins.push_back({fit_empirical(d, j, true)});
    p.lambda = lambda3();
    expect_gradient_matches(m, m.encode(p), 1e-4);
  }
}

TEST(Likelihood, SmoothWithStepBasisIsNpnBitForBit) {
  const Dataset d = rounded_sample(30, 3);
  std::vector<VectorXd> theta;
  std::vector<MarginalParams> params;
  for (std::size_t j = 0; j < 3; ++j) {
    theta.push_back(fit_empirical(d, j, true));
    params.push_back({theta.back()});
  }
  const LambdaParams lam{lambda3(), Constraint::UnitVariance};
  const LogLik a = loglik_npn(theta, lam, d, qmc(300));
  const LogLik b = loglik_smooth({step(), step(), step()}, params, lam, d, qmc(300));
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.gradient, b.gradient);
}

TEST(Likelihood, BernsteinOrderOneMatchesLinearThetaNpn) {
  const Dataset d = rounded_sample(30, 4);
  std::vector<MarginalSpec> specs;
  std::vector<MarginalParams> params;
  std::vector<VectorXd> theta;
  for (std::size_t j = 0; j < 3; ++j) {
    specs.push_back(bern(d, j, 1));
    params.push_back({(VectorXd(2) << -2.0, 2.0).finished()});
    const auto& g = d.column(j).grid;
    VectorXd t(static_cast<Eigen::Index>(g.size() - 1));
    for (Eigen::Index k = 0; k < t.size(); ++k)
      t[k] = -2.0 + 4.0 * (g[static_cast<std::size_t>(k)] - specs[j].lo) / (specs[j].hi - specs[j].lo);
    theta.push_back(t);
  }
  const LambdaParams lam{lambda3(), Constraint::UnitVariance};
  EXPECT_NEAR(loglik_smooth(specs, params, lam, d, qmc(300)).value, loglik_npn(theta, lam, d, qmc(300)).value, 1e-10);
}

TEST(Likelihood, SmoothGradientMatchesFiniteDifferences) {
  const Dataset d = rounded_sample(25, 5);
  Model m(make_spec(Flavour::Smooth, {bern(d, 0), bern(d, 1), linear()}), d);
  NaturalParams p{{{ramp(5)}, {ramp(5)}, {(VectorXd(2) << 0.1, 0.9).finished()}}, lambda3()};
  expect_gradient_matches(m, m.encode(p), 1e-4);
}

TEST(Likelihood, FlowOneDimensionIsGaussianLocationScale) {
  const MatrixXd Y = checks::gaussian_sample(50, MatrixXd::Identity(1, 1), 6);
  const Dataset d = checks::continuous_dataset(Y * 2.0 + MatrixXd::Constant(50, 1, 1.0));
  const double a = -0.4, b = 0.6;
  const LogLik ll = loglik_flow({linear()}, {{(VectorXd(2) << a, b).finished()}}, {VectorXd(0), Constraint::UnitVariance}, d);
  double expect = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const double z = a + b * d.at(i, 0).lower;
    expect += -0.5 * std::log(2 * std::numbers::pi) - 0.5 * z * z + std::log(b);
  }
  EXPECT_NEAR(ll.value, expect, 1e-10);
}

TEST(Likelihood, FlowGradientMatchesFiniteDifferences) {
  // covariate-dependent margins: shift and scale in x
  MatrixXd Y = checks::gaussian_sample(60, corr3(), 7);
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.5);
  std::vector<ResponseDatum> cells;
  MatrixXd X(60, 1);
  for (Eigen::Index i = 0; i < 60; ++i) {
    X(i, 0) = coin(rng) ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < 3; ++j) cells.push_back(ResponseDatum::exact(Y(i, j) + 0.5 * X(i, 0)));
  }
  const Dataset d({"y1", "y2", "y3"}, std::vector<VariableKind>(3, VariableKind::Continuous), cells, 60, {"x"}, X);
  std::vector<MarginalSpec> specs{bern(d, 0), linear(), bern(d, 2)};
  specs[0].shift_covariate = "x";
  specs[0].scale_covariate = "x";
  specs[2].shift_covariate = "x";
  for (Constraint s : {Constraint::UnitDiagonal, Constraint::UnitVariance}) {
    Model m(make_spec(Flavour::Flow, specs, s), d);
    NaturalParams p{{{ramp(5), 0.3, -0.2}, {(VectorXd(2) << 0.1, 1.1).finished()}, {ramp(5), -0.4, 0.0}}, lambda3()};
    expect_gradient_matches(m, m.encode(p), 1e-6);
  }
}

TEST(Likelihood, MixedWithFullSplitIsFlow) {
  const Dataset d = rounded_sample(30, 8);
  const std::vector<MarginalSpec> specs{bern(d, 0), bern(d, 1), linear()};
  const std::vector<MarginalParams> params{{ramp(5)}, {ramp(5)}, {(VectorXd(2) << 0.0, 1.0).finished()}};
  const LambdaParams lam{lambda3(), Constraint::UnitVariance};
  const LogLik f = loglik_flow(specs, params, lam, d);
  const LogLik m = loglik_mixed(specs, params, lam, d, 3, qmc(100));
  EXPECT_EQ(f.value, m.value);
  EXPECT_EQ(f.gradient, m.gradient);
}

TEST(Likelihood, MixedAtIndependenceFactorises) {
  const Dataset d = rounded_sample(30, 9);
  const std::vector<MarginalSpec> specs{bern(d, 0), step(), step()};
  std::vector<MarginalParams> params{{ramp(5)}, {fit_empirical(d, 1)}, {fit_empirical(d, 2)}};
  const LambdaParams lam{VectorXd::Zero(3), Constraint::UnitVariance};
  const double flow = loglik_flow({specs[0]}, {params[0]}, {VectorXd(0), Constraint::UnitVariance}, d.select({0})).value;
  const double expect = flow + empirical_loglik(d, 1, params[1].theta) + empirical_loglik(d, 2, params[2].theta);
  EXPECT_NEAR(loglik_mixed(specs, params, lam, d, 1, qmc(200)).value, expect, 1e-9);
}

TEST(Likelihood, MixedContributionIsLimitOfShrinkingBox) {
  // y1 continuous with linear margin, y2 binary
  const Dataset d = from_text("y1,y2\n0.7,0\n-0.2,1\n", {{"y1", ColumnRole::Continuous}, {"y2", ColumnRole::Discrete}});
  const double a = 0.2, b = 1.3, t2 = 0.35, l21 = 0.9;
  ModelSpec spec = make_spec(Flavour::Mixed, {linear(), step()}, Constraint::UnitVariance, 100);
  spec.split = 1;
  Model mm(spec, d);
  NaturalParams p{{{(VectorXd(2) << a, b).finished()}, {VectorXd::Constant(1, t2)}}, VectorXd::Constant(1, l21)};
  const VectorXd terms = mm.observation_logliks(mm.encode(p));
  const MatrixXd O = oracle::omega(VectorXd::Constant(1, l21), 2, 2);
  const double delta = 1e-4;
  // observation 1: y1 = 0.7, y2 = 0 -> z2 in (-inf, t2]
  const double y = 0.7;
  const double box1 = oracle::box_probability((VectorXd(2) << a + b * y, -kInf).finished(),
                                              (VectorXd(2) << a + b * (y + delta), t2).finished(), O, 400);
  EXPECT_NEAR(std::exp(terms[0]) / (box1 / delta), 1.0, 1e-3);
  // observation 2: y1 = -0.2, y2 = 1 -> z2 in (t2, inf)
  const double y2 = -0.2;
  const double box2 = oracle::box_probability((VectorXd(2) << a + b * y2, t2).finished(),
                                              (VectorXd(2) << a + b * (y2 + delta), kInf).finished(), O, 400);
  EXPECT_NEAR(std::exp(terms[1]) / (box2 / delta), 1.0, 1e-3);
}

TEST(Likelihood, MixedGradientMatchesFiniteDifferences) {
  const Dataset base = rounded_sample(30, 10);
  // discretise the last two columns
  std::vector<ResponseDatum> cells;
  for (std::size_t i = 0; i < base.rows(); ++i) {
    cells.push_back(base.at(i, 0));
    cells.push_back(ResponseDatum::exact(base.at(i, 1).lower > 0.0 ? 1.0 : 0.0));
    cells.push_back(ResponseDatum::exact(std::floor(std::clamp(base.at(i, 2).lower, -1.5, 1.5))));
  }
  const Dataset d({"c", "b", "o"}, {VariableKind::Continuous, VariableKind::Discrete, VariableKind::Discrete}, cells,
                  base.rows());
  ModelSpec spec = make_spec(Flavour::Mixed, {bern(d, 0), step(), step()});
  spec.split = 1;
  for (Constraint s : {Constraint::UnitDiagonal, Constraint::UnitVariance}) {
    spec.constraint = s;
    Model m(spec, d);
    NaturalParams p{{{ramp(5)}, {fit_empirical(d, 1, true)}, {fit_empirical(d, 2, true)}}, lambda3()};
    expect_gradient_matches(m, m.encode(p), 1e-4);
  }
}

TEST(Likelihood, FlowIsTheLimitOfShrinkingBoxes) {
  const MatrixXd Y = checks::gaussian_sample(3, corr3().topLeftCorner(2, 2), 11);
  const std::vector<MarginalSpec> specs{linear(), linear()};
  const std::vector<MarginalParams> params{{(VectorXd(2) << 0.1, 0.8).finished()}, {(VectorXd(2) << -0.3, 1.4).finished()}};
  const LambdaParams lam{VectorXd::Constant(1, -0.6), Constraint::UnitVariance};
  Model flow(make_spec(Flavour::Flow, specs), checks::continuous_dataset(Y));
  NaturalParams p{params, lam.values};
  const VectorXd target = flow.observation_logliks(flow.encode(p)).array().exp();
  std::vector<double> prev(3, kInf);
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    std::vector<ResponseDatum> cells;
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) cells.push_back(ResponseDatum::interval(Y(i, j) - delta / 2, Y(i, j) + delta / 2));
    const Dataset boxed({"y1", "y2"}, {VariableKind::Continuous, VariableKind::Continuous}, cells, 3);
    Model smooth(make_spec(Flavour::Smooth, specs, Constraint::UnitVariance, 2000), boxed);
    const VectorXd approx = smooth.observation_logliks(smooth.encode(p)).array().exp() / (delta * delta);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double err = std::abs(approx[i] / target[i] - 1.0);
      EXPECT_LT(err, prev[static_cast<std::size_t>(i)]);
      prev[static_cast<std::size_t>(i)] = err;
    }
  }
  for (double e : prev) EXPECT_LT(e, 1e-2);
}

TEST(Likelihood, MissingCellMarginalises) {
  const Dataset full = rounded_sample(20, 12);
  std::vector<ResponseDatum> cells;
  for (std::size_t i = 0; i < full.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) cells.push_back(i == 4 && j == 2 ? ResponseDatum::missing() : full.at(i, j));
  const Dataset d({"y1", "y2", "y3"}, std::vector<VariableKind>(3, VariableKind::Continuous), cells, full.rows());
  Model m3(make_spec(Flavour::Npn, {step(), step(), step()}, Constraint::UnitVariance, 5000), d);
  Model m2(make_spec(Flavour::Npn, {step(), step()}, Constraint::UnitVariance, 5000), d.select({0, 1}));
  NaturalParams p3{{{fit_empirical(d, 0, true)}, {fit_empirical(d, 1, true)}, {VectorXd()}}, lambda3()};
  // column 3 lost one value; refit its grid
  const auto& g = d.column(2).grid;
  p3.margins[2].theta = VectorXd::LinSpaced(static_cast<Eigen::Index>(g.size() - 1), -1.5, 1.5);
  NaturalParams p2{{p3.margins[0], p3.margins[1]}, lambda3().head(1)};
  const double a = m3.observation_logliks(m3.encode(p3))[4];
  const double b = m2.observation_logliks(m2.encode(p2))[4];
  EXPECT_NEAR(a / b, 1.0, 1e-3);
}

TEST(Likelihood, SerialAndParallelAreBitIdentical) {
  const Dataset d = rounded_sample(200, 13);
  Model m(make_spec(Flavour::Smooth, {bern(d, 0), bern(d, 1), bern(d, 2)}), d);
  NaturalParams p{{{ramp(5)}, {ramp(5)}, {ramp(5)}}, lambda3()};
  const VectorXd x = m.encode(p);
  VectorXd gs, gp;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  const double vs = m.loglik(x, &gs, nullptr, ExecPolicy::Serial);
  const double vp = m.loglik(x, &gp, nullptr, ExecPolicy::Parallel);
  omp_set_num_threads(saved);
  EXPECT_EQ(vs, vp);
  EXPECT_EQ(gs, gp);
}

TEST(Likelihood, FlowRejectsCensoredData) {
  const Dataset d = from_text("a,b\n1,2\n2,>3\n3,1\n", {{"a", ColumnRole::Continuous}, {"b", ColumnRole::Continuous}});
  EXPECT_THROW(Model(make_spec(Flavour::Flow, {bern(d, 0), bern(d, 1)}), d), UnsupportedFlavour);
  ModelSpec mixed = make_spec(Flavour::Mixed, {bern(d, 0), bern(d, 1)});
  mixed.split = 2;
  EXPECT_THROW(Model(mixed, d), UnsupportedFlavour);
  mixed.split = 1;
  EXPECT_NO_THROW(Model(mixed, d));
  EXPECT_THROW(Model(make_spec(Flavour::Npn, {linear(), step()}), d), UnsupportedFlavour);
}

TEST(Likelihood, EncodeDecodeRoundTrip) {
  const Dataset d = rounded_sample(20, 14);
  std::vector<MarginalSpec> specs{bern(d, 0), linear(), step()};
  Model m(make_spec(Flavour::Smooth, specs), d);
  NaturalParams p{{{ramp(5)}, {(VectorXd(2) << 0.2, 0.7).finished()}, {fit_empirical(d, 2)}}, lambda3()};
  const VectorXd x = m.encode(p);
  EXPECT_EQ(m.encode(m.decode(x)), x);
  EXPECT_EQ(m.loglik(m.encode(m.decode(x))), m.loglik(x));
  EXPECT_TRUE(m.to_natural(m.to_free(x)).isApprox(x, 1e-12));
  EXPECT_THROW(m.decode(VectorXd::Zero(3)), DimensionError);
  EXPECT_EQ(m.layout().names.back(), "lambda(y3,y2)");
}

TEST(Likelihood, MarginalBlocksAreOrthogonalAtIndependence) {
  const Dataset d = rounded_sample(30, 15);
  Model m(make_spec(Flavour::Npn, {step(), step(), step()}), d);
  NaturalParams p{{{fit_empirical(d, 0, true)}, {fit_empirical(d, 1, true)}, {fit_empirical(d, 2, true)}}, VectorXd::Zero(3)};
  const VectorXd x = m.encode(p);
  const auto& L = m.layout();
  const auto grad = [&](const VectorXd& v) {
    VectorXd g;
    m.loglik(v, &g);
    return g;
  };
  const double h = 1e-5;
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < L.coef_size[j]; k += 3) {
      VectorXd xp = x, xm = x;
      const auto idx = static_cast<Eigen::Index>(L.coef_offset[j] + k);
      xp[idx] += h;
      xm[idx] -= h;
      const VectorXd col = (grad(xp) - grad(xm)) / (2 * h);
      for (std::size_t jj = 0; jj < 3; ++jj) {
        if (jj == j) continue;
        const auto seg = col.segment(static_cast<Eigen::Index>(L.coef_offset[jj]), static_cast<Eigen::Index>(L.coef_size[jj]));
        EXPECT_LT(seg.cwiseAbs().maxCoeff(), 1e-6);
      }
    }
}

TEST(Likelihood, NonConcavityWitnessInLambda) {
  // s = 1, lambda = 0, lower bound of the second dimension above one
  const LatentBox box{(VectorXd(2) << 0.3, 1.2).finished(), (VectorXd(2) << 1.5, kInf).finished()};
  const double h = 0.05;
  auto prob = [&](double l) {
    const MatrixXd C = oracle::omega(VectorXd::Constant(1, l), 2, 1).inverse();
    return std::exp(mvn::log_prob_box(box, C, qmc(20000)).value);
  };
  const double second = (prob(h) - 2 * prob(0.0) + prob(-h)) / (h * h);
  EXPECT_GT(second, 0.0);
  auto grid = [&](double l) { return oracle::box_probability(box.lower, box.upper, oracle::omega(VectorXd::Constant(1, l), 2, 1), 300); };
  const double ref = (grid(h) - 2 * grid(0.0) + grid(-h)) / (h * h);
  EXPECT_GT(ref, 0.0);
  EXPECT_NEAR(second, ref, 0.05 * ref);
}

TEST(Likelihood, UnderflowIsFlooredAndReported) {
  const Dataset d = from_text("a,b\n0,0\n1,1\n", {{"a", ColumnRole::Discrete}, {"b", ColumnRole::Discrete}});
  // cut points deep in the tails leave every cell with an underflowing probability
  Model m(make_spec(Flavour::Npn, {step(), step()}, Constraint::UnitVariance, 200), d);
  NaturalParams p{{{VectorXd::Constant(1, -40.0)}, {VectorXd::Constant(1, 40.0)}}, VectorXd::Zero(1)};
  EvalStatus st;
  const double v = m.loglik(m.encode(p), nullptr, &st);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_FALSE(st.floored.empty());
  EXPECT_GE(v, 2 * kLogFloor);
}
