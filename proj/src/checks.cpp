#include "npn/checks.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "npn/chol.hpp"
#include "npn/error.hpp"
#include "npn/likelihood.hpp"
#include "npn/mvn.hpp"
#include "npn/normal.hpp"

namespace npn::checks {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace

CheckResult fd_gradient_check(const std::string& name, const GradFn& f, const VectorXd& x,
                              const std::vector<std::string>& names, double rel_tol, double step, double floor) {
  CheckResult r;
  r.name = name;
  VectorXd g;
  f(x, &g);
  double worst = 0.0;
  Eigen::Index wk = -1;
  double wa = 0.0, wf = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = step * std::max(1.0, std::abs(x[k]));
    VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double fd = (f(xp, nullptr) - f(xm, nullptr)) / (2.0 * h);
    const double err = std::abs(g[k] - fd) / std::max({std::abs(fd), std::abs(g[k]), floor});
    // NaN counts as worst
    if (wk < 0 || !(err <= worst)) {
      worst = err;
      wk = k;
      wa = g[k];
      wf = fd;
    }
  }
  r.pass = wk < 0 || worst <= rel_tol;
  if (wk >= 0) {
    const std::string coord =
        static_cast<std::size_t>(wk) < names.size() ? names[static_cast<std::size_t>(wk)] : std::to_string(wk);
    r.detail = "worst coordinate " + coord + fmt(": analytic %.10g, finite difference %.10g, relative error %.3g", wa, wf, worst);
  }
  return r;
}

CheckResult convexity_segments(const std::string& name, const std::function<double(const VectorXd&)>& f,
                               const std::vector<std::pair<VectorXd, VectorXd>>& segments, double tol) {
  CheckResult r;
  r.name = name;
  double worst = kInf;
  for (const auto& [a, b] : segments) {
    const double d2 = f(a) + f(b) - 2.0 * f(0.5 * (a + b));
    worst = std::min(worst, d2);
  }
  r.pass = worst >= -tol;
  r.detail = std::to_string(segments.size()) + " segments, smallest second difference " + fmt("%.3g", worst);
  return r;
}

MatrixXd gaussian_sample(std::size_t N, const MatrixXd& R, std::uint64_t seed) {
  const Eigen::LLT<MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw DomainError("correlation matrix is not positive definite");
  const MatrixXd L = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd Y(static_cast<Eigen::Index>(N), R.rows());
  VectorXd e(R.rows());
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = nd(rng);
    Y.row(i) = (L * e).transpose();
  }
  return Y;
}

Dataset continuous_dataset(const MatrixXd& Y) {
  const auto N = static_cast<std::size_t>(Y.rows());
  const auto J = static_cast<std::size_t>(Y.cols());
  std::vector<std::string> names;
  for (std::size_t j = 0; j < J; ++j) names.push_back("y" + std::to_string(j + 1));
  std::vector<ResponseDatum> cells(N * J);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < J; ++j)
      cells[i * J + j] = ResponseDatum::exact(Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return Dataset(names, std::vector<VariableKind>(J, VariableKind::Continuous), std::move(cells), N);
}

namespace {

// Simpson weights on [a, b] with an even number of panels near `step`.
void simpson(double a, double b, double step, std::vector<double>& x, std::vector<double>& w) {
  int n = std::max(2, static_cast<int>(std::ceil((b - a) / step)));
  if (n % 2) ++n;
  const double h = (b - a) / n;
  x.resize(static_cast<std::size_t>(n) + 1);
  w.resize(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    x[static_cast<std::size_t>(k)] = a + k * h;
    w[static_cast<std::size_t>(k)] = (k == 0 || k == n) ? h / 3 : (k % 2 ? 4 * h / 3 : 2 * h / 3);
  }
}

}  // namespace

double grid_box_probability(const VectorXd& lower, const VectorXd& upper, const MatrixXd& C, double step) {
  const Eigen::Index J = lower.size();
  const MatrixXd Sigma = C * C.transpose();
  VectorXd lo(J), hi(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const double sd = std::sqrt(Sigma(j, j));
    lo[j] = std::max(lower[j], -8.0 * sd);
    hi[j] = std::min(upper[j], 8.0 * sd);
    if (!(hi[j] > lo[j])) return 0.0;
  }
  const MatrixXd P = Sigma.inverse();
  const double norm = 1.0 / std::sqrt(std::pow(2.0 * std::numbers::pi, static_cast<double>(J)) * Sigma.determinant());
  std::vector<double> x1, w1, x2, w2;
  simpson(lo[0], hi[0], step, x1, w1);
  if (J == 1) {
    double s = 0.0;
    for (std::size_t a = 0; a < x1.size(); ++a) s += w1[a] * std::exp(-0.5 * P(0, 0) * x1[a] * x1[a]);
    return s * norm;
  }
  if (J != 2) throw DimensionError("grid oracle supports one or two dimensions");
  simpson(lo[1], hi[1], step, x2, w2);
  double s = 0.0;
  for (std::size_t a = 0; a < x1.size(); ++a) {
    double inner = 0.0;
    for (std::size_t b = 0; b < x2.size(); ++b) {
      const double q = P(0, 0) * x1[a] * x1[a] + 2 * P(0, 1) * x1[a] * x2[b] + P(1, 1) * x2[b] * x2[b];
      inner += w2[b] * std::exp(-0.5 * q);
    }
    s += w1[a] * inner;
  }
  return s * norm;
}

namespace {

CheckResult check_orthant() {
  CheckResult r{"mvn.bivariate_orthant", false, ""};
  const double rho = 0.5;
  const double l21 = -rho / std::sqrt(1 - rho * rho);
  const auto b = chol::build({VectorXd::Constant(1, l21), Constraint::UnitVariance}, 2);
  QmcConfig q;
  q.M = 20000;
  LatentBox box{VectorXd::Constant(2, -kInf), VectorXd::Zero(2)};
  const double est = std::exp(mvn::log_prob_box(box, b.OmegaInv, q).value);
  const double truth = 0.25 + std::asin(rho) / (2 * std::numbers::pi);
  const double rel = std::abs(est - truth) / truth;
  r.pass = rel < 1e-3;
  r.detail = fmt("estimate %.8f, closed form %.8f, relative error %.2g", est, truth, rel);
  return r;
}

CheckResult check_grid() {
  CheckResult r{"mvn.grid_oracle", true, ""};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const auto b = chol::build({VectorXd::Constant(1, u(rng)), Constraint::UnitVariance}, 2);
    VectorXd lo(2), hi(2);
    for (int j = 0; j < 2; ++j) {
      const double a = u(rng), c = u(rng);
      lo[j] = std::min(a, c) - 0.3;
      hi[j] = std::max(a, c) + 0.3;
    }
    QmcConfig q;
    q.M = 20000;
    const double est = std::exp(mvn::log_prob_box({lo, hi}, b.OmegaInv, q).value);
    const double grid = grid_box_probability(lo, hi, b.OmegaInv, 0.01);
    worst = std::max(worst, std::abs(est - grid) / grid);
  }
  r.pass = worst < 1e-3;
  r.detail = fmt("5 random boxes, worst relative error %.2g", worst);
  return r;
}

CheckResult check_mvn_scores() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  const std::size_t J = 3;
  VectorXd lam(3);
  for (int k = 0; k < 3; ++k) lam[k] = 0.5 * nd(rng);
  QmcConfig q;
  q.M = 2000;
  LatentBox box{VectorXd(3), VectorXd(3)};
  box.lower << -0.7, -kInf, -0.2;
  box.upper << 1.1, 0.4, 1.6;
  std::vector<std::string> names = {"lambda21", "lambda31", "lambda32"};
  auto f = [&](const VectorXd& l, VectorXd* g) {
    const auto b = chol::build({l, Constraint::UnitVariance}, J);
    const auto s = mvn::log_prob_box(box, b.OmegaInv, q);
    if (g) *g = mvn::score_to_lambda(s, b);
    return s.value;
  };
  return fd_gradient_check("mvn.score_to_lambda", f, lam, names, 1e-6);
}

// Small mixed-type dataset used by the gradient and convexity checks.
Dataset demo_data(std::size_t N, bool discrete_last) {
  MatrixXd R(3, 3);
  R << 1, 0.5, 0.3, 0.5, 1, 0.4, 0.3, 0.4, 1;
  MatrixXd Y = gaussian_sample(N, R, 99);
  std::vector<ResponseDatum> cells(N * 3);
  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    cells[i * 3 + 0] = ResponseDatum::exact(std::exp(Y(ii, 0)));
    cells[i * 3 + 1] = ResponseDatum::exact(Y(ii, 1));
    if (discrete_last) {
      const double v = Y(ii, 2) < -0.5 ? 0 : (Y(ii, 2) < 0.4 ? 1 : 2);
      cells[i * 3 + 2] = ResponseDatum::exact(v);
    } else {
      cells[i * 3 + 2] = ResponseDatum::exact(Y(ii, 2));
    }
  }
  return Dataset({"y1", "y2", "y3"},
                 {VariableKind::Continuous, VariableKind::Continuous,
                  discrete_last ? VariableKind::Discrete : VariableKind::Continuous},
                 std::move(cells), N);
}

VectorXd jitter(const Model& m, const VectorXd& nat, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  VectorXd f = m.to_free(nat);
  for (Eigen::Index k = 0; k < f.size(); ++k) f[k] += nd(rng);
  return m.to_natural(f);
}

CheckResult model_gradient(const std::string& name, const ModelSpec& spec, const Dataset& data, double tol) {
  const Model m(spec, data);
  VectorXd x = m.encode(m.default_start());
  x.tail(static_cast<Eigen::Index>(m.layout().lambda_size)).setConstant(0.3);
  x = jitter(m, x, 5, 0.05);
  auto f = [&](const VectorXd& v, VectorXd* g) { return m.loglik(v, g); };
  return fd_gradient_check(name, f, x, m.layout().names, tol);
}

MarginalSpec linear_margin() {
  MarginalSpec m;
  m.basis = BasisKind::Linear;
  return m;
}

ModelSpec spec_for(Flavour fl, const Dataset& d, std::size_t split, BasisKind cont_basis) {
  ModelSpec s;
  s.flavour = fl;
  s.split = split;
  s.qmc.M = 500;
  for (std::size_t j = 0; j < d.cols(); ++j) {
    MarginalSpec m;
    if (fl != Flavour::Npn && d.column(j).kind == VariableKind::Continuous && (fl != Flavour::Mixed || j < split)) {
      m = cont_basis == BasisKind::Bernstein ? bernstein_for(d.column(j), 4) : linear_margin();
    }
    if (fl == Flavour::Smooth && d.column(j).kind == VariableKind::Continuous)
      m = bernstein_for(d.column(j), 4);
    s.margins.push_back(m);
  }
  return s;
}

std::vector<CheckResult> check_gradients() {
  std::vector<CheckResult> out;
  const Dataset cont = demo_data(40, false);
  const Dataset mixed = demo_data(40, true);
  out.push_back(model_gradient("npn.gradient", spec_for(Flavour::Npn, mixed, 0, BasisKind::Step), mixed, 1e-4));
  out.push_back(model_gradient("smooth.gradient", spec_for(Flavour::Smooth, mixed, 0, BasisKind::Bernstein), mixed, 1e-4));
  out.push_back(model_gradient("flow.gradient", spec_for(Flavour::Flow, cont, 3, BasisKind::Bernstein), cont, 1e-6));
  out.push_back(model_gradient("mixed.gradient", spec_for(Flavour::Mixed, mixed, 2, BasisKind::Bernstein), mixed, 1e-4));
  return out;
}

std::vector<std::pair<VectorXd, VectorXd>> block_segments(const Model& m, const VectorXd& base, bool lambda_block,
                                                          std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<std::pair<VectorXd, VectorXd>> segs;
  const auto lo = static_cast<Eigen::Index>(m.layout().lambda_offset);
  const auto ls = static_cast<Eigen::Index>(m.layout().lambda_size);
  for (int s = 0; s < count; ++s) {
    VectorXd a = base, b = base;
    if (lambda_block) {
      for (Eigen::Index k = lo; k < lo + ls; ++k) {
        a[k] = nd(rng);
        b[k] = nd(rng);
      }
    } else {
      // random admissible endpoints: convex combinations stay admissible
      a = jitter(m, base, rng(), 0.3);
      b = jitter(m, base, rng(), 0.3);
      a.segment(lo, ls) = base.segment(lo, ls);
      b.segment(lo, ls) = base.segment(lo, ls);
    }
    segs.emplace_back(a, b);
  }
  return segs;
}

std::vector<CheckResult> check_convexity() {
  std::vector<CheckResult> out;
  const Dataset cont = demo_data(60, false);
  for (Constraint c : {Constraint::UnitDiagonal, Constraint::UnitVariance}) {
    ModelSpec s = spec_for(Flavour::Flow, cont, 3, BasisKind::Bernstein);
    s.constraint = c;
    const Model m(s, cont);
    VectorXd base = m.encode(m.default_start());
    base.tail(3) << -0.4, 0.2, -0.3;
    auto nll = [&](const VectorXd& v) { return -m.loglik(v); };
    const std::string tag = c == Constraint::UnitDiagonal ? "s1" : "s2";
    out.push_back(convexity_segments("flow.biconvex." + tag + ".margins", nll, block_segments(m, base, false, 21, 20)));
    out.push_back(convexity_segments("flow.biconvex." + tag + ".lambda", nll, block_segments(m, base, true, 22, 20)));
  }
  {
    const Dataset d = demo_data(30, true);
    ModelSpec s = spec_for(Flavour::Npn, d, 0, BasisKind::Step);
    s.qmc.M = 4000;
    const Model m(s, d);
    VectorXd base = m.encode(m.default_start());
    base.tail(3) << -0.4, 0.2, -0.3;
    auto nll = [&](const VectorXd& v) { return -m.loglik(v); };
    out.push_back(convexity_segments("npn.convex_theta", nll, block_segments(m, base, false, 23, 20)));
  }
  return out;
}

CheckResult check_counterexample() {
  CheckResult r{"npn.nonconvex_lambda_witness", false, ""};
  // J = 2, s = 1, lambda = 0, lower bound of the second side above 1
  LatentBox box{VectorXd(2), VectorXd(2)};
  box.lower << -1.0, 1.5;
  box.upper << 1.0, 3.0;
  QmcConfig q;
  q.M = 20000;
  auto prob = [&](double l) {
    const auto b = chol::build({VectorXd::Constant(1, l), Constraint::UnitDiagonal}, 2);
    return std::exp(mvn::log_prob_box(box, b.OmegaInv, q).value);
  };
  auto grid = [&](double l) {
    const auto b = chol::build({VectorXd::Constant(1, l), Constraint::UnitDiagonal}, 2);
    return grid_box_probability(box.lower, box.upper, b.OmegaInv, 0.005);
  };
  const double h = 0.1;
  const double d2 = (prob(h) - 2 * prob(0.0) + prob(-h)) / (h * h);
  const double d2g = (grid(h) - 2 * grid(0.0) + grid(-h)) / (h * h);
  r.pass = d2 > 0.0 && d2g > 0.0;
  r.detail = fmt("second difference of the box probability in lambda: %.5g (QMC), %.5g (quadrature)", d2, d2g);
  return r;
}

CheckResult check_determinism() {
  CheckResult r{"likelihood.serial_equals_parallel", false, ""};
  const Dataset d = demo_data(300, true);
  const ModelSpec s = spec_for(Flavour::Mixed, d, 2, BasisKind::Bernstein);
  const Model m(s, d);
  VectorXd x = m.encode(m.default_start());
  x.tail(3) << -0.4, 0.2, -0.3;
  VectorXd g1, g2;
  const double v1 = m.loglik(x, &g1, nullptr, ExecPolicy::Serial);
  const double v2 = m.loglik(x, &g2, nullptr, ExecPolicy::Parallel);
  r.pass = v1 == v2 && g1 == g2;
  r.detail = r.pass ? "value and gradient bit-identical" : fmt("difference %.3g", v1 - v2);
  return r;
}

}  // namespace

std::vector<CheckResult> run_battery() {
  std::vector<CheckResult> out;
  out.push_back(check_orthant());
  out.push_back(check_grid());
  out.push_back(check_mvn_scores());
  for (auto& c : check_gradients()) out.push_back(std::move(c));
  for (auto& c : check_convexity()) out.push_back(std::move(c));
  out.push_back(check_counterexample());
  out.push_back(check_determinism());
  return out;
}

void print(std::ostream& out, const CheckResult& r) {
  out << (r.pass ? "PASS " : "FAIL ") << r.name;
  if (!r.detail.empty()) out << "  " << r.detail;
  out << '\n';
}

}  // namespace npn::checks
