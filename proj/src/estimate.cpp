#include "npn/estimate.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "npn/error.hpp"
#include "npn/normal.hpp"
#include "npn/optim.hpp"

namespace npn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Full: return "full";
    case Strategy::Pseudo: return "pseudo";
    case Strategy::Acs: return "acs";
    case Strategy::Sequential: return "sequential";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "full") return Strategy::Full;
  if (s == "pseudo") return Strategy::Pseudo;
  if (s == "acs") return Strategy::Acs;
  if (s == "sequential") return Strategy::Sequential;
  throw SchemaError("unknown strategy '" + s + "'");
}

VectorXd FitResult::lambda() const {
  const auto n = static_cast<Eigen::Index>(chol::lambda_count(spec.margins.size()));
  return natural.tail(n);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

optim::Options optim_options(const FitOptions& o) {
  optim::Options out;
  out.max_iter = o.max_iter;
  out.grad_tol = o.grad_tol;
  return out;
}

// Maximises the model log-likelihood over the free coordinates listed in
// `idx`, all others held at their values in `free`.
optim::Result optimize_block(const Model& model, VectorXd& free, const std::vector<std::size_t>& idx,
                             const FitOptions& opts) {
  VectorXd x0(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) x0[static_cast<Eigen::Index>(k)] = free[static_cast<Eigen::Index>(idx[k])];
  VectorXd work = free;
  VectorXd gfull;
  auto fn = [&](const VectorXd& x, VectorXd& g) {
    for (std::size_t k = 0; k < idx.size(); ++k) work[static_cast<Eigen::Index>(idx[k])] = x[static_cast<Eigen::Index>(k)];
    const double v = model.loglik_free(work, &gfull, nullptr, opts.policy);
    g.resize(x.size());
    for (std::size_t k = 0; k < idx.size(); ++k) g[static_cast<Eigen::Index>(k)] = -gfull[static_cast<Eigen::Index>(idx[k])];
    return -v;
  };
  optim::Result r = optim::minimize(fn, x0, optim_options(opts));
  for (std::size_t k = 0; k < idx.size(); ++k) free[static_cast<Eigen::Index>(idx[k])] = r.x[static_cast<Eigen::Index>(k)];
  return r;
}

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
  std::vector<std::size_t> v;
  for (std::size_t k = a; k < b; ++k) v.push_back(k);
  return v;
}

// Final bookkeeping shared by all strategies.
void finish(FitResult& fit, const Model& model, const FitOptions& opts) {
  fit.spec = model.spec();
  fit.names = model.layout().names;
  fit.free = model.to_free(fit.natural);
  VectorXd g;
  EvalStatus st;
  fit.loglik = model.loglik_free(fit.free, &g, &st, opts.policy);
  fit.grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  fit.floored = st.floored;
  if (opts.compute_se) {
    standard_errors(fit, model, opts.policy);
  } else {
    fill_rho_table(fit, model, nullptr);
    fit.se = VectorXd::Constant(fit.natural.size(), std::numeric_limits<double>::quiet_NaN());
  }
}

// Values of the fitted transformation at the exact cells of column j.
VectorXd latent_scores(const Model& model, const MarginalParams& mp, std::size_t j, bool normal_scores) {
  const Dataset& data = model.data();
  const MarginalSpec& ms = model.spec().margins[j];
  const std::size_t N = data.rows();
  VectorXd z(static_cast<Eigen::Index>(N));
  if (ms.basis == BasisKind::Step && !ms.shift_covariate && !ms.scale_covariate) {
    const std::vector<std::size_t> c = cumulative_counts(data, j);
    const double denom = static_cast<double>(N) + (normal_scores ? 1.0 : 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      const auto r = static_cast<std::size_t>(data.rank(i, j));
      z[static_cast<Eigen::Index>(i)] = norm_quantile(static_cast<double>(c[r - 1]) / denom);
    }
    return z;
  }
  const long sc = ms.scale_covariate ? static_cast<long>(data.covariate_index(*ms.scale_covariate)) : -1;
  const long sh = ms.shift_covariate ? static_cast<long>(data.covariate_index(*ms.shift_covariate)) : -1;
  for (std::size_t i = 0; i < N; ++i) {
    const double xl = sc >= 0 ? data.covariate(i, static_cast<std::size_t>(sc)) : 0.0;
    const double xs = sh >= 0 ? data.covariate(i, static_cast<std::size_t>(sh)) : 0.0;
    const auto r = static_cast<std::size_t>(data.rank(i, j));
    const double y = data.column(j).grid[r - 1];
    double base = 0.0;
    if (ms.basis == BasisKind::Step) {
      base = r - 1 < static_cast<std::size_t>(mp.theta.size()) ? mp.theta[static_cast<Eigen::Index>(r - 1)]
                                                               : mp.theta[mp.theta.size() - 1];
    } else {
      base = basis_eval(ms, y).a.dot(mp.theta);
    }
    z[static_cast<Eigen::Index>(i)] = base * std::exp(mp.xi * xl) - mp.beta * xs;
  }
  return z;
}

// Row-wise Newton iterations for the Gaussian negative log-likelihood
// -sum log w_jj + 1/2 tr(W S W') over lower triangular W.
MatrixXd gaussian_inverse_factor(const MatrixXd& S) {
  const Eigen::Index J = S.rows();
  MatrixXd W = MatrixXd::Zero(J, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const Eigen::Index n = j + 1;
    const MatrixXd Sj = S.topLeftCorner(n, n);
    VectorXd w = VectorXd::Zero(n);
    w[j] = 1.0 / std::sqrt(S(j, j));
    auto obj = [&](const VectorXd& u) { return -std::log(u[j]) + 0.5 * u.dot(Sj * u); };
    double f = obj(w);
    for (int it = 0; it < 100; ++it) {
      VectorXd g = Sj * w;
      g[j] -= 1.0 / w[j];
      if (g.cwiseAbs().maxCoeff() < 1e-15) break;
      MatrixXd H = Sj;
      H(j, j) += 1.0 / (w[j] * w[j]);
      const VectorXd d = -H.llt().solve(g);
      double t = 1.0;
      VectorXd wn = w + d;
      while (!(wn[j] > 0.0) || obj(wn) > f + 1e-4 * t * g.dot(d)) {
        t *= 0.5;
        wn = w + t * d;
        if (t < 1e-20) break;
      }
      if (t < 1e-20) break;
      w = wn;
      const double fn = obj(w);
      if (!(fn < f)) {
        f = fn;
        break;
      }
      f = fn;
    }
    W.row(j).head(n) = w.transpose();
  }
  return W;
}

bool all_continuous_exact(const Dataset& data) {
  for (std::size_t j = 0; j < data.cols(); ++j)
    if (data.column(j).kind != VariableKind::Continuous || !data.column_exact(j)) return false;
  return true;
}

}  // namespace

MarginalParams fit_marginal(const ModelSpec& spec, const Dataset& data, std::size_t j, bool normal_scores,
                            const FitOptions& opts) {
  ModelSpec one;
  one.constraint = spec.constraint;
  one.qmc = spec.qmc;
  one.columns = {spec.columns.at(j)};
  one.margins = {spec.margins.at(j)};
  const MarginalSpec& ms = one.margins[0];
  const bool dens = spec.flavour == Flavour::Flow || (spec.flavour == Flavour::Mixed && j < spec.split);
  if (dens) {
    one.flavour = Flavour::Flow;
  } else {
    one.flavour = ms.basis == BasisKind::Step ? Flavour::Npn : Flavour::Smooth;
  }
  const std::size_t jd = data.column_index(spec.columns[j]);
  if (ms.basis == BasisKind::Step && !ms.shift_covariate && !ms.scale_covariate && data.column_exact(jd)) {
    MarginalParams mp;
    mp.theta = fit_empirical(data, jd, normal_scores);
    if (!mp.theta.allFinite()) mp.theta = fit_empirical(data, jd, true);
    return mp;
  }
  Model m(one, data);
  VectorXd free = m.to_free(m.encode(m.default_start()));
  optimize_block(m, free, range(0, m.size()), opts);
  return m.decode(m.to_natural(free)).margins[0];
}

FitResult fit_pseudo(const ModelSpec& spec, const Dataset& data, const FitOptions& opts) {
  const auto t0 = Clock::now();
  Model model(spec, data);
  const ModelSpec& rs = model.spec();
  const Dataset& md = model.data();
  const std::size_t J = model.cols();
  FitResult fit;
  fit.strategy = Strategy::Pseudo;

  NaturalParams p;
  p.margins.resize(J);
  for (std::size_t j = 0; j < J; ++j) p.margins[j] = fit_marginal(rs, md, j, true, opts);
  p.lambda = VectorXd::Zero(static_cast<Eigen::Index>(chol::lambda_count(J)));
  fit.converged = true;
  fit.message = "converged";

  if (J >= 2 && all_continuous_exact(md)) {
    const std::size_t N = md.rows();
    MatrixXd Z(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(J));
    for (std::size_t j = 0; j < J; ++j) Z.col(static_cast<Eigen::Index>(j)) = latent_scores(model, p.margins[j], j, true);
    const MatrixXd S = (Z.transpose() * Z) / static_cast<double>(N);
    const MatrixXd W = gaussian_inverse_factor(S);
    const MatrixXd Winv = W.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(J, J));
    p.lambda = chol::lambda_from_covariance(Winv * Winv.transpose());
    if (rs.constraint == Constraint::UnitDiagonal) {
      // margins were fitted on the unit-variance scale
      const chol::CholeskyBundle b = chol::build({p.lambda, rs.constraint}, J);
      for (std::size_t j = 0; j < J; ++j) {
        const double s = std::sqrt(b.scale[static_cast<Eigen::Index>(j)]);
        p.margins[j].theta *= s;
        p.margins[j].beta *= s;
      }
    }
  } else if (J >= 2) {
    VectorXd free = model.to_free(model.encode(p));
    const auto& L = model.layout();
    const optim::Result r = optimize_block(model, free, range(L.lambda_offset, L.size), opts);
    fit.converged = r.converged;
    fit.message = r.message;
    fit.iterations = r.iterations;
    p = model.decode(model.to_natural(free));
  }
  fit.natural = model.encode(p);
  finish(fit, model, opts);
  fit.wall_time = seconds_since(t0);
  return fit;
}

FitResult fit_full(const ModelSpec& spec, const Dataset& data, const std::optional<VectorXd>& init,
                   const FitOptions& opts) {
  const auto t0 = Clock::now();
  Model model(spec, data);
  VectorXd x0;
  if (init) {
    x0 = *init;
  } else {
    FitOptions po = opts;
    po.compute_se = false;
    try {
      x0 = fit_pseudo(spec, data, po).natural;
    } catch (const npn::Error&) {
      x0 = model.encode(model.default_start());
    }
  }
  if (static_cast<std::size_t>(x0.size()) != model.size())
    throw InitError("initial parameter vector has the wrong length");
  VectorXd free;
  try {
    free = model.to_free(x0);
  } catch (const npn::Error& e) {
    throw InitError(std::string("initial values are not admissible: ") + e.what());
  }
  const optim::Result r = optimize_block(model, free, range(0, model.size()), opts);
  FitResult fit;
  fit.strategy = Strategy::Full;
  fit.natural = model.to_natural(free);
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.message = r.message;
  finish(fit, model, opts);
  fit.wall_time = seconds_since(t0);
  return fit;
}

FitResult fit_acs(const ModelSpec& spec, const Dataset& data, const FitOptions& opts) {
  const auto t0 = Clock::now();
  Model model(spec, data);
  FitOptions po = opts;
  po.compute_se = false;
  VectorXd free = model.to_free(fit_pseudo(spec, data, po).natural);
  const auto& L = model.layout();
  const auto margin_idx = range(0, L.lambda_offset);
  const auto lambda_idx = range(L.lambda_offset, L.size);

  FitResult fit;
  fit.strategy = Strategy::Acs;
  double prev = model.loglik_free(free, nullptr, nullptr, opts.policy);
  fit.trace.push_back(prev);
  fit.converged = false;
  fit.message = "round limit reached";
  for (std::size_t round = 0; round < opts.acs_rounds; ++round) {
    bool ok = true;
    for (const auto* idx : {&margin_idx, &lambda_idx}) {
      if (idx->empty()) continue;
      VectorXd trial = free;
      optim::Result r;
      try {
        r = optimize_block(model, trial, *idx, opts);
      } catch (const npn::Error& e) {
        ok = false;
        fit.message = std::string("sub-problem failed: ") + e.what();
        break;
      }
      const double v = -r.f;
      // alternating ascent never accepts a worse iterate
      if (v >= fit.trace.back()) {
        free = trial;
        fit.trace.push_back(v);
      } else {
        fit.trace.push_back(fit.trace.back());
      }
      fit.iterations += r.iterations;
      if (!r.converged) {
        ok = false;
        fit.message = "sub-problem did not converge: " + r.message;
      }
    }
    const double cur = fit.trace.back();
    if (!ok) break;
    if (cur - prev < opts.acs_tol) {
      fit.converged = true;
      fit.message = "converged";
      break;
    }
    prev = cur;
  }
  fit.natural = model.to_natural(free);
  finish(fit, model, opts);
  fit.wall_time = seconds_since(t0);
  return fit;
}

FitResult fit_sequential(const ModelSpec& spec, const Dataset& data, const FitOptions& opts) {
  const auto t0 = Clock::now();
  Model model(spec, data);
  const ModelSpec& rs = model.spec();
  const std::size_t J = model.cols();
  const auto& L = model.layout();
  std::map<std::string, std::size_t> full_index;
  for (std::size_t k = 0; k < L.names.size(); ++k) full_index[L.names[k]] = k;

  VectorXd nat = VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
  FitResult fit;
  fit.strategy = Strategy::Sequential;
  fit.converged = true;
  fit.message = "converged";
  for (std::size_t j = 0; j < J; ++j) {
    const Model sub(restrict_spec(rs, j + 1), data);
    const auto& SL = sub.layout();
    // start: earlier estimates, a marginal fit for column j, zero lambda row
    VectorXd snat = sub.encode(sub.default_start());
    for (std::size_t k = 0; k < SL.names.size(); ++k) {
      const auto it = full_index.find(SL.names[k]);
      const bool current = SL.names[k].rfind(rs.columns[j] + ".", 0) == 0;
      if (it != full_index.end() && !current && k < SL.lambda_offset) snat[static_cast<Eigen::Index>(k)] = nat[static_cast<Eigen::Index>(it->second)];
      if (k >= SL.lambda_offset) {
        const std::size_t m = k - SL.lambda_offset;
        snat[static_cast<Eigen::Index>(k)] = m < chol::lambda_count(j) ? nat[static_cast<Eigen::Index>(it->second)] : 0.0;
      }
    }
    {
      NaturalParams tmp = sub.decode(snat);
      tmp.margins[j] = fit_marginal(rs, data, j, false, opts);
      snat = sub.encode(tmp);
    }
    std::vector<std::size_t> idx;
    for (std::size_t k = SL.coef_offset[j]; k < SL.lambda_offset; ++k) idx.push_back(k);
    for (std::size_t c = 0; c < j; ++c) idx.push_back(SL.lambda_offset + chol::lambda_index(j, c));
    VectorXd sfree = sub.to_free(snat);
    const optim::Result r = optimize_block(sub, sfree, idx, opts);
    fit.iterations += r.iterations;
    if (!r.converged) {
      fit.converged = false;
      fit.message = "step " + std::to_string(j + 1) + ": " + r.message;
    }
    snat = sub.to_natural(sfree);
    for (std::size_t k = 0; k < SL.names.size(); ++k) nat[static_cast<Eigen::Index>(full_index.at(SL.names[k]))] = snat[static_cast<Eigen::Index>(k)];
  }
  fit.natural = nat;
  finish(fit, model, opts);
  fit.wall_time = seconds_since(t0);
  return fit;
}

FitResult fit(Strategy strategy, const ModelSpec& spec, const Dataset& data, const FitOptions& opts,
              const std::optional<VectorXd>& init) {
  switch (strategy) {
    case Strategy::Full: return fit_full(spec, data, init, opts);
    case Strategy::Pseudo: return fit_pseudo(spec, data, opts);
    case Strategy::Acs: return fit_acs(spec, data, opts);
    case Strategy::Sequential: return fit_sequential(spec, data, opts);
  }
  throw SchemaError("unknown strategy");
}

MatrixXd fd_hessian(const std::function<double(const VectorXd&, VectorXd&)>& loglik, const VectorXd& x,
                    bool parallel) {
  const Eigen::Index n = x.size();
  MatrixXd H(n, n);
  auto column = [&](Eigen::Index k) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
    VectorXd xp = x, xm = x, gp, gm;
    xp[k] += h;
    xm[k] -= h;
    try {
      loglik(xp, gp);
      loglik(xm, gm);
      H.col(k) = -(gp - gm) / (2.0 * h);
    } catch (const npn::Error&) {
      H.col(k).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index k = 0; k < n; ++k) column(k);
  } else {
    for (Eigen::Index k = 0; k < n; ++k) column(k);
  }
  return 0.5 * (H + H.transpose());
}

void fill_rho_table(FitResult& fit, const Model& model, const MatrixXd* lambda_cov) {
  const chol::CholeskyBundle b = model.bundle(fit.natural);
  fit.correlation = chol::correlation(b);
  fit.rho_table.clear();
  const std::size_t J = model.cols();
  for (std::size_t r = 1; r < J; ++r)
    for (std::size_t c = 0; c < r; ++c) {
      RhoEntry e;
      e.row = model.data().column(r).name;
      e.col = model.data().column(c).name;
      e.rho = fit.correlation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      e.se = std::numeric_limits<double>::quiet_NaN();
      if (lambda_cov) {
        const VectorXd g = chol::dcorrelation_dlambda(b, r, c);
        const double v = g.dot(*lambda_cov * g);
        if (v >= 0.0) e.se = std::sqrt(v);
      }
      fit.rho_table.push_back(e);
    }
}

void standard_errors(FitResult& fit, const Model& model, ExecPolicy policy) {
  const Eigen::Index n = fit.free.size();
  fit.se = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  fit.se_available = false;
  const auto& L = model.layout();

  auto fn = [&](const VectorXd& x, VectorXd& g) { return model.loglik_free(x, &g, nullptr, ExecPolicy::Serial); };
  fit.hessian = fd_hessian(fn, fit.free, policy == ExecPolicy::Parallel);

  // Increments that collapsed onto the monotonicity boundary carry no
  // curvature (it scales with exp(2 free)); they are held fixed and
  // contribute zero variance.
  const double hmax = fit.hessian.diagonal().cwiseAbs().maxCoeff();
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  for (std::size_t j = 0; j < model.cols(); ++j) {
    const MarginalSpec& ms = model.spec().margins[j];
    if (ms.basis == BasisKind::Linear) continue;
    const auto o = static_cast<Eigen::Index>(L.coef_offset[j]);
    const auto m = static_cast<Eigen::Index>(L.coef_size[j]);
    const VectorXd theta = coef_from_free(ms, fit.free.segment(o, m));
    const double span = m > 1 ? theta[m - 1] - theta[0] : 0.0;
    for (Eigen::Index k = 1; k < m; ++k) {
      const bool collapsed = std::exp(fit.free[o + k]) < 1e-6 * std::max(span, 1e-3);
      const bool flat = !(fit.hessian(o + k, o + k) > 1e-6 * hmax);
      if (collapsed || flat) active[static_cast<std::size_t>(o + k)] = 0;
    }
  }
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < n; ++k)
    if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
  const auto na = static_cast<Eigen::Index>(idx.size());

  MatrixXd Ha(na, na);
  for (Eigen::Index a = 0; a < na; ++a)
    for (Eigen::Index b = 0; b < na; ++b) Ha(a, b) = fit.hessian(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  if (na == 0 || !Ha.allFinite()) {
    fill_rho_table(fit, model, nullptr);
    return;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ha);
  const VectorXd ev = es.eigenvalues();
  if (!(ev.minCoeff() > 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff()))) {
    fill_rho_table(fit, model, nullptr);
    return;
  }
  const MatrixXd cov_a = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  MatrixXd cov_free = MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < na; ++a)
    for (Eigen::Index b = 0; b < na; ++b)
      cov_free(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]) = cov_a(a, b);
  MatrixXd Jn = MatrixXd::Identity(n, n);
  for (std::size_t j = 0; j < model.cols(); ++j) {
    const auto o = static_cast<Eigen::Index>(L.coef_offset[j]);
    const auto m = static_cast<Eigen::Index>(L.coef_size[j]);
    Jn.block(o, o, m, m) = coef_jacobian(model.spec().margins[j], fit.free.segment(o, m));
  }
  const MatrixXd cov = Jn * cov_free * Jn.transpose();
  for (Eigen::Index k = 0; k < n; ++k) fit.se[k] = cov(k, k) >= 0.0 ? std::sqrt(cov(k, k)) : fit.se[k];
  fit.se_available = true;
  const auto lo = static_cast<Eigen::Index>(L.lambda_offset);
  const auto ls = static_cast<Eigen::Index>(L.lambda_size);
  const MatrixXd lcov = cov.block(lo, lo, ls, ls);
  fill_rho_table(fit, model, &lcov);
}

}  // namespace npn
