#include "npn/likelihood.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "npn/error.hpp"
#include "npn/mvn.hpp"
#include "npn/normal.hpp"

namespace npn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* flavour_name(Flavour f) {
  switch (f) {
    case Flavour::Npn: return "npn";
    case Flavour::Smooth: return "smooth";
    case Flavour::Flow: return "flow";
    case Flavour::Mixed: return "mixed";
  }
  return "?";
}

Flavour parse_flavour(const std::string& s) {
  if (s == "npn") return Flavour::Npn;
  if (s == "smooth") return Flavour::Smooth;
  if (s == "flow") return Flavour::Flow;
  if (s == "mixed") return Flavour::Mixed;
  throw SchemaError("unknown likelihood flavour '" + s + "'");
}

ModelSpec restrict_spec(const ModelSpec& spec, std::size_t ncols) {
  ModelSpec out = spec;
  if (!out.columns.empty()) out.columns.resize(std::min(ncols, out.columns.size()));
  out.margins.resize(std::min(ncols, out.margins.size()));
  out.split = std::min(out.split, ncols);
  return out;
}

std::size_t Layout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw SchemaError("no parameter named '" + name + "'");
}

namespace {

// Per-evaluation transformation values at the grid points of each column.
struct GridValues {
  std::vector<VectorXd> base;   // a(y_k)' theta
  std::vector<VectorXd> deriv;  // a'(y_k)' theta
};

}  // namespace

struct Model::Accum {
  double value = 0.0;
  double count = 0.0;
  VectorXd g;       // coefficient, shift and scale slots of the layout
  MatrixXd gOmega;  // flow and coupling blocks of Omega
  MatrixXd gC;      // Cholesky factor of the conditional box block
  std::vector<std::size_t> floored;
  bool bad = false;
  std::string message;

  void init(std::size_t n, std::size_t J, std::size_t jb) {
    g = VectorXd::Zero(static_cast<Eigen::Index>(n));
    gOmega = MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    gC = MatrixXd::Zero(static_cast<Eigen::Index>(jb), static_cast<Eigen::Index>(jb));
  }

  void add(const Accum& o) {
    value += o.value;
    count += o.count;
    g += o.g;
    gOmega += o.gOmega;
    gC += o.gC;
    floored.insert(floored.end(), o.floored.begin(), o.floored.end());
    if (o.bad && !bad) {
      bad = true;
      message = o.message;
    }
  }
};

struct Model::Ctx {
  NaturalParams p;
  chol::CholeskyBundle b;
  GridValues grid;
  MatrixXd Cb;               // Cholesky factor of the conditional box block
  std::vector<double> crow;  // the same, row-major
  double logdetA = 0.0;
};

Model::Model(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)) {
  std::vector<std::size_t> idx;
  if (spec_.columns.empty()) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      idx.push_back(j);
      spec_.columns.push_back(data.column(j).name);
    }
  } else {
    for (const auto& name : spec_.columns) idx.push_back(data.column_index(name));
  }
  data_ = data.select(idx);
  const std::size_t J = data_.cols();
  if (J == 0) throw DimensionError("model needs at least one column");
  if (spec_.margins.size() != J)
    throw DimensionError("expected " + std::to_string(J) + " marginal specs, got " +
                         std::to_string(spec_.margins.size()));
  if (spec_.qmc.M == 0) throw DomainError("QMC replicate count must be positive");

  switch (spec_.flavour) {
    case Flavour::Npn:
      for (const auto& m : spec_.margins)
        if (m.basis != BasisKind::Step) throw UnsupportedFlavour("npn likelihood needs step margins");
      nflow_ = 0;
      break;
    case Flavour::Smooth: nflow_ = 0; break;
    case Flavour::Flow: nflow_ = J; break;
    case Flavour::Mixed:
      if (spec_.split > J) throw DimensionError("split exceeds the number of columns");
      nflow_ = spec_.split;
      break;
  }
  nbox_ = J - nflow_;
  for (std::size_t j = 0; j < nflow_; ++j) {
    const auto& col = data_.column(j);
    if (col.kind != VariableKind::Continuous || !data_.column_exact(j))
      throw UnsupportedFlavour("column '" + col.name + "' enters through its density and must be " +
                               "continuous and fully observed");
    if (spec_.margins[j].basis == BasisKind::Step)
      throw UnsupportedFlavour("column '" + col.name + "' needs a differentiable basis");
  }

  // layout
  layout_.coef_offset.resize(J);
  layout_.coef_size.resize(J);
  layout_.beta_index.assign(J, -1);
  layout_.xi_index.assign(J, -1);
  shift_cov_.assign(J, -1);
  scale_cov_.assign(J, -1);
  std::size_t off = 0;
  for (std::size_t j = 0; j < J; ++j) {
    const auto& m = spec_.margins[j];
    const auto& name = data_.column(j).name;
    const std::size_t K = data_.column(j).levels();
    if (K < 2) throw SchemaError("column '" + name + "' has fewer than two distinct values");
    layout_.coef_offset[j] = off;
    layout_.coef_size[j] = coef_count(m, K);
    for (std::size_t k = 0; k < layout_.coef_size[j]; ++k)
      layout_.names.push_back(name + ".theta[" + std::to_string(k + 1) + "]");
    off += layout_.coef_size[j];
    if (m.shift_covariate) {
      shift_cov_[j] = static_cast<long>(data_.covariate_index(*m.shift_covariate));
      layout_.beta_index[j] = static_cast<long>(off++);
      layout_.names.push_back(name + ".beta");
    }
    if (m.scale_covariate) {
      scale_cov_[j] = static_cast<long>(data_.covariate_index(*m.scale_covariate));
      layout_.xi_index[j] = static_cast<long>(off++);
      layout_.names.push_back(name + ".xi");
    }
  }
  layout_.lambda_offset = off;
  layout_.lambda_size = chol::lambda_count(J);
  for (std::size_t r = 1; r < J; ++r)
    for (std::size_t c = 0; c < r; ++c)
      layout_.names.push_back("lambda(" + data_.column(r).name + "," + data_.column(c).name + ")");
  layout_.size = off + layout_.lambda_size;

  design_.resize(J);
  ddesign_.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& m = spec_.margins[j];
    if (m.basis == BasisKind::Step) continue;
    const auto& grid = data_.column(j).grid;
    const auto P = static_cast<Eigen::Index>(layout_.coef_size[j]);
    design_[j].resize(static_cast<Eigen::Index>(grid.size()), P);
    ddesign_[j].resize(static_cast<Eigen::Index>(grid.size()), P);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const BasisValue bv = basis_eval(m, grid[k]);
      design_[j].row(static_cast<Eigen::Index>(k)) = bv.a.transpose();
      ddesign_[j].row(static_cast<Eigen::Index>(k)) = bv.da.transpose();
    }
  }

  const std::size_t N = data_.rows();
  chunk_ = std::max<std::size_t>(16, (N + 511) / 512);
  if (nbox_ >= 2) {
    const std::size_t per = spec_.qmc.M * (nbox_ - 1);
    if (N * per <= (std::size_t{1} << 24)) {
      points_.resize(N * per);
      for (std::size_t i = 0; i < N; ++i)
        fill_points(spec_.qmc, nbox_ - 1, i, std::span<double>(points_.data() + i * per, per));
    }
  }
}

VectorXd Model::encode(const NaturalParams& p) const {
  const std::size_t J = cols();
  if (p.margins.size() != J) throw DimensionError("one marginal parameter set per column expected");
  if (static_cast<std::size_t>(p.lambda.size()) != layout_.lambda_size)
    throw DimensionError("lambda has the wrong length");
  VectorXd v(static_cast<Eigen::Index>(layout_.size));
  for (std::size_t j = 0; j < J; ++j) {
    if (static_cast<std::size_t>(p.margins[j].theta.size()) != layout_.coef_size[j])
      throw DimensionError("coefficient block of column '" + data_.column(j).name + "' has the wrong length");
    v.segment(static_cast<Eigen::Index>(layout_.coef_offset[j]),
              static_cast<Eigen::Index>(layout_.coef_size[j])) = p.margins[j].theta;
    if (layout_.beta_index[j] >= 0) v[layout_.beta_index[j]] = p.margins[j].beta;
    if (layout_.xi_index[j] >= 0) v[layout_.xi_index[j]] = p.margins[j].xi;
  }
  v.tail(static_cast<Eigen::Index>(layout_.lambda_size)) = p.lambda;
  return v;
}

NaturalParams Model::decode(const VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != layout_.size)
    throw DimensionError("parameter vector has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(layout_.size));
  NaturalParams p;
  p.margins.resize(cols());
  for (std::size_t j = 0; j < cols(); ++j) {
    p.margins[j].theta = v.segment(static_cast<Eigen::Index>(layout_.coef_offset[j]),
                                   static_cast<Eigen::Index>(layout_.coef_size[j]));
    if (layout_.beta_index[j] >= 0) p.margins[j].beta = v[layout_.beta_index[j]];
    if (layout_.xi_index[j] >= 0) p.margins[j].xi = v[layout_.xi_index[j]];
  }
  p.lambda = v.tail(static_cast<Eigen::Index>(layout_.lambda_size));
  return p;
}

VectorXd Model::to_free(const VectorXd& natural) const {
  VectorXd f = natural;
  for (std::size_t j = 0; j < cols(); ++j) {
    const auto o = static_cast<Eigen::Index>(layout_.coef_offset[j]);
    const auto n = static_cast<Eigen::Index>(layout_.coef_size[j]);
    f.segment(o, n) = coef_to_free(spec_.margins[j], natural.segment(o, n));
  }
  return f;
}

VectorXd Model::to_natural(const VectorXd& free) const {
  VectorXd v = free;
  for (std::size_t j = 0; j < cols(); ++j) {
    const auto o = static_cast<Eigen::Index>(layout_.coef_offset[j]);
    const auto n = static_cast<Eigen::Index>(layout_.coef_size[j]);
    v.segment(o, n) = coef_from_free(spec_.margins[j], free.segment(o, n));
  }
  return v;
}

VectorXd Model::chain_to_free(const VectorXd& free, const VectorXd& g) const {
  VectorXd out = g;
  for (std::size_t j = 0; j < cols(); ++j) {
    const auto o = static_cast<Eigen::Index>(layout_.coef_offset[j]);
    const auto n = static_cast<Eigen::Index>(layout_.coef_size[j]);
    out.segment(o, n) = coef_jacobian(spec_.margins[j], free.segment(o, n)).transpose() * g.segment(o, n);
  }
  return out;
}

chol::CholeskyBundle Model::bundle(const VectorXd& natural) const {
  LambdaParams lp{natural.tail(static_cast<Eigen::Index>(layout_.lambda_size)), spec_.constraint};
  return chol::build(lp, cols());
}

Model::Ctx Model::prepare(const VectorXd& natural, bool check) const {
  Ctx ctx;
  ctx.p = decode(natural);
  ctx.b = bundle(natural);
  const std::size_t J = cols();
  const std::size_t jb = nbox_;
  ctx.grid.base.resize(J);
  ctx.grid.deriv.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const VectorXd& theta = ctx.p.margins[j].theta;
    if (spec_.margins[j].basis == BasisKind::Step) {
      ctx.grid.base[j] = theta;
    } else {
      ctx.grid.base[j] = design_[j] * theta;
      ctx.grid.deriv[j] = ddesign_[j] * theta;
    }
    if (check && j >= nflow_) {
      const VectorXd& bv = ctx.grid.base[j];
      const bool step = spec_.margins[j].basis == BasisKind::Step;
      const Eigen::Index used = static_cast<Eigen::Index>(data_.column(j).levels()) - (step ? 1 : 0);
      for (Eigen::Index k = 0; k < used; ++k) {
        if (!std::isfinite(bv[k]) || (k > 0 && !(bv[k] > bv[k - 1])))
          throw ConstraintViolation("transformation of column '" + data_.column(j).name +
                                    "' must be strictly increasing over its grid");
      }
    }
  }
  for (std::size_t c = 0; c < nflow_; ++c) ctx.logdetA += std::log(ctx.b.Omega(c, c));
  if (jb > 0) {
    const MatrixXd OmC = ctx.b.Omega.bottomRightCorner(jb, jb);
    ctx.Cb = OmC.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(jb, jb));
    ctx.crow.resize(jb * jb);
    for (std::size_t r = 0; r < jb; ++r)
      for (std::size_t c = 0; c < jb; ++c) ctx.crow[r * jb + c] = c <= r ? ctx.Cb(r, c) : 0.0;
  }
  return ctx;
}

void Model::eval_chunk(std::size_t begin, std::size_t end, const Ctx& ctx, bool want_grad,
                       Accum& acc) const {
  const NaturalParams& p = ctx.p;
  const MatrixXd& Cb = ctx.Cb;
  const GridValues& gv = ctx.grid;
  const std::size_t J = cols();
  const std::size_t jf = nflow_;
  const std::size_t jb = nbox_;
  const std::size_t M = spec_.qmc.M;
  const MatrixXd& Om = ctx.b.Omega;

  std::vector<double> z(jf), zbar(jf), r(jf), hp(jf);
  std::vector<double> v(jb), mu(jb), lo(jb), up(jb), gl(jb), gu(jb), gc(jb * jb), mubar(jb), vbar(jb);
  std::vector<double> sc(J), xs(J), xl(J);
  mvn::Workspace ws;
  if (jb > 0) ws.reserve(jb, M);
  const std::size_t per = jb >= 2 ? M * (jb - 1) : 0;

  // grid position whose h value bounds the side, or -1 for an infinite side
  auto position = [&](std::size_t j, int idx, bool closed) -> long {
    const std::size_t K = data_.column(j).levels();
    if (idx <= 0) return -1;
    if (static_cast<std::size_t>(idx) >= K && !(closed && spec_.margins[j].basis != BasisKind::Step)) return -1;
    return idx - 1;
  };
  auto side = [&](std::size_t j, int idx, bool closed, double inf) {
    const long k = position(j, idx, closed);
    if (k < 0) return inf;
    return gv.base[j][k] * sc[j] - p.margins[j].beta * xs[j];
  };
  // d loglik / d h at grid position k of column j, pushed to the parameters
  auto push_h = [&](std::size_t j, std::size_t k, double g) {
    const auto o = static_cast<Eigen::Index>(layout_.coef_offset[j]);
    const double gs = g * sc[j];
    if (spec_.margins[j].basis == BasisKind::Step)
      acc.g[o + static_cast<Eigen::Index>(k)] += gs;
    else
      acc.g.segment(o, static_cast<Eigen::Index>(layout_.coef_size[j])) +=
          gs * design_[j].row(static_cast<Eigen::Index>(k)).transpose();
    if (layout_.beta_index[j] >= 0) acc.g[layout_.beta_index[j]] -= g * xs[j];
    if (layout_.xi_index[j] >= 0) acc.g[layout_.xi_index[j]] += gs * gv.base[j][static_cast<Eigen::Index>(k)] * xl[j];
  };

  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      xs[j] = shift_cov_[j] >= 0 ? data_.covariate(i, static_cast<std::size_t>(shift_cov_[j])) : 0.0;
      xl[j] = scale_cov_[j] >= 0 ? data_.covariate(i, static_cast<std::size_t>(scale_cov_[j])) : 0.0;
      sc[j] = scale_cov_[j] >= 0 ? std::exp(p.margins[j].xi * xl[j]) : 1.0;
    }
    double val = 0.0;
    if (jf > 0) {
      double quad = 0.0;
      double logjac = 0.0;
      for (std::size_t c = 0; c < jf; ++c) {
        const auto k = static_cast<Eigen::Index>(data_.rank(i, c) - 1);
        z[c] = gv.base[c][k] * sc[c] - p.margins[c].beta * xs[c];
        hp[c] = gv.deriv[c][k] * sc[c];
        if (!(hp[c] > 0.0) && !acc.bad) {
          acc.bad = true;
          acc.message = "transformation of column '" + data_.column(c).name + "' is not increasing";
        }
        logjac += std::log(hp[c]);
      }
      for (std::size_t a = 0; a < jf; ++a) {
        double s = 0.0;
        for (std::size_t c = 0; c <= a; ++c) s += Om(a, c) * z[c];
        r[a] = s;
        quad += s * s;
      }
      val += -static_cast<double>(jf) * kLogSqrt2Pi + ctx.logdetA - 0.5 * quad + logjac;
    }
    double total = 0.0;
    if (jb > 0) {
      for (std::size_t bi = 0; bi < jb; ++bi) {
        double s = 0.0;
        for (std::size_t c = 0; c < jf; ++c) s += Om(jf + bi, c) * z[c];
        v[bi] = s;
      }
      for (std::size_t bi = 0; bi < jb; ++bi) {
        double s = 0.0;
        for (std::size_t k = 0; k <= bi; ++k) s += Cb(bi, k) * v[k];
        mu[bi] = -s;
        const std::size_t j = jf + bi;
        const CellBox& cb = data_.box(i, j);
        lo[bi] = side(j, cb.lower, false, -kInf) - mu[bi];
        up[bi] = side(j, cb.upper, cb.closed_top, kInf) - mu[bi];
      }
      std::span<const double> w;
      if (per > 0) {
        if (!points_.empty()) {
          w = std::span<const double>(points_.data() + i * per, per);
        } else {
          fill_points(spec_.qmc, jb - 1, i, ws.points);
          w = ws.points;
        }
      }
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(gu.begin(), gu.end(), 0.0);
      std::fill(gc.begin(), gc.end(), 0.0);
      total = mvn::accumulate_box(lo, up, ctx.crow, jb, w, M, ws, gl, gu, gc);
      const double mean = total / static_cast<double>(M);
      val += mean > 0.0 ? std::log(mean) : -kInf;
    }
    if (!(val >= kLogFloor)) {
      acc.value += kLogFloor;
      acc.floored.push_back(i);
      continue;
    }
    acc.value += val;
    if (!want_grad) continue;
    acc.count += 1.0;
    std::fill(zbar.begin(), zbar.end(), 0.0);
    if (jb > 0) {
      const double inv = 1.0 / total;
      for (std::size_t bi = 0; bi < jb; ++bi) {
        gl[bi] *= inv;
        gu[bi] *= inv;
        mubar[bi] = -(gl[bi] + gu[bi]);
      }
      for (std::size_t bi = 0; bi < jb; ++bi)
        for (std::size_t k = 0; k <= bi; ++k)
          acc.gC(bi, k) += gc[bi * jb + k] * inv - mubar[bi] * v[k];
      if (jf > 0) {
        for (std::size_t k = 0; k < jb; ++k) {
          double s = 0.0;
          for (std::size_t bi = k; bi < jb; ++bi) s += Cb(bi, k) * mubar[bi];
          vbar[k] = -s;
        }
        for (std::size_t bi = 0; bi < jb; ++bi)
          for (std::size_t c = 0; c < jf; ++c) {
            acc.gOmega(jf + bi, c) += vbar[bi] * z[c];
            zbar[c] += Om(jf + bi, c) * vbar[bi];
          }
      }
      for (std::size_t bi = 0; bi < jb; ++bi) {
        const std::size_t j = jf + bi;
        const CellBox& cb = data_.box(i, j);
        if (const long k = position(j, cb.lower, false); k >= 0) push_h(j, static_cast<std::size_t>(k), gl[bi]);
        if (const long k = position(j, cb.upper, cb.closed_top); k >= 0) push_h(j, static_cast<std::size_t>(k), gu[bi]);
      }
    }
    if (jf > 0) {
      for (std::size_t a = 0; a < jf; ++a)
        for (std::size_t c = 0; c <= a; ++c) {
          acc.gOmega(a, c) -= r[a] * z[c];
          zbar[c] -= Om(a, c) * r[a];
        }
      for (std::size_t c = 0; c < jf; ++c) {
        const auto k = static_cast<std::size_t>(data_.rank(i, c) - 1);
        push_h(c, k, zbar[c]);
        // log h' term
        const auto o = static_cast<Eigen::Index>(layout_.coef_offset[c]);
        acc.g.segment(o, static_cast<Eigen::Index>(layout_.coef_size[c])) +=
            (sc[c] / hp[c]) * ddesign_[c].row(static_cast<Eigen::Index>(k)).transpose();
        if (layout_.xi_index[c] >= 0) acc.g[layout_.xi_index[c]] += xl[c];
      }
    }
  }
}

double Model::loglik(const VectorXd& natural, VectorXd* grad, EvalStatus* status,
                     ExecPolicy policy) const {
  const std::size_t J = cols();
  const std::size_t jf = nflow_;
  const std::size_t jb = nbox_;
  const Ctx ctx = prepare(natural, true);
  const chol::CholeskyBundle& b = ctx.b;
  const MatrixXd& Cb = ctx.Cb;

  const std::size_t N = data_.rows();
  const std::size_t nchunks = (N + chunk_ - 1) / chunk_;
  std::vector<Accum> accs(nchunks);
  const bool want_grad = grad != nullptr;
  auto run = [&](std::size_t c) {
    accs[c].init(layout_.size, J, jb);
    eval_chunk(c * chunk_, std::min(N, (c + 1) * chunk_), ctx, want_grad, accs[c]);
  };
  if (policy == ExecPolicy::Parallel && nchunks > 1) {
    const long n = static_cast<long>(nchunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (long c = 0; c < n; ++c) run(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < nchunks; ++c) run(c);
  }
  // fixed-order pairwise reduction, independent of the thread count
  for (std::size_t s = 1; s < nchunks; s *= 2)
    for (std::size_t c = 0; c + s < nchunks; c += 2 * s) accs[c].add(accs[c + s]);
  Accum& acc = accs.front();
  if (acc.bad) throw ConstraintViolation(acc.message);

  if (status) status->floored = acc.floored;
  if (grad) {
    MatrixXd G = acc.gOmega;
    for (std::size_t c = 0; c < jf; ++c) G(c, c) += acc.count / b.Omega(c, c);
    if (jb > 0) {
      const MatrixXd gOmC = -(Cb.transpose() * acc.gC * Cb.transpose());
      G.bottomRightCorner(jb, jb) += gOmC.triangularView<Eigen::Lower>().toDenseMatrix();
    }
    VectorXd g = acc.g;
    g.tail(static_cast<Eigen::Index>(layout_.lambda_size)) = chol::omega_grad_to_lambda(b, G);
    *grad = std::move(g);
  }
  return acc.value;
}

double Model::loglik_free(const VectorXd& free, VectorXd* grad, EvalStatus* status,
                          ExecPolicy policy) const {
  const VectorXd nat = to_natural(free);
  if (!grad) return loglik(nat, nullptr, status, policy);
  VectorXd gn;
  const double v = loglik(nat, &gn, status, policy);
  *grad = chain_to_free(free, gn);
  return v;
}

VectorXd Model::observation_logliks(const VectorXd& natural) const {
  VectorXd out(static_cast<Eigen::Index>(data_.rows()));
  const Ctx ctx = prepare(natural, true);
  for (std::size_t i = 0; i < data_.rows(); ++i) {
    Accum acc;
    acc.init(layout_.size, cols(), nbox_);
    eval_chunk(i, i + 1, ctx, false, acc);
    if (acc.bad) throw ConstraintViolation(acc.message);
    out[static_cast<Eigen::Index>(i)] = acc.value;
  }
  return out;
}

NaturalParams Model::default_start() const {
  NaturalParams p;
  const std::size_t J = cols();
  p.margins.resize(J);
  p.lambda = VectorXd::Zero(static_cast<Eigen::Index>(layout_.lambda_size));
  for (std::size_t j = 0; j < J; ++j) {
    const auto& grid = data_.column(j).grid;
    const std::size_t K = grid.size();
    // one representative value per observed cell
    std::vector<double> pv;
    for (std::size_t i = 0; i < data_.rows(); ++i) {
      const ResponseDatum& d = data_.at(i, j);
      if (d.is_missing()) continue;
      if (d.is_exact()) {
        pv.push_back(d.lower);
      } else if (std::isfinite(d.lower) && std::isfinite(d.upper)) {
        pv.push_back(0.5 * (d.lower + d.upper));
      } else {
        pv.push_back(std::isfinite(d.lower) ? d.lower : d.upper);
      }
    }
    std::sort(pv.begin(), pv.end());
    const double n1 = static_cast<double>(pv.size()) + 1.0;
    VectorXd score(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) {
      const auto c = std::upper_bound(pv.begin(), pv.end(), grid[k]) - pv.begin();
      score[static_cast<Eigen::Index>(k)] = norm_quantile(std::max(0.5, static_cast<double>(c)) / n1);
    }
    for (std::size_t k = 1; k < K; ++k)
      score[static_cast<Eigen::Index>(k)] =
          std::max(score[static_cast<Eigen::Index>(k)], score[static_cast<Eigen::Index>(k - 1)] + 1e-3);

    const auto& m = spec_.margins[j];
    if (m.basis == BasisKind::Step) {
      p.margins[j].theta = score.head(static_cast<Eigen::Index>(K - 1));
      continue;
    }
    // least-squares line through (grid, score), written in the chosen basis
    double my = 0.0, ms = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      my += grid[k];
      ms += score[static_cast<Eigen::Index>(k)];
    }
    my /= static_cast<double>(K);
    ms /= static_cast<double>(K);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      sxy += (grid[k] - my) * (score[static_cast<Eigen::Index>(k)] - ms);
      sxx += (grid[k] - my) * (grid[k] - my);
    }
    double slope = sxx > 0.0 ? sxy / sxx : 1.0;
    if (!(slope > 0.0)) slope = 1e-3;
    const double icpt = ms - slope * my;
    if (m.basis == BasisKind::Linear) {
      p.margins[j].theta = VectorXd(2);
      p.margins[j].theta << icpt, slope;
    } else {
      p.margins[j].theta.resize(m.order + 1);
      for (int k = 0; k <= m.order; ++k)
        p.margins[j].theta[k] = icpt + slope * (m.lo + (m.hi - m.lo) * k / std::max(1, m.order));
    }
  }
  return p;
}

namespace {

MarginalParams step_params(const VectorXd& theta) {
  MarginalParams m;
  m.theta = theta;
  return m;
}

LogLik run_model(const ModelSpec& spec, const NaturalParams& p, const Dataset& data) {
  Model m(spec, data);
  LogLik out;
  VectorXd g;
  out.value = m.loglik(m.encode(p), &g, &out.status);
  out.gradient = std::move(g);
  return out;
}

}  // namespace

LogLik loglik_npn(const std::vector<VectorXd>& theta, const LambdaParams& lambda, const Dataset& data,
                  const QmcConfig& qmc) {
  ModelSpec spec;
  spec.flavour = Flavour::Npn;
  spec.constraint = lambda.constraint;
  spec.margins.assign(data.cols(), MarginalSpec{});
  spec.qmc = qmc;
  NaturalParams p;
  for (const auto& t : theta) p.margins.push_back(step_params(t));
  p.lambda = lambda.values;
  return run_model(spec, p, data);
}

LogLik loglik_smooth(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                     const LambdaParams& lambda, const Dataset& data, const QmcConfig& qmc) {
  ModelSpec spec;
  spec.flavour = Flavour::Smooth;
  spec.constraint = lambda.constraint;
  spec.margins = specs;
  spec.qmc = qmc;
  return run_model(spec, NaturalParams{params, lambda.values}, data);
}

LogLik loglik_flow(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                   const LambdaParams& lambda, const Dataset& data) {
  ModelSpec spec;
  spec.flavour = Flavour::Flow;
  spec.constraint = lambda.constraint;
  spec.margins = specs;
  return run_model(spec, NaturalParams{params, lambda.values}, data);
}

LogLik loglik_mixed(const std::vector<MarginalSpec>& specs, const std::vector<MarginalParams>& params,
                    const LambdaParams& lambda, const Dataset& data, std::size_t split,
                    const QmcConfig& qmc) {
  ModelSpec spec;
  spec.flavour = Flavour::Mixed;
  spec.constraint = lambda.constraint;
  spec.split = split;
  spec.margins = specs;
  spec.qmc = qmc;
  return run_model(spec, NaturalParams{params, lambda.values}, data);
}

LogLik eval(const ModelSpec& spec, const VectorXd& natural, const Dataset& data) {
  Model m(spec, data);
  LogLik out;
  VectorXd g;
  out.value = m.loglik(natural, &g, &out.status);
  out.gradient = std::move(g);
  return out;
}

}  // namespace npn
