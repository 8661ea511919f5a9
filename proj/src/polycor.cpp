#include "npn/polycor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "npn/error.hpp"
#include "npn/estimate.hpp"
#include "npn/normal.hpp"

namespace npn::polycor {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* scale_name(Scale s) {
  switch (s) {
    case Scale::Continuous: return "continuous";
    case Scale::Ordinal5: return "ordinal5";
    case Scale::Binary: return "binary";
  }
  return "?";
}

Scale parse_scale(const std::string& s) {
  if (s == "continuous") return Scale::Continuous;
  if (s == "ordinal5") return Scale::Ordinal5;
  if (s == "binary") return Scale::Binary;
  throw SchemaError("unknown measurement scale '" + s + "'");
}

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::Pseudo: return "pseudo";
    case Estimator::Npn: return "npn";
    case Estimator::Smooth: return "smooth";
    case Estimator::Flow: return "flow";
    case Estimator::Mixed: return "mixed";
  }
  return "?";
}

Estimator parse_estimator(const std::string& s) {
  for (Estimator e : {Estimator::Pseudo, Estimator::Npn, Estimator::Smooth, Estimator::Flow, Estimator::Mixed})
    if (s == estimator_name(e)) return e;
  throw SchemaError("unknown estimator '" + s + "'");
}

double chisq2_from_normal(double z) { return -2.0 * std::log(norm_cdf(-z)); }

Sample simulate_pair(std::size_t N, double rho, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must lie in (-1, 1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Sample s;
  s.latent.resize(static_cast<Eigen::Index>(N), 2);
  s.y.resize(static_cast<Eigen::Index>(N), 2);
  const double c = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(N); ++i) {
    const double e1 = nd(rng);
    const double e2 = nd(rng);
    s.latent(i, 0) = e1;
    s.latent(i, 1) = rho * e1 + c * e2;
    s.y(i, 0) = chisq2_from_normal(s.latent(i, 0));
    s.y(i, 1) = chisq2_from_normal(s.latent(i, 1));
  }
  return s;
}

namespace {

std::size_t wanted_categories(Scale s) { return s == Scale::Binary ? 2 : 5; }

Discretized cut_once(const VectorXd& x, Scale scale, std::mt19937_64& rng) {
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::uniform_real_distribution<double> unif(0.2, 0.8);
  Discretized d;
  const std::size_t ncut = wanted_categories(scale) - 1;
  for (std::size_t k = 0; k < ncut; ++k) {
    const double p = unif(rng);
    // inverse of the empirical distribution function
    std::size_t idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    idx = std::clamp<std::size_t>(idx, 1, n) - 1;
    d.cutoffs.push_back(sorted[idx]);
  }
  std::sort(d.cutoffs.begin(), d.cutoffs.end());
  d.values.resize(n);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto c = std::lower_bound(d.cutoffs.begin(), d.cutoffs.end(), x[i]) - d.cutoffs.begin();
    d.values[static_cast<std::size_t>(i)] = static_cast<double>(c);
  }
  return d;
}

std::size_t distinct(const std::vector<double>& v) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
}

}  // namespace

Discretized discretize(const VectorXd& x, Scale scale, std::uint64_t seed) {
  if (scale == Scale::Continuous) throw DomainError("discretize needs an ordinal or binary scale");
  std::mt19937_64 rng(seed);
  Discretized d = cut_once(x, scale, rng);
  if (distinct(d.values) < wanted_categories(scale)) {
    d = cut_once(x, scale, rng);
    d.redrawn = true;
    d.flagged = distinct(d.values) < wanted_categories(scale);
  }
  return d;
}

std::vector<Estimator> applicable(Scale s1, Scale s2) {
  const bool c1 = s1 == Scale::Continuous;
  const bool c2 = s2 == Scale::Continuous;
  if (c1 && c2) return {Estimator::Pseudo, Estimator::Npn, Estimator::Smooth, Estimator::Flow};
  if (c1 || c2) return {Estimator::Mixed, Estimator::Npn, Estimator::Smooth};
  return {Estimator::Npn};
}

double efficiency_bound(double rho, std::size_t N) {
  return (1.0 - rho * rho) / std::sqrt(static_cast<double>(N));
}

namespace {

std::string join(const std::vector<double>& v) {
  std::string out;
  char buf[64];
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g", v[k]);
    if (k) out += ';';
    out += buf;
  }
  return out;
}

}  // namespace

Dataset replication_data(const SimScenario& sc, std::size_t rep, bool* flagged, std::string* cut1,
                         std::string* cut2) {
  const std::uint64_t rs = derive_seed(sc.seed, rep);
  const Sample s = simulate_pair(sc.N, sc.rho, rs);
  std::vector<ResponseDatum> cells(sc.N * 2);
  std::vector<VariableKind> kinds(2);
  bool flag = false;
  const Scale scales[2] = {sc.scale1, sc.scale2};
  for (int k = 0; k < 2; ++k) {
    std::string cuts;
    if (scales[k] == Scale::Continuous) {
      kinds[static_cast<std::size_t>(k)] = VariableKind::Continuous;
      for (std::size_t i = 0; i < sc.N; ++i)
        cells[i * 2 + static_cast<std::size_t>(k)] = ResponseDatum::exact(s.y(static_cast<Eigen::Index>(i), k));
    } else {
      kinds[static_cast<std::size_t>(k)] = VariableKind::Discrete;
      const Discretized d = discretize(s.y.col(k), scales[k], derive_seed(rs, static_cast<std::uint64_t>(k) + 1));
      flag = flag || d.flagged;
      cuts = join(d.cutoffs);
      for (std::size_t i = 0; i < sc.N; ++i) cells[i * 2 + static_cast<std::size_t>(k)] = ResponseDatum::exact(d.values[i]);
    }
    if (k == 0 && cut1) *cut1 = cuts;
    if (k == 1 && cut2) *cut2 = cuts;
  }
  if (flagged) *flagged = flag;
  return Dataset({"y1", "y2"}, kinds, std::move(cells), sc.N);
}

ModelSpec estimator_spec(Estimator e, Scale s1, Scale s2, const Dataset& data, const SimScenario& sc) {
  ModelSpec spec;
  spec.constraint = Constraint::UnitVariance;
  spec.qmc = sc.qmc;
  const bool cont[2] = {s1 == Scale::Continuous, s2 == Scale::Continuous};
  auto smooth_margin = [&](std::size_t k) {
    return cont[k] ? bernstein_for(data.column(k), sc.bernstein_order) : MarginalSpec{};
  };
  switch (e) {
    case Estimator::Pseudo:
    case Estimator::Npn:
      spec.flavour = Flavour::Npn;
      spec.columns = {"y1", "y2"};
      spec.margins = {MarginalSpec{}, MarginalSpec{}};
      break;
    case Estimator::Smooth:
      spec.flavour = Flavour::Smooth;
      spec.columns = {"y1", "y2"};
      spec.margins = {smooth_margin(0), smooth_margin(1)};
      break;
    case Estimator::Flow:
      spec.flavour = Flavour::Flow;
      spec.columns = {"y1", "y2"};
      spec.margins = {smooth_margin(0), smooth_margin(1)};
      break;
    case Estimator::Mixed: {
      const std::size_t c = cont[0] ? 0 : 1;
      spec.flavour = Flavour::Mixed;
      spec.split = 1;
      spec.columns = {data.column(c).name, data.column(1 - c).name};
      spec.margins = {smooth_margin(c), MarginalSpec{}};
      break;
    }
  }
  return spec;
}

SimReport run_scenario(const SimScenario& sc, bool parallel) {
  SimReport rep;
  rep.scenario = sc;
  rep.bound = efficiency_bound(sc.rho, sc.N);
  const std::vector<Estimator> est = sc.estimators.empty() ? applicable(sc.scale1, sc.scale2) : sc.estimators;
  const std::size_t R = sc.replications;
  std::vector<std::vector<SimRecord>> per(R);

  auto one = [&](std::size_t r) {
    bool flagged = false;
    std::string c1, c2;
    Dataset data;
    std::string data_error;
    try {
      data = replication_data(sc, r, &flagged, &c1, &c2);
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (Estimator e : est) {
      SimRecord rec;
      rec.rep = r;
      rec.estimator = e;
      rec.flagged = flagged;
      rec.cutoffs1 = c1;
      rec.cutoffs2 = c2;
      rec.rho_hat = std::numeric_limits<double>::quiet_NaN();
      rec.se = std::numeric_limits<double>::quiet_NaN();
      if (!data_error.empty()) {
        rec.error = data_error;
        per[r].push_back(rec);
        continue;
      }
      try {
        const ModelSpec spec = estimator_spec(e, sc.scale1, sc.scale2, data, sc);
        FitOptions fo;
        fo.policy = ExecPolicy::Serial;
        FitResult f;
        if (e == Estimator::Pseudo) {
          fo.compute_se = false;
          f = fit_pseudo(spec, data, fo);
        } else {
          f = fit_full(spec, data, std::nullopt, fo);
        }
        rec.rho_hat = f.rho_table.at(0).rho;
        rec.se = f.rho_table.at(0).se;
        rec.converged = f.converged;
        if (!f.converged) rec.error = f.message;
      } catch (const std::exception& ex) {
        rec.error = ex.what();
      }
      per[r].push_back(rec);
    }
  };
  if (parallel) {
    const long n = static_cast<long>(R);
#pragma omp parallel for schedule(dynamic, 1)
    for (long r = 0; r < n; ++r) one(static_cast<std::size_t>(r));
  } else {
    for (std::size_t r = 0; r < R; ++r) one(r);
  }
  for (auto& v : per)
    for (auto& rec : v) rep.records.push_back(std::move(rec));

  for (Estimator e : est) {
    SimSummary s;
    s.estimator = e;
    std::vector<double> vals, ses;
    for (const auto& rec : rep.records) {
      if (rec.estimator != e) continue;
      if (!rec.converged || !std::isfinite(rec.rho_hat)) {
        ++s.excluded;
        continue;
      }
      vals.push_back(rec.rho_hat);
      if (std::isfinite(rec.se)) ses.push_back(rec.se);
    }
    s.used = vals.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.mean = s.sd = s.mcse = s.bias = s.mean_se = nan;
    if (!vals.empty()) {
      double m = 0.0;
      for (double v : vals) m += v;
      m /= static_cast<double>(vals.size());
      s.mean = m;
      s.bias = m - sc.rho;
      if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - m) * (v - m);
        s.sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
        s.mcse = s.sd / std::sqrt(static_cast<double>(vals.size()));
      }
    }
    if (!ses.empty()) {
      double m = 0.0;
      for (double v : ses) m += v;
      s.mean_se = m / static_cast<double>(ses.size());
    }
    rep.summary.push_back(s);
  }
  return rep;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_records_header(std::ostream& out) {
  out << "N,rho,scale1,scale2,rep,estimator,rho_hat,se,converged,flagged,cutoffs1,cutoffs2,bound,note\n";
}

void write_records(std::ostream& out, const SimReport& r) {
  const auto& sc = r.scenario;
  for (const auto& rec : r.records) {
    std::string note = rec.error;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '"', '\'');
    out << sc.N << ',' << num(sc.rho) << ',' << scale_name(sc.scale1) << ',' << scale_name(sc.scale2) << ','
        << rec.rep << ',' << estimator_name(rec.estimator) << ',' << num(rec.rho_hat) << ',' << num(rec.se) << ','
        << (rec.converged ? 1 : 0) << ',' << (rec.flagged ? 1 : 0) << ',' << rec.cutoffs1 << ',' << rec.cutoffs2
        << ',' << num(r.bound) << ',' << note << '\n';
  }
}

void write_summary_header(std::ostream& out) {
  out << "N,rho,scale1,scale2,estimator,used,excluded,mean,bias,sd,mean_se,mcse,bound\n";
}

void write_summary(std::ostream& out, const SimReport& r) {
  const auto& sc = r.scenario;
  for (const auto& s : r.summary) {
    out << sc.N << ',' << num(sc.rho) << ',' << scale_name(sc.scale1) << ',' << scale_name(sc.scale2) << ','
        << estimator_name(s.estimator) << ',' << s.used << ',' << s.excluded << ',' << num(s.mean) << ','
        << num(s.bias) << ',' << num(s.sd) << ',' << num(s.mean_se) << ',' << num(s.mcse) << ',' << num(r.bound)
        << '\n';
  }
}

void write_summary_text(std::ostream& out, const std::vector<SimReport>& reports) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%4s %5s %-10s %-10s %-7s %5s %4s %8s %8s %8s %8s %8s\n", "N", "rho", "scale1",
                "scale2", "method", "used", "excl", "mean", "bias", "sd", "mean_se", "bound");
  out << buf;
  for (const auto& r : reports) {
    const auto& sc = r.scenario;
    for (const auto& s : r.summary) {
      std::snprintf(buf, sizeof buf, "%4zu %5.2f %-10s %-10s %-7s %5zu %4zu %8.4f %8.4f %8.4f %8.4f %8.4f\n", sc.N,
                    sc.rho, scale_name(sc.scale1), scale_name(sc.scale2), estimator_name(s.estimator), s.used,
                    s.excluded, s.mean, s.bias, s.sd, s.mean_se, r.bound);
      out << buf;
    }
    for (const auto& s : r.summary)
      if (s.excluded > 0) {
        std::snprintf(buf, sizeof buf, "  note: %zu %s replication(s) excluded (non-converged or failed)\n",
                      s.excluded, estimator_name(s.estimator));
        out << buf;
      }
  }
}

}  // namespace npn::polycor
