#include "npn/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "npn/csv.hpp"
#include "npn/error.hpp"
#include "npn/model_io.hpp"

namespace npn::report {

using Eigen::VectorXd;

const std::vector<std::string>& fit_files() {
  static const std::vector<std::string> files = {"parameters.csv", "lambda.csv", "rho.csv", "summary.txt",
                                                 "model.json", "timing.txt"};
  return files;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_parameters(std::ostream& out, const FitResult& fit) {
  out << "name,estimate,se\n";
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << csv::quote(fit.names[k]) << ',' << format_number(fit.natural[i]) << ','
        << format_number(fit.se.size() ? fit.se[i] : std::nan("")) << '\n';
  }
}

void write_lambda(std::ostream& out, const FitResult& fit) {
  out << "row,col,lambda,se\n";
  const std::size_t J = fit.spec.columns.size();
  const std::size_t off = fit.names.size() - chol::lambda_count(J);
  for (std::size_t r = 1; r < J; ++r)
    for (std::size_t c = 0; c < r; ++c) {
      const auto i = static_cast<Eigen::Index>(off + chol::lambda_index(r, c));
      out << csv::quote(fit.spec.columns[r]) << ',' << csv::quote(fit.spec.columns[c]) << ','
          << format_number(fit.natural[i]) << ',' << format_number(fit.se.size() ? fit.se[i] : std::nan(""))
          << '\n';
    }
}

void write_rho(std::ostream& out, const FitResult& fit) {
  out << "row,col,rho,se\n";
  for (const auto& e : fit.rho_table)
    out << csv::quote(e.row) << ',' << csv::quote(e.col) << ',' << format_number(e.rho) << ','
        << format_number(e.se) << '\n';
}

namespace {

std::string cell(double est, double se) {
  char buf[64];
  if (std::isfinite(se))
    std::snprintf(buf, sizeof buf, "%8.3f (%5.3f)", est, se);
  else
    std::snprintf(buf, sizeof buf, "%8.3f (  -  )", est);
  return buf;
}

void lower_table(std::ostream& out, const FitResult& fit, const std::vector<std::string>& cols,
                 const std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>>& v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s", "");
  out << buf;
  for (std::size_t c = 0; c + 1 < cols.size(); ++c) {
    std::snprintf(buf, sizeof buf, " %16s", cols[c].c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t r = 1; r < cols.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-10s", cols[r].c_str());
    out << buf;
    for (std::size_t c = 0; c < r; ++c) {
      const auto& e = v.at({r, c});
      out << ' ' << cell(e.first, e.second);
    }
    out << '\n';
  }
  (void)fit;
}

}  // namespace

void write_summary(std::ostream& out, const FitResult& fit, std::size_t n_obs) {
  const std::size_t J = fit.spec.columns.size();
  char buf[256];
  out << "strategy:       " << strategy_name(fit.strategy) << '\n';
  out << "likelihood:     " << flavour_name(fit.spec.flavour);
  if (fit.spec.flavour == Flavour::Mixed) out << " (first " << fit.spec.split << " columns by density)";
  out << '\n';
  out << "constraint:     s = " << (fit.spec.constraint == Constraint::UnitDiagonal ? 1 : 2) << '\n';
  out << "observations:   " << n_obs << '\n';
  out << "columns:        " << J << '\n';
  out << "parameters:     " << fit.names.size() << '\n';
  std::snprintf(buf, sizeof buf, "log-likelihood: %.6f\n", fit.loglik);
  out << buf;
  std::snprintf(buf, sizeof buf, "converged:      %s (%zu iterations, gradient sup-norm %.3g)\n",
                fit.converged ? "yes" : "no", fit.iterations, fit.grad_norm);
  out << buf;
  if (!fit.converged) out << "message:        " << fit.message << '\n';
  if (!fit.floored.empty()) out << "floored terms:  " << fit.floored.size() << '\n';
  if (!fit.se_available) out << "standard errors unavailable (Hessian not positive definite or not computed)\n";
  if (J < 2) return;

  const std::size_t off = fit.names.size() - chol::lambda_count(J);
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> lam, rho;
  std::size_t k = 0;
  for (std::size_t r = 1; r < J; ++r)
    for (std::size_t c = 0; c < r; ++c) {
      const auto i = static_cast<Eigen::Index>(off + chol::lambda_index(r, c));
      lam[{r, c}] = {fit.natural[i], fit.se.size() ? fit.se[i] : std::nan("")};
      rho[{r, c}] = {fit.rho_table[k].rho, fit.rho_table[k].se};
      ++k;
    }
  out << "\nlambda estimates (standard errors)\n";
  lower_table(out, fit, fit.spec.columns, lam);
  out << "\nlatent correlations (delta-method standard errors)\n";
  lower_table(out, fit, fit.spec.columns, rho);
}

void prepare_output(const std::filesystem::path& dir, const std::vector<std::string>& files, bool overwrite) {
  std::error_code ec;
  if (!std::filesystem::exists(dir)) {
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  }
  if (overwrite) return;
  for (const auto& f : files)
    if (std::filesystem::exists(dir / f))
      throw Error("output file '" + (dir / f).string() + "' exists; pass --overwrite to replace it");
}

void write_fit(const std::filesystem::path& dir, const FitResult& fit, std::size_t n_obs) {
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  {
    auto out = open("parameters.csv");
    write_parameters(out, fit);
  }
  {
    auto out = open("lambda.csv");
    write_lambda(out, fit);
  }
  {
    auto out = open("rho.csv");
    write_rho(out, fit);
  }
  {
    auto out = open("summary.txt");
    write_summary(out, fit, n_obs);
  }
  {
    auto out = open("model.json");
    out << model_json(fit.spec) << '\n';
  }
  {
    auto out = open("timing.txt");
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_time_seconds %.3f\n", fit.wall_time);
    out << buf;
  }
}

VectorXd read_parameters(const std::filesystem::path& path, const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open parameter file '" + path.string() + "'");
  const auto rows = csv::read(in);
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "name")
    throw SchemaError("parameter file '" + path.string() + "' lacks a name,estimate header");
  std::map<std::string, double> values;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) throw ParseError("short row in parameter file", r, 0);
    try {
      values[rows[r][0]] = std::stod(rows[r][1]);
    } catch (const std::exception&) {
      throw ParseError("bad estimate '" + rows[r][1] + "'", r, 1);
    }
  }
  VectorXd v(static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = values.find(names[k]);
    if (it == values.end()) throw SchemaError("parameter '" + names[k] + "' missing from '" + path.string() + "'");
    v[static_cast<Eigen::Index>(k)] = it->second;
  }
  return v;
}

}  // namespace npn::report
