#include "npn/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "npn/checks.hpp"
#include "npn/error.hpp"
#include "npn/estimate.hpp"
#include "npn/model_io.hpp"
#include "npn/polycor.hpp"
#include "npn/report.hpp"

namespace npn::cli {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("missing --") + what + " argument");
  if (!fs::is_regular_file(path)) throw Error(std::string(what) + " file '" + path + "' does not exist");
}

}  // namespace

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  FitResult fit;
  std::size_t n_obs = 0;
  try {
    require_file(cfg.schema, "schema");
    require_file(cfg.data, "data");
    const Schema schema = read_schema(cfg.schema);
    const Dataset data = ingest_csv(cfg.data, schema);
    n_obs = data.rows();
    ModelSpec spec;
    if (cfg.model.empty()) {
      spec = default_model(data);
    } else {
      require_file(cfg.model, "model");
      spec = read_model(cfg.model, data);
    }
    if (cfg.seed) spec.qmc.seed = *cfg.seed;
    if (cfg.qmc_m) {
      if (*cfg.qmc_m == 0) throw Error("--qmc-m must be positive");
      spec.qmc.M = *cfg.qmc_m;
    }
    const Strategy strategy = parse_strategy(cfg.strategy);
    report::prepare_output(cfg.out, report::fit_files(), cfg.overwrite);

    std::optional<Eigen::VectorXd> init;
    if (!cfg.init.empty()) {
      if (strategy != Strategy::Full) throw Error("--init only applies to --strategy full");
      if (cfg.init == "from-pseudo") {
        FitOptions po;
        po.compute_se = false;
        init = fit_pseudo(spec, data, po).natural;
      } else {
        require_file(cfg.init, "init");
        const Model m(spec, data);
        init = report::read_parameters(cfg.init, m.layout().names);
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    fit = npn::fit(strategy, spec, data, FitOptions{}, init);
    fit.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report::write_fit(cfg.out, fit, n_obs);
  } catch (const std::exception& e) {
    err << "npn fit: " << e.what() << '\n';
    return kInputError;
  }
  report::write_summary(out, fit, n_obs);
  out << "results written to " << cfg.out << '\n';
  if (!fit.converged) {
    err << "npn fit: optimisation did not converge (" << fit.message << ")\n";
    return kNotConverged;
  }
  return kOk;
}

namespace {

std::vector<polycor::SimScenario> scenarios_from(const RunConfig& cfg) {
  std::vector<std::size_t> sizes = cfg.sizes;
  std::vector<double> rhos = cfg.rhos;
  std::vector<std::string> scales = cfg.scales;
  std::vector<std::string> estimators = cfg.estimators;
  std::size_t reps = cfg.reps;
  std::uint64_t seed = cfg.seed.value_or(1);
  std::size_t M = cfg.qmc_m.value_or(QmcConfig{}.M);
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!cfg.grid.empty()) {
    require_file(cfg.grid, "grid");
    std::ifstream in(cfg.grid);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      sizes = j.value("N", sizes);
      rhos = j.value("rho", rhos);
      scales = j.value("scales", scales);
      estimators = j.value("estimators", estimators);
      reps = j.value("replications", reps);
      if (!cfg.seed) seed = j.value("seed", seed);
      if (!cfg.qmc_m) M = j.value("M", M);
      if (j.contains("pairs"))
        for (const auto& p : j["pairs"]) pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("malformed scenario grid: ") + e.what());
    }
  }
  if (pairs.empty())
    for (std::size_t a = 0; a < scales.size(); ++a)
      for (std::size_t b = a; b < scales.size(); ++b) pairs.emplace_back(scales[a], scales[b]);
  if (reps == 0) throw Error("replications must be positive");
  if (M == 0) throw Error("--qmc-m must be positive");
  std::vector<polycor::SimScenario> out;
  for (std::size_t N : sizes)
    for (double rho : rhos)
      for (const auto& [s1, s2] : pairs) {
        if (N < 3) throw Error("sample size must be at least 3");
        if (!(std::abs(rho) < 1.0)) throw Error("correlations must lie in (-1, 1)");
        polycor::SimScenario sc;
        sc.N = N;
        sc.rho = rho;
        sc.scale1 = polycor::parse_scale(s1);
        sc.scale2 = polycor::parse_scale(s2);
        sc.replications = reps;
        sc.seed = seed;
        sc.qmc.M = M;
        const auto ok = polycor::applicable(sc.scale1, sc.scale2);
        for (const auto& e : estimators) {
          const auto est = polycor::parse_estimator(e);
          if (std::find(ok.begin(), ok.end(), est) != ok.end()) sc.estimators.push_back(est);
        }
        if (!estimators.empty() && sc.estimators.empty()) continue;
        out.push_back(sc);
      }
  if (out.empty()) throw Error("scenario grid is empty");
  return out;
}

}  // namespace

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<polycor::SimScenario> grid;
  const std::vector<std::string> files = {"records.csv", "summary.csv", "summary.txt", "timing.txt"};
  try {
    grid = scenarios_from(cfg);
    report::prepare_output(cfg.out, files, cfg.overwrite);
  } catch (const std::exception& e) {
    err << "npn simulate: " << e.what() << '\n';
    return kInputError;
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<polycor::SimReport> reports;
  for (const auto& sc : grid) reports.push_back(polycor::run_scenario(sc));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    std::ofstream rec(fs::path(cfg.out) / "records.csv", std::ios::binary);
    std::ofstream sum(fs::path(cfg.out) / "summary.csv", std::ios::binary);
    std::ofstream txt(fs::path(cfg.out) / "summary.txt", std::ios::binary);
    std::ofstream tim(fs::path(cfg.out) / "timing.txt", std::ios::binary);
    if (!rec || !sum || !txt || !tim) throw Error("cannot write into '" + cfg.out + "'");
    polycor::write_records_header(rec);
    polycor::write_summary_header(sum);
    for (const auto& r : reports) {
      polycor::write_records(rec, r);
      polycor::write_summary(sum, r);
    }
    polycor::write_summary_text(txt, reports);
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_time_seconds %.3f\n", secs);
    tim << buf;
  } catch (const std::exception& e) {
    err << "npn simulate: " << e.what() << '\n';
    return kInputError;
  }
  polycor::write_summary_text(out, reports);
  out << "results written to " << cfg.out << '\n';
  return kOk;
}

int cmd_check(const RunConfig&, std::ostream& out, std::ostream& err) {
  std::vector<checks::CheckResult> results;
  try {
    results = checks::run_battery();
  } catch (const std::exception& e) {
    err << "npn check: " << e.what() << '\n';
    return kCheckFailed;
  }
  bool ok = true;
  for (const auto& r : results) {
    checks::print(out, r);
    ok = ok && r.pass;
  }
  out << (ok ? "all checks passed\n" : "some checks failed\n");
  return ok ? kOk : kCheckFailed;
}

int main(int argc, char** argv) {
  if (const char* t = std::getenv("NPN_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) omp_set_num_threads(n);
  }
  CLI::App app{"Nonparanormal models: fitting, simulation and self-checks"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "QMC seed (fit) or master seed (simulate)");
    sub->add_option("--qmc-m", cfg.qmc_m, "number of QMC replicates");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_flag("--overwrite", cfg.overwrite, "replace existing output files");
  };
  auto* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  fit->add_option("--data", cfg.data, "CSV data file");
  fit->add_option("--schema", cfg.schema, "JSON schema mapping columns to roles");
  fit->add_option("--model", cfg.model, "JSON model specification");
  fit->add_option("--strategy", cfg.strategy, "full | pseudo | acs | sequential");
  fit->add_option("--init", cfg.init, "from-pseudo or a parameters.csv file");
  add_common(fit);

  auto* sim = app.add_subcommand("simulate", "run the polychoric correlation simulation");
  sim->add_option("--grid", cfg.grid, "JSON scenario grid");
  sim->add_option("--n", cfg.sizes, "sample sizes")->delimiter(',');
  sim->add_option("--rho", cfg.rhos, "latent correlations")->delimiter(',');
  sim->add_option("--scales", cfg.scales, "measurement scales (continuous, ordinal5, binary)")->delimiter(',');
  sim->add_option("--estimators", cfg.estimators, "restrict to these estimators")->delimiter(',');
  sim->add_option("--reps", cfg.reps, "replications per scenario");
  add_common(sim);

  auto* chk = app.add_subcommand("check", "run the verification battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }
  if (fit->parsed()) return cmd_fit(cfg, std::cout, std::cerr);
  if (sim->parsed()) return cmd_simulate(cfg, std::cout, std::cerr);
  if (chk->parsed()) return cmd_check(cfg, std::cout, std::cerr);
  return kInputError;
}

}  // namespace npn::cli
