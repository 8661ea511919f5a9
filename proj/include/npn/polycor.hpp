#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "npn/data_model.hpp"
#include "npn/likelihood.hpp"
#include "npn/qmc.hpp"

namespace npn::polycor {

enum class Scale { Continuous, Ordinal5, Binary };
enum class Estimator { Pseudo, Npn, Smooth, Flow, Mixed };

const char* scale_name(Scale s);
Scale parse_scale(const std::string& s);
const char* estimator_name(Estimator e);
Estimator parse_estimator(const std::string& s);

struct SimScenario {
  std::size_t N = 50;
  double rho = 0.5;
  Scale scale1 = Scale::Continuous;
  Scale scale2 = Scale::Continuous;
  std::size_t replications = 100;
  std::uint64_t seed = 1;
  QmcConfig qmc;
  int bernstein_order = 6;
  std::vector<Estimator> estimators;  // empty: every estimator applicable to the scales
};

struct Sample {
  Eigen::MatrixXd latent;  // N x 2 normal draws
  Eigen::MatrixXd y;       // N x 2 chi-square(2) responses
};

/// Latent bivariate normal with correlation rho mapped to chi-square(2) margins.
Sample simulate_pair(std::size_t N, double rho, std::uint64_t seed);

/// Chi-square(2) quantile of Phi(z), computed without cancellation.
double chisq2_from_normal(double z);

struct Discretized {
  std::vector<double> values;   // category codes 0, 1, ...
  std::vector<double> cutoffs;  // sorted
  bool redrawn = false;
  bool flagged = false;  // still fewer categories than requested after the redraw
};

/// Cut at random empirical quantiles drawn uniformly from [0.2, 0.8].
Discretized discretize(const Eigen::VectorXd& x, Scale scale, std::uint64_t seed);

/// Estimators that apply to a pair of scales.
std::vector<Estimator> applicable(Scale s1, Scale s2);

struct SimRecord {
  std::size_t rep = 0;
  Estimator estimator = Estimator::Npn;
  double rho_hat = 0.0;
  double se = 0.0;
  bool converged = false;
  bool flagged = false;
  std::string cutoffs1;
  std::string cutoffs2;
  std::string error;
};

struct SimSummary {
  Estimator estimator = Estimator::Npn;
  std::size_t used = 0;
  std::size_t excluded = 0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double mcse = 0.0;  // Monte-Carlo standard error of the mean
};

struct SimReport {
  SimScenario scenario;
  double bound = 0.0;  // (1 - rho^2) / sqrt(N)
  std::vector<SimRecord> records;
  std::vector<SimSummary> summary;
};

double efficiency_bound(double rho, std::size_t N);

/// Model specification used by one estimator for the given scales.
ModelSpec estimator_spec(Estimator e, Scale s1, Scale s2, const Dataset& data, const SimScenario& sc);

/// Dataset for one replication (column order puts a continuous column first).
Dataset replication_data(const SimScenario& sc, std::size_t rep, bool* flagged = nullptr,
                         std::string* cut1 = nullptr, std::string* cut2 = nullptr);

SimReport run_scenario(const SimScenario& sc, bool parallel = true);

void write_records_header(std::ostream& out);
void write_records(std::ostream& out, const SimReport& r);
void write_summary_header(std::ostream& out);
void write_summary(std::ostream& out, const SimReport& r);
void write_summary_text(std::ostream& out, const std::vector<SimReport>& reports);

}  // namespace npn::polycor
