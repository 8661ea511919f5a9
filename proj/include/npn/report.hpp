#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "npn/estimate.hpp"

namespace npn::report {

/// Files written by write_fit, relative to the output directory.
const std::vector<std::string>& fit_files();

void write_parameters(std::ostream& out, const FitResult& fit);
void write_lambda(std::ostream& out, const FitResult& fit);
void write_rho(std::ostream& out, const FitResult& fit);
void write_summary(std::ostream& out, const FitResult& fit, std::size_t n_obs);

/// Writes every fit file (wall time goes to timing.txt only, so the other
/// files are reproducible byte for byte).
void write_fit(const std::filesystem::path& dir, const FitResult& fit, std::size_t n_obs);

/// Reads estimates back from parameters.csv, ordered as `names`.
Eigen::VectorXd read_parameters(const std::filesystem::path& path, const std::vector<std::string>& names);

/// Throws if any of `files` exists in `dir` and overwriting is not allowed;
/// creates `dir` when absent.
void prepare_output(const std::filesystem::path& dir, const std::vector<std::string>& files, bool overwrite);

std::string format_number(double v);

}  // namespace npn::report
