#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace npn::cli {

enum ExitCode { kOk = 0, kInputError = 1, kNotConverged = 2, kCheckFailed = 3 };

struct RunConfig {
  std::string command;
  std::string data;
  std::string schema;
  std::string model;
  std::string strategy = "full";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> qmc_m;
  std::string out = "npn-out";
  bool overwrite = false;
  std::string init;  // "", "from-pseudo", or a parameters.csv path

  // simulate
  std::string grid;  // optional JSON scenario grid
  std::vector<std::size_t> sizes = {10, 20, 50};
  std::vector<double> rhos = {0.5};
  std::vector<std::string> scales = {"continuous", "ordinal5", "binary"};
  std::vector<std::string> estimators;
  std::size_t reps = 100;
};

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; honours NPN_THREADS for the worker count.
int main(int argc, char** argv);

}  // namespace npn::cli
