#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace npn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// One observation in one dimension. Missing values are stored as the
/// interval (-inf, +inf).
struct ResponseDatum {
  enum class Kind { Exact, Interval, RightCensored };

  Kind kind = Kind::Exact;
  double lower = 0.0;  // value for Exact, open lower end otherwise
  double upper = 0.0;  // value for Exact, closed upper end for Interval

  static ResponseDatum exact(double v);
  static ResponseDatum interval(double lower, double upper);
  static ResponseDatum right_censored(double lower);
  static ResponseDatum missing();

  bool is_exact() const { return kind == Kind::Exact; }
  bool is_missing() const {
    return kind == Kind::Interval && lower == -kInf && upper == kInf;
  }
  bool operator==(const ResponseDatum&) const = default;
};

enum class VariableKind { Continuous, Discrete };

struct VariableMeta {
  std::string name;
  VariableKind kind = VariableKind::Continuous;
  std::vector<double> grid;  // strictly increasing unique values
  std::size_t levels() const { return grid.size(); }
};

/// Grid indices bounding the latent box side of one cell. Index 0 stands for
/// -inf and index K for +inf, so the side is (theta[lower], theta[upper]].
/// An interval closed at the largest grid value also gets upper = K, with
/// `closed_top` set: step margins keep +inf there, smooth margins use h(y_K).
struct CellBox {
  int lower = 0;
  int upper = 0;
  int rank = 0;  // 1-based rank for exact data, 0 otherwise
  bool closed_top = false;
};

/// N x J mixed-type responses plus optional covariates. Immutable once built.
class Dataset {
 public:
  Dataset() = default;

  /// Builds grids and rank indices. `cells` is row-major N x J.
  Dataset(std::vector<std::string> names, std::vector<VariableKind> kinds,
          std::vector<ResponseDatum> cells, std::size_t n_rows,
          std::vector<std::string> covariate_names = {},
          Eigen::MatrixXd covariates = {});

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return columns_.size(); }
  const VariableMeta& column(std::size_t j) const { return columns_[j]; }
  const std::vector<VariableMeta>& columns() const { return columns_; }
  const ResponseDatum& at(std::size_t i, std::size_t j) const { return cells_[i * cols() + j]; }
  const CellBox& box(std::size_t i, std::size_t j) const { return boxes_[i * cols() + j]; }
  int rank(std::size_t i, std::size_t j) const { return box(i, j).rank; }

  std::size_t column_index(const std::string& name) const;
  bool has_column(const std::string& name) const;

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::size_t covariate_index(const std::string& name) const;
  double covariate(std::size_t i, std::size_t c) const { return covariates_(i, c); }
  const Eigen::MatrixXd& covariates() const { return covariates_; }

  /// True when every cell of column j is exact.
  bool column_exact(std::size_t j) const;

  /// Subset of response columns (covariates kept).
  Dataset select(const std::vector<std::size_t>& cols) const;

  bool operator==(const Dataset& other) const;

 private:
  std::size_t n_ = 0;
  std::vector<VariableMeta> columns_;
  std::vector<ResponseDatum> cells_;
  std::vector<CellBox> boxes_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
};

enum class ColumnRole { Continuous, Discrete, Covariate };
using Schema = std::map<std::string, ColumnRole>;

/// Parses a single CSV token: number, "(a,b]", ">a", or "NA".
ResponseDatum parse_token(const std::string& token, std::size_t row, std::size_t col);
std::string format_token(const ResponseDatum& d);

Schema read_schema(const std::filesystem::path& path);
Schema parse_schema(const std::string& json_text);
std::string schema_json(const Dataset& data);

Dataset ingest_csv(const std::filesystem::path& path, const Schema& schema);
Dataset ingest_csv(std::istream& in, const Schema& schema);
void write_csv(std::ostream& out, const Dataset& data);

struct LatentBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Latent integration boxes given step values theta[j] = (theta_j1..theta_j,K-1).
std::vector<LatentBox> boxes_for(const Dataset& data, const std::vector<Eigen::VectorXd>& theta);

/// Cumulative counts c_k = #{i : exact Y_ij <= grid_k} over exact cells.
std::vector<std::size_t> cumulative_counts(const Dataset& data, std::size_t j);

}  // namespace npn
