#include "npn/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "npn/csv.hpp"
#include "npn/error.hpp"

namespace npn {

ResponseDatum ResponseDatum::exact(double v) {
  if (!std::isfinite(v)) throw DomainError("exact response must be finite");
  return {Kind::Exact, v, v};
}

ResponseDatum ResponseDatum::interval(double lower, double upper) {
  if (!(lower < upper)) throw DomainError("interval requires lower < upper");
  return {Kind::Interval, lower, upper};
}

ResponseDatum ResponseDatum::right_censored(double lower) {
  if (!std::isfinite(lower)) throw DomainError("censoring bound must be finite");
  return {Kind::RightCensored, lower, kInf};
}

ResponseDatum ResponseDatum::missing() { return {Kind::Interval, -kInf, kInf}; }

namespace {

std::size_t grid_index(const std::vector<double>& grid, double v) {
  auto it = std::lower_bound(grid.begin(), grid.end(), v);
  return static_cast<std::size_t>(it - grid.begin()) + 1;
}

}  // namespace

Dataset::Dataset(std::vector<std::string> names, std::vector<VariableKind> kinds,
                 std::vector<ResponseDatum> cells, std::size_t n_rows,
                 std::vector<std::string> covariate_names, Eigen::MatrixXd covariates)
    : n_(n_rows),
      cells_(std::move(cells)),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates)) {
  const std::size_t J = names.size();
  if (kinds.size() != J) throw DimensionError("names and kinds differ in length");
  if (cells_.size() != n_ * J) throw DimensionError("cell count does not match N x J");
  if (covariates_.size() == 0) covariates_.resize(static_cast<Eigen::Index>(n_), 0);
  if (static_cast<std::size_t>(covariates_.rows()) != n_ ||
      static_cast<std::size_t>(covariates_.cols()) != covariate_names_.size())
    throw DimensionError("covariate matrix does not match N x C");

  columns_.resize(J);
  boxes_.resize(cells_.size());
  for (std::size_t j = 0; j < J; ++j) {
    VariableMeta& meta = columns_[j];
    meta.name = names[j];
    meta.kind = kinds[j];
    std::vector<double> grid;
    for (std::size_t i = 0; i < n_; ++i) {
      const ResponseDatum& d = cells_[i * J + j];
      if (std::isfinite(d.lower)) grid.push_back(d.lower);
      if (std::isfinite(d.upper)) grid.push_back(d.upper);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty()) throw SchemaError("column '" + meta.name + "' has no finite values");
    if (meta.kind == VariableKind::Discrete && grid.size() < 2)
      throw SchemaError("discrete column '" + meta.name + "' needs at least two levels");
    meta.grid = std::move(grid);

    const int K = static_cast<int>(meta.grid.size());
    for (std::size_t i = 0; i < n_; ++i) {
      const ResponseDatum& d = cells_[i * J + j];
      CellBox& b = boxes_[i * J + j];
      switch (d.kind) {
        case ResponseDatum::Kind::Exact: {
          const int r = static_cast<int>(grid_index(meta.grid, d.lower));
          b = {r - 1, r, r, false};
          break;
        }
        case ResponseDatum::Kind::Interval: {
          const int lo = std::isfinite(d.lower) ? static_cast<int>(grid_index(meta.grid, d.lower)) : 0;
          const int hi = std::isfinite(d.upper) ? static_cast<int>(grid_index(meta.grid, d.upper)) : K;
          b = {lo, hi, 0, std::isfinite(d.upper) && hi == K};
          break;
        }
        case ResponseDatum::Kind::RightCensored: {
          const int k = static_cast<int>(grid_index(meta.grid, d.lower));
          b = {k < K ? k : K - 1, K, 0, false};
          break;
        }
      }
      if (b.lower >= b.upper)
        throw DomainError("degenerate box side in column '" + meta.name + "'");
    }
  }
}

std::size_t Dataset::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns_.size(); ++j)
    if (columns_[j].name == name) return j;
  throw SchemaError("unknown response column '" + name + "'");
}

bool Dataset::has_column(const std::string& name) const {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const VariableMeta& m) { return m.name == name; });
}

std::size_t Dataset::covariate_index(const std::string& name) const {
  for (std::size_t c = 0; c < covariate_names_.size(); ++c)
    if (covariate_names_[c] == name) return c;
  throw SchemaError("unknown covariate '" + name + "'");
}

bool Dataset::column_exact(std::size_t j) const {
  for (std::size_t i = 0; i < n_; ++i)
    if (!at(i, j).is_exact()) return false;
  return true;
}

Dataset Dataset::select(const std::vector<std::size_t>& cols) const {
  std::vector<std::string> names;
  std::vector<VariableKind> kinds;
  std::vector<ResponseDatum> cells;
  cells.reserve(n_ * cols.size());
  for (std::size_t j : cols) {
    names.push_back(columns_.at(j).name);
    kinds.push_back(columns_[j].kind);
  }
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j : cols) cells.push_back(at(i, j));
  return Dataset(names, kinds, std::move(cells), n_, covariate_names_, covariates_);
}

bool Dataset::operator==(const Dataset& other) const {
  if (n_ != other.n_ || cols() != other.cols()) return false;
  for (std::size_t j = 0; j < cols(); ++j) {
    if (columns_[j].name != other.columns_[j].name || columns_[j].kind != other.columns_[j].kind ||
        columns_[j].grid != other.columns_[j].grid)
      return false;
  }
  return cells_ == other.cells_ && covariate_names_ == other.covariate_names_ &&
         covariates_ == other.covariates_;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t == "Inf" || t == "+Inf" || t == "inf") {
    out = kInf;
    return true;
  }
  if (t == "-Inf" || t == "-inf") {
    out = -kInf;
    return true;
  }
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::string format_double(double v) {
  if (v == kInf) return "Inf";
  if (v == -kInf) return "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ResponseDatum parse_token(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string token = trim(raw);
  if (token == "NA") return ResponseDatum::missing();
  double a = 0.0;
  double b = 0.0;
  if (!token.empty() && token.front() == '>') {
    if (!parse_number(token.substr(1), a) || !std::isfinite(a))
      throw ParseError("malformed right-censoring token '" + token + "'", row, col);
    return ResponseDatum::right_censored(a);
  }
  if (!token.empty() && token.front() == '(') {
    const auto comma = token.find(',');
    if (token.back() != ']' || comma == std::string::npos ||
        !parse_number(token.substr(1, comma - 1), a) ||
        !parse_number(token.substr(comma + 1, token.size() - comma - 2), b) || !(a < b) ||
        a == kInf || b == -kInf)
      throw ParseError("malformed interval token '" + token + "'", row, col);
    return ResponseDatum::interval(a, b);
  }
  if (!parse_number(token, a) || !std::isfinite(a))
    throw ParseError("malformed cell '" + token + "'", row, col);
  return ResponseDatum::exact(a);
}

std::string format_token(const ResponseDatum& d) {
  switch (d.kind) {
    case ResponseDatum::Kind::Exact:
      return format_double(d.lower);
    case ResponseDatum::Kind::RightCensored:
      return ">" + format_double(d.lower);
    case ResponseDatum::Kind::Interval:
      if (d.is_missing()) return "NA";
      return "(" + format_double(d.lower) + "," + format_double(d.upper) + "]";
  }
  return {};
}

Schema parse_schema(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (j.contains("columns")) j = j["columns"];
  if (!j.is_object()) throw SchemaError("schema must map column names to kinds");
  Schema schema;
  for (auto& [name, kind] : j.items()) {
    const std::string k = kind.is_string() ? kind.get<std::string>() : std::string();
    if (k == "continuous")
      schema[name] = ColumnRole::Continuous;
    else if (k == "discrete")
      schema[name] = ColumnRole::Discrete;
    else if (k == "covariate")
      schema[name] = ColumnRole::Covariate;
    else
      throw SchemaError("column '" + name + "': kind must be continuous, discrete or covariate");
  }
  return schema;
}

Schema read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

std::string schema_json(const Dataset& data) {
  nlohmann::ordered_json j;
  for (const auto& c : data.columns())
    j[c.name] = c.kind == VariableKind::Discrete ? "discrete" : "continuous";
  for (const auto& c : data.covariate_names()) j[c] = "covariate";
  return j.dump(2) + "\n";
}

Dataset ingest_csv(std::istream& in, const Schema& schema) {
  const auto rows = csv::read(in);
  if (rows.empty()) throw SchemaError("CSV has no header row");
  const csv::Row& header = rows.front();
  std::vector<std::size_t> resp_cols;
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> names;
  std::vector<std::string> cov_names;
  std::vector<VariableKind> kinds;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    auto it = schema.find(name);
    if (it == schema.end()) throw SchemaError("column '" + name + "' is not declared in the schema");
    if (it->second == ColumnRole::Covariate) {
      cov_cols.push_back(c);
      cov_names.push_back(name);
    } else {
      resp_cols.push_back(c);
      names.push_back(name);
      kinds.push_back(it->second == ColumnRole::Discrete ? VariableKind::Discrete
                                                         : VariableKind::Continuous);
    }
  }
  for (const auto& [name, role] : schema) {
    (void)role;
    if (std::find_if(header.begin(), header.end(),
                     [&](const std::string& h) { return trim(h) == name; }) == header.end())
      throw SchemaError("schema column '" + name + "' missing from CSV header");
  }
  const std::size_t N = rows.size() - 1;
  if (N == 0) throw SchemaError("CSV has no data rows");
  std::vector<ResponseDatum> cells;
  cells.reserve(N * resp_cols.size());
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(cov_cols.size()));
  for (std::size_t i = 0; i < N; ++i) {
    const csv::Row& row = rows[i + 1];
    if (row.size() != header.size())
      throw ParseError("row has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(header.size()),
                       i + 1, row.size());
    for (std::size_t c : resp_cols) cells.push_back(parse_token(row[c], i + 1, c + 1));
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      double v = 0.0;
      if (!parse_number(row[cov_cols[k]], v) || !std::isfinite(v))
        throw ParseError("covariate must be a finite number", i + 1, cov_cols[k] + 1);
      cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  for (std::size_t k = 0; k < resp_cols.size(); ++k) {
    bool any = false;
    for (std::size_t i = 0; i < N && !any; ++i) any = !cells[i * resp_cols.size() + k].is_missing();
    if (!any) throw SchemaError("column '" + names[k] + "' is empty");
  }
  return Dataset(std::move(names), std::move(kinds), std::move(cells), N, std::move(cov_names),
                 std::move(cov));
}

Dataset ingest_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open data file " + path.string());
  return ingest_csv(in, schema);
}

void write_csv(std::ostream& out, const Dataset& data) {
  csv::Row header;
  for (const auto& c : data.columns()) header.push_back(c.name);
  for (const auto& c : data.covariate_names()) header.push_back(c);
  csv::write_row(out, header);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    csv::Row row;
    for (std::size_t j = 0; j < data.cols(); ++j) row.push_back(format_token(data.at(i, j)));
    for (std::size_t c = 0; c < data.covariate_names().size(); ++c)
      row.push_back(format_double(data.covariate(i, c)));
    csv::write_row(out, row);
  }
}

std::vector<LatentBox> boxes_for(const Dataset& data, const std::vector<Eigen::VectorXd>& theta) {
  const std::size_t J = data.cols();
  if (theta.size() != J) throw DimensionError("need one step vector per column");
  for (std::size_t j = 0; j < J; ++j) {
    const auto K = static_cast<Eigen::Index>(data.column(j).levels());
    if (theta[j].size() != K - 1) throw DimensionError("step vector length must be K(j) - 1");
    for (Eigen::Index k = 1; k < theta[j].size(); ++k)
      if (!(theta[j][k] > theta[j][k - 1]))
        throw ConstraintViolation("step values of column '" + data.column(j).name +
                                  "' are not strictly increasing");
  }
  auto step = [&](std::size_t j, int k) {
    const int K = static_cast<int>(data.column(j).levels());
    if (k <= 0) return -kInf;
    if (k >= K) return kInf;
    return theta[j][k - 1];
  };
  std::vector<LatentBox> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out[i].lower.resize(static_cast<Eigen::Index>(J));
    out[i].upper.resize(static_cast<Eigen::Index>(J));
    for (std::size_t j = 0; j < J; ++j) {
      const CellBox& b = data.box(i, j);
      out[i].lower[static_cast<Eigen::Index>(j)] = step(j, b.lower);
      out[i].upper[static_cast<Eigen::Index>(j)] = step(j, b.upper);
    }
  }
  return out;
}

std::vector<std::size_t> cumulative_counts(const Dataset& data, std::size_t j) {
  std::vector<std::size_t> counts(data.column(j).levels(), 0);
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (data.at(i, j).is_exact()) ++counts[static_cast<std::size_t>(data.rank(i, j) - 1)];
  for (std::size_t k = 1; k < counts.size(); ++k) counts[k] += counts[k - 1];
  return counts;
}

}  // namespace npn
