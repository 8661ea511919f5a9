#include "npn/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "npn/error.hpp"

namespace npn {

namespace {

Constraint parse_constraint(const nlohmann::json& v) {
  if (v.is_number_integer()) {
    const int s = v.get<int>();
    if (s == 1) return Constraint::UnitDiagonal;
    if (s == 2) return Constraint::UnitVariance;
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "unit_diagonal") return Constraint::UnitDiagonal;
    if (s == "unit_variance") return Constraint::UnitVariance;
  }
  throw SchemaError("constraint must be 1, 2, \"unit_diagonal\" or \"unit_variance\"");
}

PointSet parse_lattice(const std::string& s) {
  if (s == "richtmyer") return PointSet::Richtmyer;
  if (s == "montecarlo") return PointSet::MonteCarlo;
  throw SchemaError("unknown lattice '" + s + "'");
}

}  // namespace

ModelSpec parse_model(const std::string& text, const Dataset& data) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model specification is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("model specification must be a JSON object");
  ModelSpec spec;
  try {
    spec.flavour = parse_flavour(j.value("likelihood", std::string("npn")));
    if (j.contains("constraint")) spec.constraint = parse_constraint(j["constraint"]);
    spec.split = j.value("split", std::size_t{0});
    if (j.contains("qmc")) {
      const auto& q = j["qmc"];
      spec.qmc.M = q.value("M", spec.qmc.M);
      spec.qmc.seed = q.value("seed", spec.qmc.seed);
      spec.qmc.antithetic = q.value("antithetic", spec.qmc.antithetic);
      if (q.contains("lattice")) spec.qmc.lattice = parse_lattice(q["lattice"].get<std::string>());
    }
    if (j.contains("columns")) {
      for (const auto& c : j["columns"]) {
        const auto name = c.at("name").get<std::string>();
        const std::size_t idx = data.column_index(name);
        MarginalSpec m;
        m.basis = parse_basis(c.value("basis", std::string("step")));
        if (m.basis == BasisKind::Bernstein) {
          const int order = c.value("order", 6);
          if (order < 1) throw SchemaError("Bernstein order must be at least 1");
          m = bernstein_for(data.column(idx), order);
          if (c.contains("support")) {
            m.lo = c["support"].at(0).get<double>();
            m.hi = c["support"].at(1).get<double>();
            if (!(m.hi > m.lo)) throw SchemaError("support of '" + name + "' must satisfy lo < hi");
          }
        }
        if (c.contains("shift") && !c["shift"].is_null()) m.shift_covariate = c["shift"].get<std::string>();
        if (c.contains("scale") && !c["scale"].is_null()) m.scale_covariate = c["scale"].get<std::string>();
        for (const auto* cov : {&m.shift_covariate, &m.scale_covariate})
          if (*cov) (void)data.covariate_index(**cov);
        spec.columns.push_back(name);
        spec.margins.push_back(m);
      }
    } else {
      for (std::size_t k = 0; k < data.cols(); ++k) {
        spec.columns.push_back(data.column(k).name);
        spec.margins.push_back(MarginalSpec{});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model specification: ") + e.what());
  }
  if (spec.flavour == Flavour::Flow) spec.split = spec.margins.size();
  if (spec.qmc.M == 0) throw SchemaError("qmc.M must be positive");
  return spec;
}

ModelSpec read_model(const std::filesystem::path& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open model specification '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), data);
}

std::string model_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["likelihood"] = flavour_name(spec.flavour);
  j["constraint"] = spec.constraint == Constraint::UnitDiagonal ? 1 : 2;
  j["split"] = spec.split;
  nlohmann::ordered_json cols = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < spec.margins.size(); ++k) {
    const auto& m = spec.margins[k];
    nlohmann::ordered_json c;
    c["name"] = k < spec.columns.size() ? spec.columns[k] : std::string();
    c["basis"] = basis_name(m.basis);
    if (m.basis == BasisKind::Bernstein) {
      c["order"] = m.order;
      c["support"] = {m.lo, m.hi};
    }
    if (m.shift_covariate) c["shift"] = *m.shift_covariate;
    if (m.scale_covariate) c["scale"] = *m.scale_covariate;
    cols.push_back(c);
  }
  j["columns"] = cols;
  j["qmc"] = {{"M", spec.qmc.M},
              {"seed", spec.qmc.seed},
              {"antithetic", spec.qmc.antithetic},
              {"lattice", spec.qmc.lattice == PointSet::Richtmyer ? "richtmyer" : "montecarlo"}};
  return j.dump(2);
}

ModelSpec default_model(const Dataset& data) { return parse_model("{}", data); }

}  // namespace npn
