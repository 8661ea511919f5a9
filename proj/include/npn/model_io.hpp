#pragma once

#include <filesystem>
#include <string>

#include "npn/data_model.hpp"
#include "npn/likelihood.hpp"

namespace npn {

/// Reads a JSON model specification. Bernstein supports that are not given
/// explicitly are derived from `data`.
ModelSpec parse_model(const std::string& json_text, const Dataset& data);
ModelSpec read_model(const std::filesystem::path& path, const Dataset& data);

/// Inverse of parse_model, with all supports written out.
std::string model_json(const ModelSpec& spec);

/// Default spec: all data columns, step margins, npn likelihood.
ModelSpec default_model(const Dataset& data);

}  // namespace npn
