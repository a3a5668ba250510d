#pragma once

#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "fewview/field.hpp"

namespace fewview {

// Builds a field from an architecture block (the same shape describe()
// emits; missing keys fall back to the documented defaults). Knows every
// field kind: "mlp", "vm", "dense", "analytic".
std::unique_ptr<RadianceField> make_field(const nlohmann::json& arch);

// Checkpoint container shared by all field kinds: a two-line text header
// (magic+version, then the architecture JSON) followed by the raw
// little-endian float32 parameter blob. Round-trips bit-exact.
void save_checkpoint(const std::string& path, const RadianceField& field);
std::unique_ptr<RadianceField> load_checkpoint(const std::string& path);

}  // namespace fewview
