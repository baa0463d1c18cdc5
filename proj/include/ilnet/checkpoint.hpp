#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "ilnet/model.hpp"

namespace ilnet {

// Checkpoint layout: 8-byte magic "ILNETCK1", uint32 LE manifest length, the
// JSON manifest (architecture, iteration, parameter names and shapes), then
// each parameter as raw little-endian float32 in manifest order. Reload is
// bit-exact at float32 precision: save(load(save(x))) == save(x).
void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path);

nlohmann::ordered_json arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::ordered_json& j);

}  // namespace ilnet
