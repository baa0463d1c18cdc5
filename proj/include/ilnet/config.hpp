#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "ilnet/trainer.hpp"

namespace ilnet {

// "shared+scores+deltas" subsets, any order, at least one part.
std::string branch_mask_to_string(const BranchInputMask& m);
BranchInputMask branch_mask_from_string(const std::string& s);

// Flat key=value text, one pair per line, '#' comments, blank lines ignored.
// Keys are dotted (data.*, arch.*, train.*); unknown keys are rejected by
// name. Throws std::runtime_error with a single-line reason.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Set one key on an already-parsed config (same key set as the file format).
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Every key with its current value, in the parser's canonical order.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
std::string config_to_text(const RunConfig& cfg);

}  // namespace ilnet
