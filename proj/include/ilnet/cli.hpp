#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace ilnet {

// Out-dir fallback chain: explicit flag, else $ILNET_SCRATCH/<leaf>, else
// ./<leaf>.
std::string resolve_out_dir(const std::string& flag_value, const std::string& leaf);

// All three print a single-line "error: ..." to stderr and return nonzero on
// failure; artifacts land under out_dir.
int cmd_run(const std::string& config_path, std::optional<uint64_t> seed,
            const std::string& out_dir);
int cmd_sweep(const std::string& spec_path, const std::string& out_dir);
int cmd_analyze(const std::string& log_dir, const std::string& out_dir);

uint64_t fnv1a64(const void* data, size_t n);
std::string file_hash_hex(const std::string& path);  // "fnv1a64:" + 16 hex digits

}  // namespace ilnet
