#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace normtown {

// All artifacts are serialized with ordered_json so field order is the
// insertion order in code, never alphabetical surprise; byte-stable output is
// part of the reproducibility contract.
using json = nlohmann::ordered_json;

// "HH:MM" for minutes-since-midnight.
std::string format_clock(int minutes);

// FNV-1a over a string; used for cheap deterministic tie-breaking and for
// deriving per-agent sub-seeds (not for cache keys; those use sha256_hex).
uint64_t fnv1a64(std::string_view s);

// Hex SHA-256 via libcrypto. Used for replay-cache keys and config hashes.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);                 // throws IoFailure
void write_file(const std::string& path, std::string_view data);  // throws IoFailure
std::vector<std::string> read_lines(const std::string& path);    // throws IoFailure

// Zero-padded decimal, e.g. zero_pad(7, 4) == "0007".
std::string zero_pad(uint64_t value, int width);

// %.4f rendering used by report emitters.
std::string fixed4(double v);

}  // namespace normtown
