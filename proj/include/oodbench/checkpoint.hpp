#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodbench/network.hpp"

namespace oodbench {

// Model container: "OODB" magic, u16 format version, provenance hash,
// layer descriptor table, then little-endian f64 parameter blobs.
std::vector<std::uint8_t> serialize_network(const Network& net, std::uint64_t config_hash);
Network deserialize_network(const std::vector<std::uint8_t>& bytes,
                            std::uint64_t* config_hash = nullptr);

void save_network(const Network& net, const std::string& path, std::uint64_t config_hash);
Network load_network(const std::string& path, std::uint64_t* config_hash = nullptr);

}  // namespace oodbench
