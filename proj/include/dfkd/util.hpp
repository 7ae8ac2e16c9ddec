#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfkd {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string to_hex(std::uint64_t v);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

// Writes path + ".partial" then renames onto path. On failure the partial
// file is removed when cleanup_partial is set, otherwise left for inspection.
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes,
                      bool cleanup_partial = false);

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint32_t read_u32(const std::vector<std::uint8_t>& in, std::size_t offset);
std::uint64_t read_u64(const std::vector<std::uint8_t>& in, std::size_t offset);

}  // namespace dfkd
