#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttpmap {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Name-based (version 5, SHA-1) UUID in canonical textual form.
std::string uuid_v5(std::string_view namespace_uuid, std::string_view name);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian IEEE-754 packing for weight arrays.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

/// Current UTC time as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
std::string utc_timestamp_now();

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, fsyncs, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Stable 64-bit mix of a seed and a string, used to derive per-label RNG seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt);

}  // namespace ttpmap
