#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace bikit {

/// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view data);

/// Streaming SHA-256 of a file. Throws bikit::Error("io-error") when the
/// file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

/// True iff `s` is a 64-character lowercase/uppercase hex string.
bool is_hex_digest(std::string_view s);

} // namespace bikit
