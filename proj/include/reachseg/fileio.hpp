#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace reachseg {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);
/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace reachseg
