#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace uqfire {

/// Library version string, e.g. "0.1.0".
std::string_view library_version();

/// Splits on a single delimiter; empty fields are kept.
std::vector<std::string_view> split_fields(std::string_view line, char delim);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

/// 16 hex digits of the FNV-1a 64 hash of the content.
std::string content_hash(std::string_view content);
std::string file_hash(const std::string& path);

void ensure_directory(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);

}  // namespace uqfire
