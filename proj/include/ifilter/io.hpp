#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ifilter {

/// Shortest-roundtrip-safe decimal: 17 significant digits.
std::string format_real(double v);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

} // namespace ifilter
