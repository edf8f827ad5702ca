#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace magnav {

/// Shortest round-trippable decimal text for a double; keeps data CSVs
/// byte-stable across reruns.
std::string format_double(double v);

/// CRC-32 (IEEE) of a byte string.
std::uint32_t crc32(const std::string& data);

/// CRC-32 of a file's contents.
std::uint32_t crc32_file(const std::string& path);

/// Splits one CSV line on commas (no quoting; data files are plain numeric).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace magnav
