#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace emseg {

/// u64 little-endian element count followed by little-endian float32 values.
void write_f32_array(std::ostream& out, std::span<const float> values);
std::vector<float> read_f32_array(std::istream& in, const std::string& source_name);

/// Headerless little-endian float32 raster files.
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected_count);

void write_u8_file(const std::filesystem::path& path, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path, std::size_t expected_count);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_of_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace emseg
