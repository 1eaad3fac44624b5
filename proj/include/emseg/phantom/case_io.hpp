#pragma once

#include <filesystem>

#include "emseg/phantom/phantom.hpp"

namespace emseg::phantom {

/// Case directory: header.txt, one <channel>.f32 raster per channel,
/// partition.u8, truth_f.f32, recurrence.u8 and manifest.crc32.
void write_case(const std::filesystem::path& dir, const PhantomCase& c);

/// Verifies the manifest checksums before decoding. Throws FormatError on a
/// malformed header, IoError on truncated rasters or checksum mismatches; both
/// name the offending file.
PhantomCase read_case(const std::filesystem::path& dir);

/// Adds or refreshes the manifest entry of an extra file stored in a case directory.
void register_case_file(const std::filesystem::path& dir, const std::string& file_name);
/// Throws IoError if `file_name` is missing from the manifest or its checksum differs.
void verify_case_file(const std::filesystem::path& dir, const std::string& file_name);

} // namespace emseg::phantom
