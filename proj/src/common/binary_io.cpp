#include "emseg/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "emseg/errors.hpp"

namespace emseg {

namespace {

std::uint32_t to_little32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
    }
}

std::uint64_t to_little64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return (static_cast<std::uint64_t>(to_little32(static_cast<std::uint32_t>(v))) << 32) |
               to_little32(static_cast<std::uint32_t>(v >> 32));
    }
}

std::vector<char> encode_f32(std::span<const float> values) {
    std::vector<char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t bits = to_little32(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    return bytes;
}

std::vector<float> decode_f32(const char* bytes, std::size_t count) {
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes + 4 * i, 4);
        values[i] = std::bit_cast<float>(to_little32(bits));
    }
    return values;
}

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

void write_f32_array(std::ostream& out, std::span<const float> values) {
    const std::uint64_t n = to_little64(values.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    const auto bytes = encode_f32(values);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> read_f32_array(std::istream& in, const std::string& source_name) {
    std::uint64_t n = 0;
    if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) {
        throw IoError(source_name + ": truncated array length");
    }
    n = to_little64(n);
    if (n > (std::uint64_t{1} << 34)) throw FormatError(source_name + ": implausible array length");
    std::vector<char> bytes(n * 4);
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError(source_name + ": truncated array data");
    }
    return decode_f32(bytes.data(), n);
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const auto bytes = encode_f32(values);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected_count) {
    const auto bytes = slurp(path);
    if (bytes.size() != expected_count * 4) {
        throw IoError(path.string() + ": raster holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected_count * 4));
    }
    return decode_f32(bytes.data(), expected_count);
}

void write_u8_file(const std::filesystem::path& path, std::span<const std::uint8_t> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path, std::size_t expected_count) {
    const auto bytes = slurp(path);
    if (bytes.size() != expected_count) {
        throw IoError(path.string() + ": raster holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected_count));
    }
    return {bytes.begin(), bytes.end()};
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t at = 0;
    while (at < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - at, 1u << 30);
        crc = crc32(crc, bytes.data() + at, static_cast<uInt>(chunk));
        at += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of_file(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    return crc32_of({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    return {bytes.begin(), bytes.end()};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace emseg
