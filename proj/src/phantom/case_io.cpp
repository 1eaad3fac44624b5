#include "emseg/phantom/case_io.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "emseg/binary_io.hpp"

namespace emseg::phantom {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "EMSEG-CASE v1";
constexpr const char* kManifest = "manifest.crc32";

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

std::map<std::string, std::string> read_manifest(const fs::path& dir) {
    const fs::path path = dir / kManifest;
    if (!fs::exists(path)) throw IoError(path.string() + ": manifest missing");
    std::istringstream in(read_text_file(path));
    std::map<std::string, std::string> entries;
    std::string crc, name;
    while (in >> crc >> name) entries[name] = crc;
    return entries;
}

void write_manifest(const fs::path& dir, const std::map<std::string, std::string>& entries) {
    std::string text;
    for (const auto& [name, crc] : entries) text += crc + " " + name + "\n";
    write_text_file(dir / kManifest, text);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, sep)) out.push_back(part);
    return out;
}

void verify_entry(const fs::path& dir, const std::map<std::string, std::string>& manifest, const std::string& name) {
    const auto it = manifest.find(name);
    const fs::path path = dir / name;
    if (it == manifest.end()) throw IoError(path.string() + ": not listed in the manifest");
    if (!fs::exists(path)) throw IoError(path.string() + ": missing");
    if (hex32(crc32_of_file(path)) != it->second) throw IoError(path.string() + ": checksum mismatch");
}

} // namespace

void register_case_file(const fs::path& dir, const std::string& file_name) {
    auto entries = fs::exists(dir / kManifest) ? read_manifest(dir) : std::map<std::string, std::string>{};
    entries[file_name] = hex32(crc32_of_file(dir / file_name));
    write_manifest(dir, entries);
}

void verify_case_file(const fs::path& dir, const std::string& file_name) {
    verify_entry(dir, read_manifest(dir), file_name);
}

void write_case(const fs::path& dir, const PhantomCase& c) {
    fs::create_directories(dir);
    const auto& e = c.extents();
    std::ostringstream header;
    header.precision(17);
    header << kMagic << "\n";
    header << "id=" << c.id << "\n";
    header << "extents=" << e.nx << "," << e.ny << "," << e.nz << "\n";
    header << "spacing_mm=" << c.partition.spacing_mm[0] << "," << c.partition.spacing_mm[1] << ","
           << c.partition.spacing_mm[2] << "\n";
    header << "channels=";
    for (std::size_t i = 0; i < c.channels.size(); ++i) {
        if (i) header << ",";
        header << c.channels[i].name << ":" << role_name(c.channels[i].role);
    }
    header << "\n";

    std::map<std::string, std::string> entries;
    auto record = [&](const std::string& name) { entries[name] = hex32(crc32_of_file(dir / name)); };
    write_text_file(dir / "header.txt", header.str());
    record("header.txt");
    for (const auto& ch : c.channels) {
        if (ch.values.extents != e) throw StructuralError("channel " + ch.name + " extents differ from partition");
        write_f32_file(dir / (ch.name + ".f32"), ch.values.data);
        record(ch.name + ".f32");
    }
    write_u8_file(dir / "partition.u8", c.partition.labels.data);
    record("partition.u8");
    write_f32_file(dir / "truth_f.f32", c.truth_infiltration.data);
    record("truth_f.f32");
    write_u8_file(dir / "recurrence.u8", c.truth_recurrence.data);
    record("recurrence.u8");
    write_manifest(dir, entries);
}

PhantomCase read_case(const fs::path& dir) {
    const fs::path header_path = dir / "header.txt";
    const auto manifest = read_manifest(dir);
    auto verify = [&](const std::string& name) { verify_entry(dir, manifest, name); };

    std::istringstream header(read_text_file(header_path));
    std::string line;
    if (!std::getline(header, line) || line != kMagic) {
        throw FormatError(header_path.string() + ": bad magic, expected '" + std::string(kMagic) + "'");
    }
    verify("header.txt");
    std::map<std::string, std::string> kv;
    while (std::getline(header, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(header_path.string() + ": malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"id", "extents", "spacing_mm", "channels"}) {
        if (!kv.count(key)) throw FormatError(header_path.string() + ": missing key '" + key + "'");
    }

    PhantomCase c;
    c.id = kv["id"];
    Extents e;
    try {
        const auto ext = split(kv["extents"], ',');
        const auto sp = split(kv["spacing_mm"], ',');
        if (ext.size() != 3 || sp.size() != 3) throw FormatError("");
        e = {std::stoi(ext[0]), std::stoi(ext[1]), std::stoi(ext[2])};
        for (int i = 0; i < 3; ++i) c.partition.spacing_mm[i] = std::stod(sp[i]);
    } catch (const std::exception&) {
        throw FormatError(header_path.string() + ": malformed extents or spacing");
    }
    if (e.nx <= 0 || e.ny <= 0 || e.nz <= 0) throw FormatError(header_path.string() + ": non-positive extents");

    for (const auto& entry : split(kv["channels"], ',')) {
        const auto colon = entry.find(':');
        if (colon == std::string::npos) throw FormatError(header_path.string() + ": malformed channel '" + entry + "'");
        Channel ch;
        ch.name = entry.substr(0, colon);
        try {
            ch.role = parse_role(entry.substr(colon + 1));
        } catch (const FormatError& err) {
            throw FormatError(header_path.string() + ": " + err.what());
        }
        const std::string file = ch.name + ".f32";
        verify(file);
        ch.values = Volume<float>(e);
        ch.values.data = read_f32_file(dir / file, e.voxels());
        c.channels.push_back(std::move(ch));
    }
    verify("partition.u8");
    c.partition.labels = Volume<std::uint8_t>(e);
    c.partition.labels.data = read_u8_file(dir / "partition.u8", e.voxels());
    for (auto v : c.partition.labels.data) {
        if (v > 3) throw FormatError((dir / "partition.u8").string() + ": label out of range");
    }
    verify("truth_f.f32");
    c.truth_infiltration = Volume<float>(e);
    c.truth_infiltration.data = read_f32_file(dir / "truth_f.f32", e.voxels());
    verify("recurrence.u8");
    c.truth_recurrence = Volume<std::uint8_t>(e);
    c.truth_recurrence.data = read_u8_file(dir / "recurrence.u8", e.voxels());
    return c;
}

} // namespace emseg::phantom
