#include "emseg/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emseg/binary_io.hpp"

namespace emseg::nn {

namespace {
constexpr std::string_view kMagic = "EMSEG-CKPT v1";
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const ModelState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << kMagic << "\n" << spec.describe() << "step " << state.step << "\n";
    write_f32_array(out, state.parameters);
    write_f32_array(out, state.first_moment);
    write_f32_array(out, state.second_moment);
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw FormatError(path.string() + ": not an EMSEG-CKPT v1 checkpoint");
    }
    std::string descriptor;
    while (std::getline(in, line)) {
        descriptor += line + "\n";
        if (line == "end") break;
    }
    Checkpoint ckpt;
    try {
        ckpt.spec = NetworkSpec::parse(descriptor);
    } catch (const Error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!std::getline(in, line) || line.rfind("step ", 0) != 0) {
        throw FormatError(path.string() + ": missing step line");
    }
    ckpt.state.step = std::stoull(line.substr(5));
    const std::string name = path.string();
    ckpt.state.parameters = read_f32_array(in, name);
    ckpt.state.first_moment = read_f32_array(in, name);
    ckpt.state.second_moment = read_f32_array(in, name);
    const std::size_t n = ckpt.spec.parameter_count();
    if (ckpt.state.parameters.size() != n || ckpt.state.first_moment.size() != n ||
        ckpt.state.second_moment.size() != n) {
        throw FormatError(name + ": vector lengths do not match the network descriptor");
    }
    return ckpt;
}

} // namespace emseg::nn
