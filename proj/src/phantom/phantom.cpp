#include "emseg/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emseg/parallel.hpp"
#include "emseg/rng.hpp"

namespace emseg::phantom {

std::string_view role_name(ChannelRole role) {
    switch (role) {
    case ChannelRole::Structural: return "structural";
    case ChannelRole::Physiological: return "physiological";
    case ChannelRole::Metabolite: return "metabolite";
    }
    return "structural";
}

ChannelRole parse_role(std::string_view text) {
    if (text == "structural") return ChannelRole::Structural;
    if (text == "physiological") return ChannelRole::Physiological;
    if (text == "metabolite") return ChannelRole::Metabolite;
    throw FormatError("unknown channel role '" + std::string(text) + "'");
}

std::size_t PhantomCase::channel_count(ChannelRole role) const {
    return static_cast<std::size_t>(
        std::count_if(channels.begin(), channels.end(), [role](const Channel& c) { return c.role == role; }));
}

std::vector<std::size_t> PhantomCase::channel_indices(ChannelRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].role == role) out.push_back(i);
    }
    return out;
}

const Channel& PhantomCase::channel(std::string_view name) const {
    for (const auto& c : channels) {
        if (c.name == name) return c;
    }
    throw DataError("case " + id + " has no channel '" + std::string(name) + "'");
}

void PhantomSpec::validate() const {
    if (extent < 16 || slices < 1) throw ContractError("phantom extents must be >= 16 in-plane and >= 1 slice");
    if (structural_channels < 1 || physiological_channels < 1) {
        throw ContractError("phantom needs at least one structural and one physiological channel");
    }
    if (structural_noise < 0 || physiological_noise < 0 || metabolite_noise < 0) {
        throw ContractError("phantom noise levels must be non-negative");
    }
    if (physiological_blur_radius < 0 || decay_length <= 0 || halo_width < 0) {
        throw ContractError("phantom blur, decay and halo must be non-negative (decay positive)");
    }
    if (case_count < 1) throw ContractError("phantom case count must be positive");
    if (!(core_radius[0] > 0 && core_radius[0] <= core_radius[1] && core_radius[1] < 0.5)) {
        throw ContractError("phantom core radius range must satisfy 0 < lo <= hi < 0.5");
    }
    for (double s : spacing_mm) {
        if (!(s > 0)) throw ContractError("phantom spacing must be positive");
    }
}

namespace {

struct StructuralLevels {
    const char* name;
    double normal;
    double core;
    double edema;
};

// T1, T1C, T2 and FLAIR-like contrasts: enhancement marks the core, FLAIR
// marks core and edema alike; nothing here depends on infiltration.
constexpr StructuralLevels kStructural[] = {
    {"t1", 0.60, 0.45, 0.50},
    {"t1c", 0.30, 0.90, 0.35},
    {"t2", 0.40, 0.70, 0.75},
    {"flair", 0.30, 0.65, 0.80},
};

struct PhysiologicalResponse {
    const char* name;
    double intercept;
    double slope;
};

constexpr PhysiologicalResponse kPhysiological[] = {
    {"fa", 0.60, -0.8}, {"md", 0.30, 1.0}, {"q", 0.60, -0.9}, {"p", 0.30, 0.9},
    {"mtt", 0.40, 0.7}, {"rcbf", 0.30, 1.0}, {"rcbv", 0.20, 1.2},
};

StructuralLevels structural_levels(int k) {
    if (k < 4) return kStructural[k];
    const double base = 0.25 + 0.1 * (k % 3);
    return {nullptr, base, base + 0.35, base + 0.25};
}

PhysiologicalResponse physiological_response(int k) {
    if (k < 7) return kPhysiological[k];
    const double sign = (k % 2) ? -1.0 : 1.0;
    return {nullptr, sign > 0 ? 0.3 : 0.7, sign * (0.7 + 0.1 * (k % 4))};
}

std::string channel_name(const char* table_name, const char* prefix, int k) {
    return table_name ? std::string(table_name) : std::string(prefix) + std::to_string(k);
}

/// In-plane separable Gaussian blur of each slice, zero outside the grid.
Volume<float> blur_slices(const Volume<float>& in, double sigma) {
    if (sigma <= 0) return in;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += kernel[i + radius];
    }
    for (auto& k : kernel) k /= total;
    const auto& e = in.extents;
    Volume<float> tmp(e), out(e);
    for (int z = 0; z < e.nz; ++z) {
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sx = x + i;
                    if (sx >= 0 && sx < e.nx) acc += kernel[i + radius] * in(sx, y, z);
                }
                tmp(x, y, z) = static_cast<float>(acc);
            }
        }
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sy = y + i;
                    if (sy >= 0 && sy < e.ny) acc += kernel[i + radius] * tmp(x, sy, z);
                }
                out(x, y, z) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

struct Voxel {
    int x, y, z;
};

} // namespace

PhantomCase generate_case(const PhantomSpec& spec, std::size_t index) {
    spec.validate();
    Rng rng(child_seed(spec.seed, index));
    const Extents e{spec.extent, spec.extent, spec.slices};
    const double center = (spec.extent - 1) / 2.0;
    const double brain_radius = spec.extent / 2.0 - 1.0;
    const double z_weight = spec.spacing_mm[2] / spec.spacing_mm[0];

    // Per-case tumour geometry.
    const double decay = spec.decay_length * rng.uniform(0.6, 1.4);
    double semi_a = 0, semi_b = 0, semi_c = 0, theta = 0, cx = 0, cy = 0, cz = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        semi_a = spec.extent * rng.uniform(spec.core_radius[0], spec.core_radius[1]);
        semi_b = semi_a * rng.uniform(0.6, 1.0);
        semi_c = std::max(1.0, spec.slices * rng.uniform(0.25, 0.45)) * z_weight;
        theta = rng.uniform(0.0, std::numbers::pi);
        const double margin = semi_a + 0.5 * decay + spec.halo_width + 2.0;
        const double room = brain_radius - margin;
        const double r = rng.uniform(0.0, 1.0) * std::max(room, 0.0);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        cx = center + r * std::cos(phi);
        cy = center + r * std::sin(phi);
        cz = (spec.slices - 1) / 2.0 + rng.uniform(-0.5, 0.5);
        placed = room >= 0.0 && semi_b >= 1.0;
    }
    if (!placed) {
        throw DataError("phantom case " + std::to_string(index) + ": core ellipse not placeable after 100 attempts");
    }

    // Anisotropic in-plane metric R diag(1, k^2) R^T: infiltration spreads
    // furthest along the first principal direction.
    const double stretch = rng.uniform(2.0, 3.5);
    const double psi = rng.uniform(0.0, std::numbers::pi);
    const double c1 = std::cos(psi), s1 = std::sin(psi);
    const double m_xx = c1 * c1 + stretch * stretch * s1 * s1;
    const double m_yy = s1 * s1 + stretch * stretch * c1 * c1;
    const double m_xy = c1 * s1 * (1.0 - stretch * stretch);

    PhantomCase out;
    out.id = "case_" + std::to_string(1000 + index).substr(1);
    out.partition.labels = Volume<std::uint8_t>(e, static_cast<std::uint8_t>(Region::Background));
    out.partition.spacing_mm = spec.spacing_mm;

    Volume<std::uint8_t> brain(e, 0), core(e, 0);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int z = 0; z < e.nz; ++z) {
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                const double dx = x - center, dy = y - center;
                if (dx * dx + dy * dy > brain_radius * brain_radius) continue;
                brain(x, y, z) = 1;
                const double u = ((x - cx) * ct + (y - cy) * st) / semi_a;
                const double v = (-(x - cx) * st + (y - cy) * ct) / semi_b;
                const double w = (z - cz) * z_weight / semi_c;
                if (u * u + v * v + w * w <= 1.0) core(x, y, z) = 1;
            }
        }
    }

    std::vector<Voxel> boundary;
    for (int z = 0; z < e.nz; ++z) {
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                if (!core(x, y, z)) continue;
                const bool edge = x == 0 || y == 0 || z == 0 || x == e.nx - 1 || y == e.ny - 1 || z == e.nz - 1 ||
                                  !core(x - 1, y, z) || !core(x + 1, y, z) || !core(x, y - 1, z) ||
                                  !core(x, y + 1, z) || !core(x, y, z - 1) || !core(x, y, z + 1);
                if (edge) boundary.push_back({x, y, z});
            }
        }
    }
    if (boundary.empty()) throw DataError("phantom case " + std::to_string(index) + ": empty core");

    Volume<float> f(e, 0.0f);
    for (int z = 0; z < e.nz; ++z) {
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                if (!brain(x, y, z)) continue;
                if (core(x, y, z)) {
                    f(x, y, z) = 1.0f;
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                for (const auto& b : boundary) {
                    const double dx = x - b.x, dy = y - b.y, dz = (z - b.z) * z_weight;
                    const double d2 = m_xx * dx * dx + 2.0 * m_xy * dx * dy + m_yy * dy * dy + dz * dz;
                    best = std::min(best, d2);
                }
                f(x, y, z) = static_cast<float>(std::clamp(std::exp(-std::sqrt(best) / decay), 0.0, 1.0));
            }
        }
    }

    // Infiltration support plus a halo whose width wobbles with the angle
    // around the core, so ROI2 also contains uninfiltrated oedema.
    std::vector<Voxel> support;
    for (int z = 0; z < e.nz; ++z) {
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                if (brain(x, y, z) && f(x, y, z) > kInfiltrationSupport) support.push_back({x, y, z});
            }
        }
    }
    double harmonics[3][2];
    for (auto& h : harmonics) {
        h[0] = rng.uniform(-0.3, 0.3);
        h[1] = rng.uniform(-0.3, 0.3);
    }
    auto halo_at = [&](int x, int y) {
        const double angle = std::atan2(y - cy, x - cx);
        double scale = 1.0;
        for (int k = 0; k < 3; ++k) {
            scale += harmonics[k][0] * std::cos((k + 1) * angle) + harmonics[k][1] * std::sin((k + 1) * angle);
        }
        return std::max(0.5, spec.halo_width * scale);
    };
    const double max_halo = spec.halo_width * 2.0 + 1.0;
    Volume<std::uint8_t> flair(e, 0);
    for (const auto& s : support) flair(s.x, s.y, s.z) = 1;
    for (int z = 0; z < e.nz; ++z) {
        std::vector<Voxel> slice_support;
        for (const auto& s : support) {
            if (s.z == z) slice_support.push_back(s);
        }
        if (slice_support.empty()) continue;
        for (int y = 0; y < e.ny; ++y) {
            for (int x = 0; x < e.nx; ++x) {
                if (!brain(x, y, z) || flair(x, y, z)) continue;
                double best = std::numeric_limits<double>::infinity();
                for (const auto& s : slice_support) {
                    const double dx = x - s.x, dy = y - s.y;
                    best = std::min(best, dx * dx + dy * dy);
                }
                if (best > max_halo * max_halo) continue;
                const double h = halo_at(x, y);
                if (best <= h * h) flair(x, y, z) = 2;
            }
        }
    }

    out.truth_recurrence = Volume<std::uint8_t>(e, 0);
    for (std::size_t i = 0; i < e.voxels(); ++i) {
        Region r = Region::Background;
        if (brain.data[i]) {
            if (core.data[i]) r = Region::Roi1;
            else if (flair.data[i]) r = Region::Roi2;
            else r = Region::Roi3;
        }
        out.partition.labels.data[i] = static_cast<std::uint8_t>(r);
        if (r != Region::Roi1 && r != Region::Roi2) f.data[i] = 0.0f;
        if (r == Region::Roi2 && f.data[i] > kRecurrenceThreshold) out.truth_recurrence.data[i] = 1;
    }
    out.truth_infiltration = f;
    const Volume<float> blurred = blur_slices(f, spec.physiological_blur_radius);

    auto make_channel = [&](std::string name, ChannelRole role, auto&& mean_at, double noise, bool scanner_drift) {
        Channel ch{std::move(name), role, Volume<float>(e, 0.0f)};
        const double gain = scanner_drift ? rng.uniform(0.8, 1.25) : 1.0;
        const double offset = scanner_drift ? rng.uniform(-0.1, 0.1) : 0.0;
        for (std::size_t i = 0; i < e.voxels(); ++i) {
            if (!brain.data[i]) continue;
            const double value = mean_at(i) + noise * rng.normal();
            ch.values.data[i] = static_cast<float>(gain * value + offset);
        }
        return ch;
    };

    for (int k = 0; k < spec.structural_channels; ++k) {
        const auto lv = structural_levels(k);
        out.channels.push_back(make_channel(
            channel_name(lv.name, "s", k), ChannelRole::Structural,
            [&](std::size_t i) {
                switch (out.partition.at(i)) {
                case Region::Roi1: return lv.core;
                case Region::Roi2: return lv.edema;
                default: return lv.normal;
                }
            },
            spec.structural_noise, true));
    }
    for (int k = 0; k < spec.physiological_channels; ++k) {
        const auto resp = physiological_response(k);
        out.channels.push_back(make_channel(
            channel_name(resp.name, "phys", k), ChannelRole::Physiological,
            [&](std::size_t i) { return resp.intercept + resp.slope * blurred.data[i]; }, spec.physiological_noise,
            true));
    }
    if (spec.metabolites) {
        out.channels.push_back(make_channel(
            "cho", ChannelRole::Metabolite, [&](std::size_t i) { return 1.0 + 0.8 * blurred.data[i]; },
            spec.metabolite_noise, false));
        out.channels.push_back(make_channel(
            "naa", ChannelRole::Metabolite, [&](std::size_t i) { return 1.0 - 0.6 * blurred.data[i]; },
            spec.metabolite_noise, false));
    }
    return out;
}

std::vector<PhantomCase> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    std::vector<PhantomCase> cases(static_cast<std::size_t>(spec.case_count));
    parallel_for(cases.size(), [&](std::size_t i) { cases[i] = generate_case(spec, i); });
    return cases;
}

} // namespace emseg::phantom
