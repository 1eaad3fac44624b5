#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "emseg/volume.hpp"

namespace emseg::phantom {

enum class ChannelRole { Structural, Physiological, Metabolite };

std::string_view role_name(ChannelRole role);
ChannelRole parse_role(std::string_view text);

struct Channel {
    std::string name;
    ChannelRole role = ChannelRole::Structural;
    Volume<float> values;

    bool operator==(const Channel&) const = default;
};

/// One synthetic "patient".
struct PhantomCase {
    std::string id;
    std::vector<Channel> channels;
    RegionPartition partition;
    /// Ground-truth infiltration in [0, 1]; 1 in ROI1, 0 outside ROI1 and ROI2.
    Volume<float> truth_infiltration;
    /// 1 where infiltration exceeds the recurrence threshold, always within ROI2.
    Volume<std::uint8_t> truth_recurrence;

    const Extents& extents() const { return partition.extents(); }
    std::size_t channel_count(ChannelRole role) const;
    /// Indices into `channels` of every channel with `role`, in storage order.
    std::vector<std::size_t> channel_indices(ChannelRole role) const;
    const Channel& channel(std::string_view name) const;

    bool operator==(const PhantomCase&) const = default;
};

struct PhantomSpec {
    int extent = 64;
    int slices = 8;
    std::array<double, 3> spacing_mm{2.5, 2.5, 5.0};
    int structural_channels = 4;
    int physiological_channels = 7;
    /// Gaussian sigma (in-plane voxels) applied to the infiltration field
    /// before it drives physiological and metabolite channels.
    double physiological_blur_radius = 1.0;
    double structural_noise = 0.05;
    double physiological_noise = 0.3;
    double metabolite_noise = 0.3;
    /// Mean infiltration decay length in voxels; each case draws within +-40%.
    double decay_length = 4.0;
    /// Mean width of the noisy halo added around the infiltrated region.
    double halo_width = 2.0;
    /// Range of the in-plane core semi-major axis as a fraction of the extent.
    std::array<double, 2> core_radius{0.05, 0.10};
    bool metabolites = true;
    int case_count = 60;
    std::uint64_t seed = 20240101;

    /// Throws ContractError unless extents >= 16, channel counts >= 1, noise >= 0.
    void validate() const;
};

inline constexpr double kRecurrenceThreshold = 0.5;
inline constexpr double kInfiltrationSupport = 0.05;

/// Deterministic in (spec, seed); case i draws from child_seed(seed, i), so the
/// cases can be generated in any order or concurrently.
std::vector<PhantomCase> generate_phantom(const PhantomSpec& spec);
PhantomCase generate_case(const PhantomSpec& spec, std::size_t index);

} // namespace emseg::phantom
