#include "emseg/volume.hpp"

#include <algorithm>

namespace emseg {

std::size_t RegionPartition::count(Region r) const {
    const auto tag = static_cast<std::uint8_t>(r);
    return static_cast<std::size_t>(std::count(labels.data.begin(), labels.data.end(), tag));
}

std::vector<std::size_t> RegionPartition::indices(Region r) const {
    const auto tag = static_cast<std::uint8_t>(r);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        if (labels.data[i] == tag) out.push_back(i);
    }
    return out;
}

} // namespace emseg
