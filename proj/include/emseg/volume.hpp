#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "emseg/errors.hpp"

namespace emseg {

struct Extents {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t voxels() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t slice_voxels() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    bool operator==(const Extents&) const = default;
};

/// Dense 3-D raster, x fastest, then y, then z (slice).
template <typename T>
struct Volume {
    Extents extents;
    std::vector<T> data;

    Volume() = default;
    explicit Volume(Extents e, T fill = T{}) : extents(e), data(e.voxels(), fill) {}

    T& operator()(int x, int y, int z) { return data[extents.index(x, y, z)]; }
    const T& operator()(int x, int y, int z) const { return data[extents.index(x, y, z)]; }
    std::size_t size() const { return data.size(); }

    bool operator==(const Volume&) const = default;
};

enum class Region : std::uint8_t { Background = 0, Roi1 = 1, Roi2 = 2, Roi3 = 3 };

/// Voxel-wise ROI assignment. ROI1 carries the observed label 1, ROI3 the
/// observed label 0, ROI2 is the unlabeled (latent) region.
struct RegionPartition {
    Volume<std::uint8_t> labels;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    Region at(std::size_t i) const { return static_cast<Region>(labels.data[i]); }
    const Extents& extents() const { return labels.extents; }
    std::size_t count(Region r) const;
    /// Linear indices of every voxel in `r`, ascending.
    std::vector<std::size_t> indices(Region r) const;
    double voxel_volume_mm3() const { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2]; }

    bool operator==(const RegionPartition&) const = default;
};

inline bool is_observed(Region r) { return r == Region::Roi1 || r == Region::Roi3; }

} // namespace emseg
