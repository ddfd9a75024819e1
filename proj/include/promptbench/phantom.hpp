#pragma once

#include <cstdint>

#include "promptbench/volume.hpp"

namespace promptbench {

/// Synthetic "tumor" made of a few overlapping random ellipsoids.
struct PhantomParams {
    std::int64_t size = 40;  // cubic grid edge, voxels
    int blobs = 3;
    double min_radius = 4.0;  // voxels
    double max_radius = 10.0;
    Vec3 spacing{1.0, 1.0, 1.0};
};

/// Deterministic in `seed`; never empty.
Mask make_phantom(std::uint64_t seed, const PhantomParams& params = {});

/// Noisy intensity image for a phantom mask: foreground around 100, background
/// around 0.
Volume3 phantom_image(const Mask& mask, std::uint64_t seed);

}  // namespace promptbench
