#include "promptbench/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "promptbench/error.hpp"
#include "promptbench/rng.hpp"

namespace promptbench {

namespace {

double uniform(SplitMix64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

}  // namespace

Mask make_phantom(std::uint64_t seed, const PhantomParams& params) {
    if (params.size < 3 || params.blobs < 1 || !(params.min_radius > 0.0) ||
        params.max_radius < params.min_radius) {
        throw ValidationError("make_phantom: bad parameters");
    }
    Geometry geo;
    geo.dims = Dims{params.size, params.size, params.size};
    geo.spacing = params.spacing;
    geo.validate();

    SplitMix64 rng(seed);
    const double n = static_cast<double>(params.size);
    const double mid = (n - 1.0) / 2.0;
    std::vector<std::uint8_t> data(geo.size(), 0);
    for (int b = 0; b < params.blobs; ++b) {
        const double r[3] = {uniform(rng, params.min_radius, params.max_radius),
                             uniform(rng, params.min_radius, params.max_radius),
                             uniform(rng, params.min_radius, params.max_radius)};
        // Later blobs are offset from the centre so the union is irregular.
        const double spread = b == 0 ? 0.0 : params.max_radius * 0.6;
        double c[3];
        for (int a = 0; a < 3; ++a) {
            c[a] = std::clamp(mid + uniform(rng, -spread, spread), r[a] * 0.5, n - 1.0 - r[a] * 0.5);
        }
        for (std::int64_t z = 0; z < params.size; ++z) {
            for (std::int64_t y = 0; y < params.size; ++y) {
                for (std::int64_t x = 0; x < params.size; ++x) {
                    const double dx = (static_cast<double>(x) - c[0]) / r[0];
                    const double dy = (static_cast<double>(y) - c[1]) / r[1];
                    const double dz = (static_cast<double>(z) - c[2]) / r[2];
                    if (dx * dx + dy * dy + dz * dz <= 1.0) data[geo.index(x, y, z)] = 1;
                }
            }
        }
    }
    const auto centre = static_cast<std::int64_t>(mid);
    data[geo.index(centre, centre, centre)] = 1;
    return Mask(geo, std::move(data));
}

Volume3 phantom_image(const Mask& mask, std::uint64_t seed) {
    SplitMix64 rng(seed ^ 0x5eed5eed5eed5eedULL);
    std::vector<double> data(mask.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = (mask[i] ? 100.0 : 0.0) + uniform(rng, -10.0, 10.0);
    }
    return Volume3(mask.geometry(), std::move(data));
}

}  // namespace promptbench
