// Shared helpers and brute-force oracles for the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "promptbench/rng.hpp"
#include "promptbench/subregion.hpp"
#include "promptbench/volume.hpp"

namespace testsupport {

using namespace promptbench;

inline Geometry grid(std::int64_t nx, std::int64_t ny, std::int64_t nz, Vec3 spacing = {1, 1, 1}) {
    Geometry g;
    g.dims = Dims{nx, ny, nz};
    g.spacing = spacing;
    return g;
}

inline double unit(SplitMix64& rng) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }

inline std::int64_t uniform_int(SplitMix64& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(hi - lo + 1)));
}

/// Independent Bernoulli voxels.
inline Mask random_mask(const Geometry& g, double density, SplitMix64& rng) {
    std::vector<std::uint8_t> data(g.size());
    for (auto& v : data) v = unit(rng) < density ? 1 : 0;
    return Mask(g, std::move(data));
}

/// A few random boxes and balls, so masks have real interiors.
inline Mask random_blobby_mask(const Geometry& g, SplitMix64& rng, int shapes = 3) {
    std::vector<std::uint8_t> data(g.size(), 0);
    const auto& d = g.dims;
    for (int s = 0; s < shapes; ++s) {
        const double cx = unit(rng) * static_cast<double>(d.nx);
        const double cy = unit(rng) * static_cast<double>(d.ny);
        const double cz = unit(rng) * static_cast<double>(d.nz);
        const double r = 1.0 + unit(rng) * static_cast<double>(std::min({d.nx, d.ny, d.nz})) / 2.0;
        const bool ball = rng.next() & 1;
        for (std::int64_t z = 0; z < d.nz; ++z)
            for (std::int64_t y = 0; y < d.ny; ++y)
                for (std::int64_t x = 0; x < d.nx; ++x) {
                    const double dx = static_cast<double>(x) - cx;
                    const double dy = static_cast<double>(y) - cy;
                    const double dz = static_cast<double>(z) - cz;
                    const bool in = ball ? dx * dx + dy * dy + dz * dz <= r * r
                                         : std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) <= r;
                    if (in) data[g.index(x, y, z)] = 1;
                }
    }
    return Mask(g, std::move(data));
}

inline Mask solid_cube(std::int64_t n, Vec3 spacing = {1, 1, 1}) {
    const Geometry g = grid(n, n, n, spacing);
    return Mask(g, std::vector<std::uint8_t>(g.size(), 1));
}

/// Cube of edge `edge` centred in a grid of edge `n`.
inline Mask embedded_cube(std::int64_t n, std::int64_t edge) {
    const Geometry g = grid(n, n, n);
    std::vector<std::uint8_t> data(g.size(), 0);
    const std::int64_t lo = (n - edge) / 2;
    for (std::int64_t z = lo; z < lo + edge; ++z)
        for (std::int64_t y = lo; y < lo + edge; ++y)
            for (std::int64_t x = lo; x < lo + edge; ++x) data[g.index(x, y, z)] = 1;
    return Mask(g, std::move(data));
}

/// Direct k^3 window sum with zero padding.
inline double window_sum(const Mask& m, std::int64_t x, std::int64_t y, std::int64_t z, int k) {
    const auto& d = m.dims();
    const int r = k / 2;
    double sum = 0.0;
    for (std::int64_t dz = -r; dz <= r; ++dz)
        for (std::int64_t dy = -r; dy <= r; ++dy)
            for (std::int64_t dx = -r; dx <= r; ++dx) {
                const auto xx = x + dx, yy = y + dy, zz = z + dz;
                if (xx < 0 || yy < 0 || zz < 0 || xx >= d.nx || yy >= d.ny || zz >= d.nz) continue;
                sum += m.at(xx, yy, zz) ? 1.0 : 0.0;
            }
    return sum;
}

/// Boundary/margin/center by counting full windows: a voxel is interior to
/// the k-window exactly when all k^3 neighbours (zero padded) are foreground.
struct BruteParts {
    std::vector<std::uint8_t> b, m, c;
    std::size_t nb = 0, nm = 0, nc = 0;
};

inline BruteParts brute_decompose(const Mask& s) {
    BruteParts out;
    out.b.assign(s.size(), 0);
    out.m.assign(s.size(), 0);
    out.c.assign(s.size(), 0);
    const auto& d = s.dims();
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (!s.at(x, y, z)) continue;
                const auto i = s.geometry().index(x, y, z);
                if (window_sum(s, x, y, z, 3) != 27.0) {
                    out.b[i] = 1;
                    ++out.nb;
                } else if (window_sum(s, x, y, z, 7) != 343.0) {
                    out.m[i] = 1;
                    ++out.nm;
                } else {
                    out.c[i] = 1;
                    ++out.nc;
                }
            }
    return out;
}

/// Min over all sites of the physical distance to voxel i.
inline double brute_distance(const Geometry& g, std::size_t i, const std::vector<Voxel>& sites) {
    const Voxel p = g.voxel(i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : sites) {
        const double dx = (p.x - q.x) * g.spacing[0];
        const double dy = (p.y - q.y) * g.spacing[1];
        const double dz = (p.z - q.z) * g.spacing[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    return best;
}

/// Surface by direct neighbour inspection.
inline bool brute_is_surface(const Mask& m, const Voxel& v) {
    if (!m.contains(v)) return false;
    const Voxel n[6] = {{v.x - 1, v.y, v.z}, {v.x + 1, v.y, v.z}, {v.x, v.y - 1, v.z},
                        {v.x, v.y + 1, v.z}, {v.x, v.y, v.z - 1}, {v.x, v.y, v.z + 1}};
    for (const auto& q : n)
        if (!m.contains(q)) return true;
    return false;
}

/// NSD from all-pairs surface distances.
inline double brute_nsd(const Mask& pred, const Mask& gt, double tau) {
    std::vector<Voxel> sp, sg;
    for (const auto& v : pred.voxels())
        if (brute_is_surface(pred, v)) sp.push_back(v);
    for (const auto& v : gt.voxels())
        if (brute_is_surface(gt, v)) sg.push_back(v);
    if (sp.empty() && sg.empty()) return 1.0;
    if (sp.empty() || sg.empty()) return 0.0;
    std::size_t close = 0;
    for (const auto& v : sp)
        if (brute_distance(gt.geometry(), gt.geometry().index(v), sg) <= tau) ++close;
    for (const auto& v : sg)
        if (brute_distance(gt.geometry(), gt.geometry().index(v), sp) <= tau) ++close;
    return static_cast<double>(close) / static_cast<double>(sp.size() + sg.size());
}

/// Bellman-Ford style relaxation of 6-neighbour path lengths inside `m`.
inline std::vector<double> brute_geodesic(const Mask& m, const Voxel& from) {
    const auto& g = m.geometry();
    std::vector<double> dist(m.size(), std::numeric_limits<double>::infinity());
    if (!m.contains(from)) return dist;
    dist[g.index(from)] = 0.0;
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            if (!m[i] || dist[i] == std::numeric_limits<double>::infinity()) continue;
            const Voxel v = g.voxel(i);
            const Voxel n[6] = {{v.x - 1, v.y, v.z}, {v.x + 1, v.y, v.z}, {v.x, v.y - 1, v.z},
                                {v.x, v.y + 1, v.z}, {v.x, v.y, v.z - 1}, {v.x, v.y, v.z + 1}};
            for (int k = 0; k < 6; ++k) {
                if (!m.contains(n[k])) continue;
                const auto j = g.index(n[k]);
                const double nd = dist[i] + g.spacing[static_cast<std::size_t>(k / 2)];
                if (nd < dist[j]) {
                    dist[j] = nd;
                    changed = true;
                }
            }
        }
    }
    return dist;
}

/// Distance from v to the nearest background voxel or to the nearest voxel
/// centre just outside the grid, by exhaustive search.
inline double brute_depth(const Mask& m, const Voxel& v) {
    const auto& g = m.geometry();
    const auto& d = g.dims;
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t z = -1; z <= d.nz; ++z)
        for (std::int64_t y = -1; y <= d.ny; ++y)
            for (std::int64_t x = -1; x <= d.nx; ++x) {
                const bool outside = x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz;
                if (!outside && m.at(x, y, z)) continue;
                const double dx = (x - v.x) * g.spacing[0];
                const double dy = (y - v.y) * g.spacing[1];
                const double dz = (z - v.z) * g.spacing[2];
                best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
            }
    return best;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("promptbench-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport
