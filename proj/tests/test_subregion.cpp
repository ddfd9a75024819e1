#include <doctest.h>

#include "promptbench/error.hpp"
#include "promptbench/subregion.hpp"
#include "support.hpp"

using namespace promptbench;
using namespace testsupport;

TEST_CASE("avg_pool matches direct window sums") {
    SplitMix64 rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const Geometry g = grid(uniform_int(rng, 1, 9), uniform_int(rng, 1, 9), uniform_int(rng, 1, 9));
        const Mask m = random_mask(g, unit(rng), rng);
        for (int k : {1, 3, 5, 7}) {
            const Volume3 pooled = avg_pool(m, k);
            const double norm = static_cast<double>(k) * k * k;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Voxel v = g.voxel(i);
                CHECK(std::abs(pooled[i] - window_sum(m, v.x, v.y, v.z, k) / norm) <= 1e-12);
            }
        }
    }
}

TEST_CASE("avg_pool rejects even and non-positive kernels") {
    const Mask m = solid_cube(3);
    CHECK_THROWS_AS(avg_pool(m, 2), ValidationError);
    CHECK_THROWS_AS(avg_pool(m, 0), ValidationError);
    CHECK_THROWS_AS(avg_pool(m, -3), ValidationError);
}

TEST_CASE("7x7x7 cube decomposes into 218 / 124 / 1") {
    const SubRegions p = decompose(solid_cube(7));
    CHECK(p.boundary.count() == 218);
    CHECK(p.margin.count() == 124);
    CHECK(p.center.count() == 1);
    CHECK(p.center.at(3, 3, 3));
}

TEST_CASE("cube embedded in background matches the brute-force counts") {
    for (std::int64_t edge : {1, 2, 3, 5, 7, 9, 11}) {
        const Mask m = embedded_cube(edge + 6, edge);
        const SubRegions p = decompose(m);
        const BruteParts b = brute_decompose(m);
        CHECK(p.boundary.count() == b.nb);
        CHECK(p.margin.count() == b.nm);
        CHECK(p.center.count() == b.nc);
        // Closed forms: shells of the cube.
        auto cube = [](std::int64_t e) { return e > 0 ? e * e * e : 0; };
        CHECK(b.nb == static_cast<std::size_t>(cube(edge) - cube(edge - 2)));
        CHECK(b.nc == static_cast<std::size_t>(cube(edge - 6)));
    }
}

TEST_CASE("decompose agrees voxel by voxel with the window-count oracle") {
    SplitMix64 rng(202);
    for (int trial = 0; trial < 30; ++trial) {
        const Geometry g = grid(uniform_int(rng, 1, 14), uniform_int(rng, 1, 14), uniform_int(rng, 1, 14));
        const Mask m = trial % 2 ? random_mask(g, 0.6 + 0.4 * unit(rng), rng) : random_blobby_mask(g, rng);
        const SubRegions p = decompose(m);
        const BruteParts b = brute_decompose(m);
        CHECK(std::equal(b.b.begin(), b.b.end(), p.boundary.data().begin()));
        CHECK(std::equal(b.m.begin(), b.m.end(), p.margin.data().begin()));
        CHECK(std::equal(b.c.begin(), b.c.end(), p.center.data().begin()));
    }
}

TEST_CASE("sub-regions partition the mask") {
    SplitMix64 rng(303);
    for (int trial = 0; trial < 50; ++trial) {
        const Geometry g = grid(uniform_int(rng, 1, 20), uniform_int(rng, 1, 20), uniform_int(rng, 1, 20));
        const Mask m = random_blobby_mask(g, rng, 1 + static_cast<int>(rng.bounded(4)));
        const SubRegions p = decompose(m);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const int members = p.boundary[i] + p.margin[i] + p.center[i];
            CHECK(members == (m[i] ? 1 : 0));
        }
        CHECK(p.source == m);
    }
}

TEST_CASE("empty and full-volume masks") {
    const SubRegions e = decompose(Mask::empty(grid(4, 4, 4)));
    CHECK(e.boundary.none());
    CHECK(e.margin.none());
    CHECK(e.center.none());
    // Zero padding makes the outer shell boundary even when the mask fills the volume.
    const SubRegions f = decompose(solid_cube(9));
    CHECK(f.boundary.count() == 9 * 9 * 9 - 7 * 7 * 7);
    CHECK(f.center.count() == 27);
}

TEST_CASE("near_edge with k = 1 is empty") {
    SplitMix64 rng(9);
    const Mask m = random_mask(grid(5, 5, 5), 0.5, rng);
    CHECK(near_edge(m, 1).none());
}

TEST_CASE("RegionSet tags and parsing") {
    CHECK(RegionSet::boundary().tag() == "B");
    CHECK(RegionSet(RegionSet::kBoundary | RegionSet::kCenter).tag() == "B+C");
    CHECK(RegionSet(RegionSet::kMargin | RegionSet::kCenter).tag() == "M+C");
    CHECK(RegionSet::whole().tag() == "whole");
    for (std::uint8_t bits = 1; bits < 8; ++bits) {
        const RegionSet r(bits);
        CHECK(RegionSet::parse(r.tag()) == r);
    }
    CHECK(RegionSet::parse("W") == RegionSet::whole());
    CHECK(RegionSet::parse("B+M+C") == RegionSet::whole());
    CHECK(RegionSet::parse("B,M") == RegionSet(3));
    CHECK(RegionSet::parse("BM") == RegionSet(3));
    CHECK_THROWS_AS(RegionSet::parse(""), ValidationError);
    CHECK_THROWS_AS(RegionSet::parse("X"), ValidationError);
    CHECK_THROWS_AS(RegionSet::parse("b"), ValidationError);
}

TEST_CASE("union_region selects parts") {
    const SubRegions p = decompose(solid_cube(7));
    CHECK(union_region(p, RegionSet::whole()).count() == 343);
    CHECK(union_region(p, RegionSet(RegionSet::kMargin | RegionSet::kCenter)).count() == 125);
    CHECK(union_region(p, RegionSet::boundary()) == p.boundary);
    CHECK_THROWS_AS(union_region(p, RegionSet()), ValidationError);
}

TEST_CASE("avg_pool worked examples") {
    const Mask ones = solid_cube(3);
    const Volume3 p = avg_pool(ones, 3);
    CHECK(p.at(1, 1, 1) == 1.0);
    CHECK(p.at(0, 0, 0) == doctest::Approx(8.0 / 27.0).epsilon(1e-15));
    std::vector<std::uint8_t> data(27, 0);
    data[13] = 1;
    const Volume3 q = avg_pool(Mask(grid(3, 3, 3), data), 3);
    for (std::size_t i = 0; i < 27; ++i) CHECK(q[i] == doctest::Approx(1.0 / 27.0).epsilon(1e-15));
}

TEST_CASE("7x7x7 cube inside a 9x9x9 volume") {
    const SubRegions p = decompose(embedded_cube(9, 7));
    CHECK(p.boundary.count() == 218);
    CHECK(p.margin.count() == 124);
    CHECK(p.center.count() == 1);
    CHECK(p.center.at(4, 4, 4));
    CHECK(union_region(p, RegionSet::center()).voxels() == std::vector<Voxel>{{4, 4, 4}});
}

TEST_CASE("a single voxel is all boundary") {
    std::vector<std::uint8_t> data(125, 0);
    data[62] = 1;
    const Mask dot(grid(5, 5, 5), data);
    const SubRegions p = decompose(dot);
    CHECK(p.boundary == dot);
    CHECK(p.margin.none());
    CHECK(p.center.none());
    CHECK(union_region(p, RegionSet::boundary()) == dot);
}
