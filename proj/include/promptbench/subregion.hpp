#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "promptbench/volume.hpp"

namespace promptbench {

/// Boundary / margin / center partition of a foreground mask.
///
/// boundary = S & (|S - avg3(S)| > 0)
/// margin   = S & (|S - avg7(S)| > 0) minus boundary
/// center   = S minus margin minus boundary
///
/// avg_k is a k^3 box average with zero padding outside the volume.
struct SubRegions {
    Mask boundary;
    Mask margin;
    Mask center;
    Mask source;
};

/// Subset of {B, M, C}.  All three together is the whole mask.
class RegionSet {
public:
    static constexpr std::uint8_t kBoundary = 1;
    static constexpr std::uint8_t kMargin = 2;
    static constexpr std::uint8_t kCenter = 4;

    constexpr RegionSet() = default;
    constexpr explicit RegionSet(std::uint8_t bits) : bits_(bits & 7u) {}

    static constexpr RegionSet boundary() { return RegionSet(kBoundary); }
    static constexpr RegionSet margin() { return RegionSet(kMargin); }
    static constexpr RegionSet center() { return RegionSet(kCenter); }
    static constexpr RegionSet whole() { return RegionSet(kBoundary | kMargin | kCenter); }

    constexpr bool has_boundary() const { return (bits_ & kBoundary) != 0; }
    constexpr bool has_margin() const { return (bits_ & kMargin) != 0; }
    constexpr bool has_center() const { return (bits_ & kCenter) != 0; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr bool is_whole() const { return bits_ == 7; }
    constexpr std::uint8_t bits() const { return bits_; }

    /// "B", "M", "C", "B+M", "B+C", "M+C" or "whole".
    std::string tag() const;
    /// Accepts the tags above plus "W", "BM", "B,M", ... (case-sensitive letters).
    static RegionSet parse(std::string_view text);

    constexpr bool operator==(const RegionSet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

/// k^3 box average with zero padding; output has the input's dims.
/// Throws ValidationError when k is even or < 1.
Volume3 avg_pool(const Mask& mask, int k);

/// Mask of voxels where mask is 1 and the k-window average differs from 1.
Mask near_edge(const Mask& mask, int k);

SubRegions decompose(const Mask& mask);

/// Voxel-wise union of the selected parts.  Throws on an empty selector.
Mask union_region(const SubRegions& parts, RegionSet selector);

}  // namespace promptbench
