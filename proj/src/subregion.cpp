#include "promptbench/subregion.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "promptbench/error.hpp"

namespace promptbench {

std::string RegionSet::tag() const {
    if (is_whole()) return "whole";
    std::string out;
    auto add = [&out](const char* part) {
        if (!out.empty()) out += '+';
        out += part;
    };
    if (has_boundary()) add("B");
    if (has_margin()) add("M");
    if (has_center()) add("C");
    return out;
}

RegionSet RegionSet::parse(std::string_view text) {
    if (text == "whole" || text == "W") return whole();
    std::uint8_t bits = 0;
    for (char ch : text) {
        switch (ch) {
            case 'B': bits |= kBoundary; break;
            case 'M': bits |= kMargin; break;
            case 'C': bits |= kCenter; break;
            case '+':
            case ',':
            case ' ': break;
            default:
                throw ValidationError("unknown region selector \"" + std::string(text) + "\"");
        }
    }
    if (bits == 0) throw ValidationError("empty region selector \"" + std::string(text) + "\"");
    return RegionSet(bits);
}

namespace {

// In-place box sum of radius r along one axis, zero padded.  `stride` is the
// distance between consecutive samples of a line, `n` its length.
void box_sum_lines(std::vector<double>& data, const Dims& dims, int axis, int r) {
    const std::int64_t n = axis == 0 ? dims.nx : axis == 1 ? dims.ny : dims.nz;
    const std::int64_t stride = axis == 0 ? 1 : axis == 1 ? dims.nx : dims.nx * dims.ny;
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1);

    const std::int64_t total = static_cast<std::int64_t>(data.size());
    for (std::int64_t start = 0; start < total; ++start) {
        // A line starts wherever the coordinate along `axis` is zero.
        if ((start / stride) % n != 0) continue;
        prefix[0] = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            prefix[static_cast<std::size_t>(i) + 1] =
                prefix[static_cast<std::size_t>(i)] + data[static_cast<std::size_t>(start + i * stride)];
        }
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t lo = std::max<std::int64_t>(i - r, 0);
            const std::int64_t hi = std::min<std::int64_t>(i + r, n - 1);
            data[static_cast<std::size_t>(start + i * stride)] =
                prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
        }
    }
}

}  // namespace

Volume3 avg_pool(const Mask& mask, int k) {
    if (k < 1 || k % 2 == 0) {
        throw ValidationError("avg_pool kernel must be odd and positive, got " + std::to_string(k));
    }
    const int r = k / 2;
    std::vector<double> acc(mask.data().begin(), mask.data().end());
    // Sums of 0/1 values stay exact integers in double, so the three passes
    // reproduce the direct k^3 window sum exactly.
    for (int axis = 0; axis < 3; ++axis) box_sum_lines(acc, mask.dims(), axis, r);
    const double window = static_cast<double>(k) * k * k;
    for (double& v : acc) v /= window;
    return Volume3(mask.geometry(), std::move(acc));
}

Mask near_edge(const Mask& mask, int k) {
    // thres(x) = x > 0, with a floor absorbing rounding dust in the average.
    constexpr double kEps = 1e-12;
    const Volume3 pooled = avg_pool(mask, k);
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i]) {
            const double diff = std::abs(1.0 - pooled[i]);
            out[i] = diff > kEps ? 1 : 0;
        }
    }
    return Mask(mask.geometry(), std::move(out));
}

SubRegions decompose(const Mask& mask) {
    Mask boundary = near_edge(mask, 3);
    Mask margin = mask_difference(near_edge(mask, 7), boundary);
    Mask center = mask_difference(mask_difference(mask, margin), boundary);
    return SubRegions{std::move(boundary), std::move(margin), std::move(center), mask};
}

Mask union_region(const SubRegions& parts, RegionSet selector) {
    if (selector.empty()) throw ValidationError("union_region: empty selector");
    Mask out = Mask::empty(parts.source.geometry());
    if (selector.has_boundary()) out = mask_union(out, parts.boundary);
    if (selector.has_margin()) out = mask_union(out, parts.margin);
    if (selector.has_center()) out = mask_union(out, parts.center);
    return out;
}

}  // namespace promptbench
