#include "promptbench/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "promptbench/error.hpp"

namespace promptbench {

void Geometry::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
        throw ValidationError("volume dims must be positive, got (" + std::to_string(dims.nx) +
                              "," + std::to_string(dims.ny) + "," + std::to_string(dims.nz) +
                              ")");
    }
    for (double s : spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw ValidationError("volume spacing must be finite and > 0");
        }
    }
}

Volume3::Volume3(Geometry geometry, std::vector<double> data)
    : geometry_(std::move(geometry)), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.size()) {
        throw ValidationError("volume data length " + std::to_string(data_.size()) +
                              " does not match dims (" + std::to_string(geometry_.size()) +
                              " voxels)");
    }
}

Volume3 Volume3::filled(const Geometry& geometry, double value) {
    return Volume3(geometry, std::vector<double>(geometry.size(), value));
}

bool Volume3::is_binary() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

Mask::Mask(Geometry geometry, std::vector<std::uint8_t> data)
    : geometry_(std::move(geometry)), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.size()) {
        throw ValidationError("mask data length " + std::to_string(data_.size()) +
                              " does not match dims (" + std::to_string(geometry_.size()) +
                              " voxels)");
    }
    for (auto v : data_) {
        if (v > 1) throw ValidationError("mask values must be 0 or 1");
    }
}

Mask Mask::empty(const Geometry& geometry) {
    return Mask(geometry, std::vector<std::uint8_t>(geometry.size(), 0));
}

Mask Mask::from_volume(const Volume3& volume) {
    std::vector<std::uint8_t> bits(volume.size());
    const auto values = volume.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] == 1.0) {
            bits[i] = 1;
        } else if (values[i] != 0.0) {
            throw ValidationError("mask is not binary: voxel " + std::to_string(i) +
                                  " has value " + std::to_string(values[i]));
        }
    }
    return Mask(volume.geometry(), std::move(bits));
}

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

std::vector<Voxel> Mask::voxels() const {
    std::vector<Voxel> out;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i]) out.push_back(geometry_.voxel(i));
    }
    return out;
}

Volume3 Mask::to_volume() const {
    return Volume3(geometry_, std::vector<double>(data_.begin(), data_.end()));
}

void require_same_dims(const Geometry& a, const Geometry& b, const char* what) {
    if (a.dims != b.dims) {
        throw ValidationError(std::string(what) + ": dims mismatch");
    }
}

namespace {

template <typename Op>
Mask combine(const Mask& a, const Mask& b, Op op, const char* what) {
    require_same_dims(a.geometry(), b.geometry(), what);
    std::vector<std::uint8_t> out(a.size());
    const auto da = a.data();
    const auto db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(da[i], db[i]) ? 1 : 0;
    return Mask(a.geometry(), std::move(out));
}

}  // namespace

Mask mask_union(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x || y; }, "mask_union");
}

Mask mask_intersection(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x && y; }, "mask_intersection");
}

Mask mask_difference(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x && !y; }, "mask_difference");
}

double percentile_linear(std::vector<double> values, double pct) {
    if (values.empty()) throw ValidationError("percentile of an empty set");
    if (!(pct >= 0.0 && pct <= 100.0)) throw ValidationError("percentile outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Volume3 preprocess_intensity(const Volume3& volume, const Mask& foreground, double lo_pct,
                             double hi_pct) {
    require_same_dims(volume.geometry(), foreground.geometry(), "preprocess_intensity");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0)) {
        throw ValidationError("preprocess_intensity requires 0 <= lo_pct < hi_pct <= 100");
    }
    std::vector<double> fg_values;
    for (std::size_t i = 0; i < volume.size(); ++i) {
        if (foreground[i]) fg_values.push_back(volume[i]);
    }
    if (fg_values.empty()) throw ValidationError("preprocess_intensity: empty foreground");

    const double p_lo = percentile_linear(fg_values, lo_pct);
    const double p_hi = percentile_linear(fg_values, hi_pct);

    std::vector<double> clipped(volume.data().begin(), volume.data().end());
    for (double& v : clipped) v = std::clamp(v, p_lo, p_hi);

    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < clipped.size(); ++i) {
        if (foreground[i]) {
            sum += clipped[i];
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < clipped.size(); ++i) {
        if (foreground[i]) ss += (clipped[i] - mean) * (clipped[i] - mean);
    }
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd < 1e-8) sd = 1.0;

    for (double& v : clipped) v = (v - mean) / sd;
    return Volume3(volume.geometry(), std::move(clipped));
}

}  // namespace promptbench
