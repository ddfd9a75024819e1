#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace promptbench {

using Vec3 = std::array<double, 3>;

struct Dims {
    std::int64_t nx = 0;
    std::int64_t ny = 0;
    std::int64_t nz = 0;

    std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool operator==(const Dims&) const = default;
};

/// Integer voxel coordinate.
struct Voxel {
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int32_t z = 0;

    bool operator==(const Voxel&) const = default;
};

/// Canonical voxel order used everywhere a set of voxels is enumerated:
/// z ascending, then y, then x.  This equals flat-index order in the
/// x-fastest layout.
struct ZyxLess {
    bool operator()(const Voxel& a, const Voxel& b) const noexcept {
        if (a.z != b.z) return a.z < b.z;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    }
};

/// Shape and physical placement of a voxel grid.  Data is always stored
/// x-fastest: index = x + nx * (y + ny * z).
struct Geometry {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};  // mm
    Vec3 origin{0.0, 0.0, 0.0};   // mm

    std::size_t size() const noexcept { return dims.voxel_count(); }

    std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return static_cast<std::size_t>(x + dims.nx * (y + dims.ny * z));
    }
    std::size_t index(const Voxel& v) const noexcept { return index(v.x, v.y, v.z); }

    Voxel voxel(std::size_t idx) const noexcept {
        const auto i = static_cast<std::int64_t>(idx);
        return Voxel{static_cast<std::int32_t>(i % dims.nx),
                     static_cast<std::int32_t>((i / dims.nx) % dims.ny),
                     static_cast<std::int32_t>(i / (dims.nx * dims.ny))};
    }

    bool contains(const Voxel& v) const noexcept {
        return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims.nx && v.y < dims.ny &&
               v.z < dims.nz;
    }

    /// Throws ValidationError unless dims are positive and spacing is > 0.
    void validate() const;

    bool operator==(const Geometry&) const = default;
};

/// Dense scalar volume.  Immutable once constructed.
class Volume3 {
public:
    Volume3(Geometry geometry, std::vector<double> data);

    static Volume3 filled(const Geometry& geometry, double value);

    const Geometry& geometry() const noexcept { return geometry_; }
    const Dims& dims() const noexcept { return geometry_.dims; }
    std::size_t size() const noexcept { return data_.size(); }
    std::span<const double> data() const noexcept { return data_; }

    double operator[](std::size_t idx) const noexcept { return data_[idx]; }
    double at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return data_[geometry_.index(x, y, z)];
    }

    bool is_binary() const noexcept;

    bool operator==(const Volume3&) const = default;

private:
    Geometry geometry_;
    std::vector<double> data_;
};

/// Binary volume; every voxel is 0 or 1.  Immutable once constructed.
class Mask {
public:
    Mask(Geometry geometry, std::vector<std::uint8_t> data);

    static Mask empty(const Geometry& geometry);
    /// Throws ValidationError if any value is not exactly 0 or 1.
    static Mask from_volume(const Volume3& volume);

    const Geometry& geometry() const noexcept { return geometry_; }
    const Dims& dims() const noexcept { return geometry_.dims; }
    std::size_t size() const noexcept { return data_.size(); }
    std::span<const std::uint8_t> data() const noexcept { return data_; }

    bool operator[](std::size_t idx) const noexcept { return data_[idx] != 0; }
    bool at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return data_[geometry_.index(x, y, z)] != 0;
    }
    bool contains(const Voxel& v) const noexcept {
        return geometry_.contains(v) && data_[geometry_.index(v)] != 0;
    }

    std::size_t count() const noexcept;
    bool none() const noexcept { return count() == 0; }

    /// Foreground voxels in canonical (z, y, x) order.
    std::vector<Voxel> voxels() const;

    Volume3 to_volume() const;

    bool operator==(const Mask&) const = default;

private:
    Geometry geometry_;
    std::vector<std::uint8_t> data_;
};

Mask mask_union(const Mask& a, const Mask& b);
Mask mask_intersection(const Mask& a, const Mask& b);
/// a \ b
Mask mask_difference(const Mask& a, const Mask& b);

/// Throws ValidationError if the two grids differ in dims.
void require_same_dims(const Geometry& a, const Geometry& b, const char* what);

/// Percentile of `values` with linear interpolation between order
/// statistics (rank = p/100 * (n-1)).  `values` need not be sorted.
double percentile_linear(std::vector<double> values, double pct);

/// Clip to foreground percentiles [lo_pct, hi_pct], then z-score with the
/// mean and population std of the clipped foreground.  A std below 1e-8 is
/// treated as 1.
Volume3 preprocess_intensity(const Volume3& volume, const Mask& foreground, double lo_pct,
                             double hi_pct);

// ---------------------------------------------------------------------------
// File I/O

enum class VolumeFormat { Nifti, RawJson };
enum class StorageType { Auto, U8, F32, F64 };

/// Format implied by a path: ".nii" -> NIfTI-1, ".json"/".raw" -> raw blob +
/// JSON sidecar.  Throws FormatError for anything else.
VolumeFormat format_for_path(const std::filesystem::path& path);

/// For raw volumes both "<stem>.raw" and "<stem>.json" are accepted.
Volume3 load_volume(const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

/// Auto storage picks the narrowest lossless type: u8 for 0/1 data, f32 when
/// every value survives a float round trip, f64 otherwise.
void save_volume(const Volume3& volume, const std::filesystem::path& path,
                 StorageType storage = StorageType::Auto);
void save_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace promptbench
