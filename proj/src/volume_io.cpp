#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include <json.hpp>

#include "promptbench/error.hpp"
#include "promptbench/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "volume I/O assumes a little-endian host");

namespace promptbench {
namespace {

// NIfTI-1 datatype codes.
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiVoxOffset = 352;

std::vector<char> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_all(const fs::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
T get(const std::vector<char>& bytes, std::size_t offset) {
    T v;
    std::memcpy(&v, bytes.data() + offset, sizeof(T));
    return v;
}

template <typename T>
void put(std::vector<char>& bytes, std::size_t offset, T v) {
    std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

std::size_t bytes_per_voxel(StorageType t) {
    switch (t) {
        case StorageType::U8: return 1;
        case StorageType::F32: return 4;
        case StorageType::F64: return 8;
        case StorageType::Auto: break;
    }
    throw ValidationError("storage type must be resolved");
}

StorageType resolve_storage(const Volume3& v, StorageType requested) {
    if (requested != StorageType::Auto) return requested;
    if (v.is_binary()) return StorageType::U8;
    for (double x : v.data()) {
        if (static_cast<double>(static_cast<float>(x)) != x && !std::isnan(x)) {
            return StorageType::F64;
        }
    }
    return StorageType::F32;
}

std::vector<char> encode_values(const Volume3& v, StorageType t) {
    std::vector<char> out(v.size() * bytes_per_voxel(t));
    const auto data = v.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        switch (t) {
            case StorageType::U8: {
                const double x = data[i];
                if (!(x >= 0.0 && x <= 255.0) || x != std::floor(x)) {
                    throw ValidationError("value not representable as u8");
                }
                out[i] = static_cast<char>(static_cast<std::uint8_t>(x));
                break;
            }
            case StorageType::F32: put(out, i * 4, static_cast<float>(data[i])); break;
            case StorageType::F64: put(out, i * 8, data[i]); break;
            case StorageType::Auto: break;
        }
    }
    return out;
}

std::vector<double> decode_values(const std::vector<char>& bytes, std::size_t offset,
                                  std::size_t n, std::int16_t nifti_type) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (nifti_type) {
            case kDtUint8:
                out[i] = static_cast<unsigned char>(bytes[offset + i]);
                break;
            case kDtInt16: out[i] = get<std::int16_t>(bytes, offset + 2 * i); break;
            case kDtFloat32: out[i] = get<float>(bytes, offset + 4 * i); break;
            case kDtFloat64: out[i] = get<double>(bytes, offset + 8 * i); break;
            default: throw FormatError("unsupported NIfTI datatype " + std::to_string(nifti_type));
        }
    }
    return out;
}

std::size_t nifti_bytes_per_voxel(std::int16_t nifti_type) {
    switch (nifti_type) {
        case kDtUint8: return 1;
        case kDtInt16: return 2;
        case kDtFloat32: return 4;
        case kDtFloat64: return 8;
        default: throw FormatError("unsupported NIfTI datatype " + std::to_string(nifti_type));
    }
}

// ---------------------------------------------------------------------------
// NIfTI-1 single file (.nii), uncompressed, no extensions written.

Volume3 load_nifti(const fs::path& path) {
    const auto bytes = read_all(path);
    if (bytes.size() < kNiftiHeaderSize) throw FormatError("truncated NIfTI header: " + path.string());

    const auto sizeof_hdr = get<std::int32_t>(bytes, 0);
    if (sizeof_hdr != 348) {
        if (sizeof_hdr == 0x5C010000) {  // 348 byte-swapped
            throw FormatError("big-endian NIfTI is not supported: " + path.string());
        }
        throw FormatError("not a NIfTI-1 file (sizeof_hdr != 348): " + path.string());
    }
    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
        throw FormatError("only single-file NIfTI-1 (magic n+1) is supported: " + path.string());
    }

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(bytes, 40 + 2 * i);
    if (dim[0] < 1 || dim[0] > 7) throw FormatError("invalid NIfTI dim[0]");
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[i] != 1) throw FormatError("only single-frame 3D NIfTI volumes are supported");
    }
    Geometry geom;
    geom.dims = Dims{dim[1], dim[0] >= 2 ? dim[2] : 1, dim[0] >= 3 ? dim[3] : 1};

    const auto datatype = get<std::int16_t>(bytes, 70);
    float pixdim[8];
    for (int i = 0; i < 8; ++i) pixdim[i] = get<float>(bytes, 76 + 4 * i);
    geom.spacing = {pixdim[1], dim[0] >= 2 ? pixdim[2] : 1.0f, dim[0] >= 3 ? pixdim[3] : 1.0f};

    const auto vox_offset = static_cast<std::size_t>(get<float>(bytes, 108));
    const float scl_slope = get<float>(bytes, 112);
    const float scl_inter = get<float>(bytes, 116);

    const auto qform_code = get<std::int16_t>(bytes, 252);
    const auto sform_code = get<std::int16_t>(bytes, 254);
    if (qform_code > 0) {
        const float b = get<float>(bytes, 256), c = get<float>(bytes, 260), d = get<float>(bytes, 264);
        if (b != 0.0f || c != 0.0f || d != 0.0f) {
            throw FormatError("only identity/diagonal qform orientation is supported");
        }
        geom.origin = {get<float>(bytes, 268), get<float>(bytes, 272), get<float>(bytes, 276)};
    } else if (sform_code > 0) {
        for (int row = 0; row < 3; ++row) {
            for (int col = 0; col < 3; ++col) {
                if (row != col && get<float>(bytes, 280 + 16 * row + 4 * col) != 0.0f) {
                    throw FormatError("only diagonal sform orientation is supported");
                }
            }
            geom.origin[row] = get<float>(bytes, 280 + 16 * row + 12);
        }
    }
    try {
        geom.validate();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("invalid NIfTI header: ") + e.what());
    }

    const std::size_t n = geom.size();
    const std::size_t need = vox_offset + n * nifti_bytes_per_voxel(datatype);
    if (vox_offset < kNiftiHeaderSize || bytes.size() < need) {
        throw FormatError("NIfTI header/data size mismatch: " + path.string());
    }
    auto values = decode_values(bytes, vox_offset, n, datatype);
    if (scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f)) {
        for (double& v : values) v = v * scl_slope + scl_inter;
    }
    return Volume3(geom, std::move(values));
}

void save_nifti(const Volume3& vol, const fs::path& path, StorageType storage) {
    const auto& g = vol.geometry();
    constexpr auto kMaxDim = std::numeric_limits<std::int16_t>::max();
    if (g.dims.nx > kMaxDim || g.dims.ny > kMaxDim || g.dims.nz > kMaxDim) {
        throw ValidationError("dims too large for NIfTI-1");
    }
    std::int16_t datatype = kDtFloat32;
    std::int16_t bitpix = 32;
    switch (storage) {
        case StorageType::U8: datatype = kDtUint8; bitpix = 8; break;
        case StorageType::F32: datatype = kDtFloat32; bitpix = 32; break;
        case StorageType::F64: datatype = kDtFloat64; bitpix = 64; break;
        case StorageType::Auto: break;
    }

    std::vector<char> header(kNiftiVoxOffset, 0);
    put<std::int32_t>(header, 0, 348);
    put<char>(header, 38, 'r');  // regular
    const std::int16_t dim[8] = {3,
                                 static_cast<std::int16_t>(g.dims.nx),
                                 static_cast<std::int16_t>(g.dims.ny),
                                 static_cast<std::int16_t>(g.dims.nz),
                                 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) put(header, 40 + 2 * i, dim[i]);
    put(header, 70, datatype);
    put(header, 72, bitpix);
    const float pixdim[8] = {1.0f,
                             static_cast<float>(g.spacing[0]),
                             static_cast<float>(g.spacing[1]),
                             static_cast<float>(g.spacing[2]),
                             0.0f, 0.0f, 0.0f, 0.0f};
    for (int i = 0; i < 8; ++i) put(header, 76 + 4 * i, pixdim[i]);
    put(header, 108, static_cast<float>(kNiftiVoxOffset));
    put(header, 112, 1.0f);   // scl_slope
    put(header, 116, 0.0f);   // scl_inter
    put<char>(header, 123, 2);  // xyzt_units: mm
    put<std::int16_t>(header, 252, 1);  // qform_code: scanner
    put<std::int16_t>(header, 254, 1);  // sform_code: scanner
    put(header, 268, static_cast<float>(g.origin[0]));
    put(header, 272, static_cast<float>(g.origin[1]));
    put(header, 276, static_cast<float>(g.origin[2]));
    for (int row = 0; row < 3; ++row) {
        put(header, 280 + 16 * row + 4 * row, static_cast<float>(g.spacing[row]));
        put(header, 280 + 16 * row + 12, static_cast<float>(g.origin[row]));
    }
    std::memcpy(header.data() + 344, "n+1\0", 4);
    // bytes 348..351: extension flag, left zero.

    auto payload = encode_values(vol, storage);
    header.insert(header.end(), payload.begin(), payload.end());
    write_all(path, header.data(), header.size());
}

// ---------------------------------------------------------------------------
// Raw little-endian blob + JSON sidecar.

std::pair<fs::path, fs::path> raw_pair(const fs::path& path) {
    fs::path raw = path;
    fs::path side = path;
    raw.replace_extension(".raw");
    side.replace_extension(".json");
    return {raw, side};
}

const char* dtype_name(StorageType t) {
    switch (t) {
        case StorageType::U8: return "u8";
        case StorageType::F32: return "f32";
        case StorageType::F64: return "f64";
        case StorageType::Auto: break;
    }
    return "f32";
}

Volume3 load_raw(const fs::path& path) {
    const auto [raw, side] = raw_pair(path);
    json header;
    {
        std::ifstream in(side);
        if (!in) throw IoError("cannot open sidecar " + side.string());
        try {
            header = json::parse(in);
        } catch (const json::exception& e) {
            throw FormatError("malformed sidecar " + side.string() + ": " + e.what());
        }
    }
    Geometry geom;
    std::string dtype;
    try {
        const auto dims = header.at("dims").get<std::vector<std::int64_t>>();
        const auto spacing = header.at("spacing").get<std::vector<double>>();
        const auto origin = header.contains("origin") ? header.at("origin").get<std::vector<double>>()
                                                      : std::vector<double>{0.0, 0.0, 0.0};
        if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3) {
            throw FormatError("sidecar dims/spacing/origin must have 3 entries");
        }
        geom.dims = Dims{dims[0], dims[1], dims[2]};
        geom.spacing = {spacing[0], spacing[1], spacing[2]};
        geom.origin = {origin[0], origin[1], origin[2]};
        dtype = header.at("dtype").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError("invalid sidecar " + side.string() + ": " + e.what());
    }
    try {
        geom.validate();
    } catch (const ValidationError& e) {
        throw FormatError("invalid sidecar " + side.string() + ": " + e.what());
    }

    std::int16_t code = 0;
    if (dtype == "u8") code = kDtUint8;
    else if (dtype == "f32") code = kDtFloat32;
    else if (dtype == "f64") code = kDtFloat64;
    else throw FormatError("unsupported dtype \"" + dtype + "\" in " + side.string());

    const auto bytes = read_all(raw);
    const std::size_t n = geom.size();
    if (bytes.size() != n * nifti_bytes_per_voxel(code)) {
        throw FormatError("raw size " + std::to_string(bytes.size()) + " bytes does not match " +
                          std::to_string(n) + " voxels of " + dtype + ": " + raw.string());
    }
    return Volume3(geom, decode_values(bytes, 0, n, code));
}

void save_raw(const Volume3& vol, const fs::path& path, StorageType storage) {
    const auto [raw, side] = raw_pair(path);
    const auto& g = vol.geometry();
    nlohmann::ordered_json header;
    header["dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
    header["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
    header["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
    header["dtype"] = dtype_name(storage);
    const auto payload = encode_values(vol, storage);
    write_all(raw, payload.data(), payload.size());
    const std::string text = header.dump(2) + "\n";
    write_all(side, text.data(), text.size());
}

}  // namespace

VolumeFormat format_for_path(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".nii") return VolumeFormat::Nifti;
    if (ext == ".raw" || ext == ".json") return VolumeFormat::RawJson;
    throw FormatError("unsupported volume file extension \"" + ext + "\": " + path.string());
}

Volume3 load_volume(const fs::path& path) {
    switch (format_for_path(path)) {
        case VolumeFormat::Nifti: return load_nifti(path);
        case VolumeFormat::RawJson: return load_raw(path);
    }
    throw FormatError("unreachable");
}

Mask load_mask(const fs::path& path) { return Mask::from_volume(load_volume(path)); }

void save_volume(const Volume3& volume, const fs::path& path, StorageType storage) {
    const auto resolved = resolve_storage(volume, storage);
    if (path.has_parent_path() && !fs::is_directory(path.parent_path())) {
        throw IoError("parent directory does not exist: " + path.parent_path().string());
    }
    switch (format_for_path(path)) {
        case VolumeFormat::Nifti: save_nifti(volume, path, resolved); return;
        case VolumeFormat::RawJson: save_raw(volume, path, resolved); return;
    }
}

void save_mask(const Mask& mask, const fs::path& path) {
    save_volume(mask.to_volume(), path, StorageType::U8);
}

}  // namespace promptbench
