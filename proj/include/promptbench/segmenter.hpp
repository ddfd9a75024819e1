#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "promptbench/sampling.hpp"
#include "promptbench/volume.hpp"

namespace promptbench {

/// Parameters of the synthetic stand-in model.  A positive prompt p claims
/// every ground-truth voxel within geodesic distance
/// r_base + alpha * depth(p), where depth(p) is the distance from p to the
/// nearest background voxel (outside of the volume counts as background).
struct OracleParams {
    double r_base = 3.0;  // mm
    double alpha = 1.5;
    double r_neg = 0.0;   // mm, carve radius of negative prompts

    void validate() const;
    bool operator==(const OracleParams&) const = default;
};

/// An external segmenter invoked as `<argv...> --input <dir>`.
struct ExternalCommand {
    std::vector<std::string> argv;
    VolumeFormat format = VolumeFormat::Nifti;
    double timeout_s = 600.0;
    /// Also write the ground truth as gt.nii / gt.raw (mirror testing only).
    bool include_gt = false;
    /// Written verbatim as stub_config.json when not null.
    nlohmann::json stub_config;

    bool operator==(const ExternalCommand&) const = default;
};

using SegmenterBackend = std::variant<OracleParams, ExternalCommand>;

/// Distance in mm from v to the nearest voxel outside `gt`, treating the
/// region beyond the volume as outside.
double depth_to_background(const Mask& gt, const Voxel& v);

/// Shortest 6-connected path lengths inside `gt` from `from`, in mm.  Voxels
/// outside gt or unreachable get +inf.  Search stops beyond `limit`.
std::vector<double> geodesic_distances(const Mask& gt, const Voxel& from,
                                       double limit = std::numeric_limits<double>::infinity());

/// Deterministic stand-in model.  Throws ValidationError for an empty gt or
/// a positive prompt outside gt.
Mask synthetic_segment(const Mask& gt, const PromptSet& prompts, const OracleParams& params);

/// synthetic_segment with the per-case depth field computed once.
class SyntheticOracle {
public:
    SyntheticOracle(Mask gt, OracleParams params);

    Mask segment(const PromptSet& prompts) const;

private:
    Mask gt_;
    OracleParams params_;
    std::vector<double> background_sq_;  // squared distance to background
};

struct ExternalRequest {
    std::string case_id;
    double tau_mm = 1.0;
};

/// Runs one request through the file protocol in `workdir`:
///   image.nii | image.raw+image.json, prompts.json, request.json
///   [gt.nii | gt.raw+gt.json], [stub_config.json]
/// and reads back pred.nii | pred.raw+pred.json.  Throws BackendError on a
/// nonzero exit, timeout, missing/ill-formed output or dims mismatch.
Mask external_segment(const Volume3& image, const PromptSet& prompts,
                      const ExternalCommand& command, const std::filesystem::path& workdir,
                      const ExternalRequest& request, const Mask* gt = nullptr);

nlohmann::ordered_json to_json(const SegmenterBackend& backend);
/// Throws ValidationError naming the offending field.
SegmenterBackend backend_from_json(const nlohmann::json& j, const std::string& where = "backend");

}  // namespace promptbench
