#pragma once

#include <vector>

#include "promptbench/volume.hpp"

namespace promptbench {

struct MetricRecord {
    double dice = 0.0;
    double nsd = 0.0;
    double tau_mm = 1.0;

    bool operator==(const MetricRecord&) const = default;
};

constexpr double kDefaultTauMm = 1.0;

/// 2|P & G| / (|P| + |G|); 1.0 when both are empty.
double dice(const Mask& pred, const Mask& gt);

/// Foreground voxels with at least one 6-neighbour that is background or
/// outside the volume.
Mask surface_voxels(const Mask& mask);

/// Exact Euclidean distance (mm, spacing honoured) from every voxel to the
/// nearest foreground voxel.  Separable lower-envelope transform.
/// Throws ValidationError on an empty mask.
Volume3 edt(const Mask& mask);

/// Same as edt but returns squared distances, which are exact for
/// integer-times-spacing offsets.
std::vector<double> squared_edt(const Mask& mask);

/// Normalised surface Dice at tolerance tau_mm, on voxel-centre surfaces.
/// 1.0 when both masks are empty, 0.0 when exactly one is.
double nsd(const Mask& pred, const Mask& gt, double tau_mm);

MetricRecord evaluate(const Mask& pred, const Mask& gt, double tau_mm = kDefaultTauMm);

/// Ground-truth side of evaluate(), computed once for many predictions of
/// the same case.  Results are identical to evaluate(pred, gt, tau_mm).
class MetricReference {
public:
    explicit MetricReference(Mask gt);

    const Mask& gt() const noexcept { return gt_; }
    MetricRecord evaluate(const Mask& pred, double tau_mm = kDefaultTauMm) const;

private:
    Mask gt_;
    Mask surface_;
    std::vector<double> to_surface_;  // squared distance to the gt surface
};

}  // namespace promptbench
