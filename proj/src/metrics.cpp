#include "promptbench/metrics.hpp"

#include <cmath>
#include <limits>

#include "promptbench/error.hpp"

namespace promptbench {

double dice(const Mask& pred, const Mask& gt) {
    require_same_dims(pred.geometry(), gt.geometry(), "dice");
    std::size_t both = 0, np = 0, ng = 0;
    const auto p = pred.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        np += p[i];
        ng += g[i];
        both += p[i] & g[i];
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

Mask surface_voxels(const Mask& mask) {
    const auto& g = mask.geometry();
    const auto& d = g.dims;
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (std::int64_t z = 0; z < d.nz; ++z) {
        for (std::int64_t y = 0; y < d.ny; ++y) {
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                const bool interior = x > 0 && x + 1 < d.nx && y > 0 && y + 1 < d.ny && z > 0 &&
                                      z + 1 < d.nz && mask.at(x - 1, y, z) &&
                                      mask.at(x + 1, y, z) && mask.at(x, y - 1, z) &&
                                      mask.at(x, y + 1, z) && mask.at(x, y, z - 1) &&
                                      mask.at(x, y, z + 1);
                if (!interior) out[g.index(x, y, z)] = 1;
            }
        }
    }
    return Mask(g, std::move(out));
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional squared distance transform (Felzenszwalb & Huttenlocher)
// over samples at positions i * spacing.  f holds the incoming squared
// distances (inf = no site); d receives min_q f[q] + ((p - q) * spacing)^2.
void dt1d(const std::vector<double>& f, std::vector<double>& d, double spacing,
          std::vector<std::int64_t>& v, std::vector<double>& z) {
    const auto n = static_cast<std::int64_t>(f.size());
    const double s2 = spacing * spacing;
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        const double fq = f[q] + s2 * static_cast<double>(q * q);
        double cut = 0.0;
        for (;;) {
            const std::int64_t r = v[k];
            cut = (fq - (f[r] + s2 * static_cast<double>(r * r))) /
                  (2.0 * s2 * static_cast<double>(q - r));
            if (cut > z[k]) break;
            if (--k < 0) break;
        }
        ++k;
        v[k] = q;
        z[k] = k == 0 ? -kInf : cut;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), kInf);
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t p = 0; p < n; ++p) {
        while (z[j + 1] < static_cast<double>(p)) ++j;
        const double off = static_cast<double>(p - v[j]) * spacing;
        d[p] = off * off + f[v[j]];
    }
}

}  // namespace

std::vector<double> squared_edt(const Mask& mask) {
    if (mask.none()) throw ValidationError("edt: mask has no foreground");
    const auto& g = mask.geometry();
    const auto& dims = g.dims;
    std::vector<double> dist(mask.size());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = mask[i] ? 0.0 : kInf;

    const std::int64_t lens[3] = {dims.nx, dims.ny, dims.nz};
    const std::int64_t strides[3] = {1, dims.nx, dims.nx * dims.ny};
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = lens[axis];
        const std::int64_t stride = strides[axis];
        const int a1 = (axis + 1) % 3;
        const int a2 = (axis + 2) % 3;
        std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
        std::vector<std::int64_t> v(static_cast<std::size_t>(n));
        std::vector<double> z(static_cast<std::size_t>(n) + 1);
        for (std::int64_t i2 = 0; i2 < lens[a2]; ++i2) {
            for (std::int64_t i1 = 0; i1 < lens[a1]; ++i1) {
                const std::int64_t start = i1 * strides[a1] + i2 * strides[a2];
                for (std::int64_t i = 0; i < n; ++i) f[i] = dist[start + i * stride];
                dt1d(f, d, g.spacing[axis], v, z);
                for (std::int64_t i = 0; i < n; ++i) dist[start + i * stride] = d[i];
            }
        }
    }
    return dist;
}

Volume3 edt(const Mask& mask) {
    auto dist = squared_edt(mask);
    for (double& v : dist) v = std::sqrt(v);
    return Volume3(mask.geometry(), std::move(dist));
}

namespace {

void check_nsd_inputs(const Mask& pred, const Mask& gt, double tau_mm) {
    require_same_dims(pred.geometry(), gt.geometry(), "nsd");
    if (pred.geometry().spacing != gt.geometry().spacing) {
        throw ValidationError("nsd: spacing mismatch");
    }
    if (!(tau_mm >= 0.0)) throw ValidationError("nsd: tau must be >= 0");
}

// gt is known to be nonempty; surf_gt and to_gt are its surface and the
// squared distance field of that surface.
double nsd_against(const Mask& pred, const Mask& surf_gt, const std::vector<double>& to_gt,
                   double tau_mm) {
    if (pred.none()) return 0.0;
    const Mask surf_pred = surface_voxels(pred);
    const auto to_pred = squared_edt(surf_pred);
    std::size_t n_pred = 0, n_gt = 0, close = 0;
    for (std::size_t i = 0; i < surf_pred.size(); ++i) {
        if (surf_pred[i]) {
            ++n_pred;
            if (std::sqrt(to_gt[i]) <= tau_mm) ++close;
        }
        if (surf_gt[i]) {
            ++n_gt;
            if (std::sqrt(to_pred[i]) <= tau_mm) ++close;
        }
    }
    return static_cast<double>(close) / static_cast<double>(n_pred + n_gt);
}

}  // namespace

double nsd(const Mask& pred, const Mask& gt, double tau_mm) {
    check_nsd_inputs(pred, gt, tau_mm);
    if (gt.none()) return pred.none() ? 1.0 : 0.0;
    const Mask surf_gt = surface_voxels(gt);
    return nsd_against(pred, surf_gt, squared_edt(surf_gt), tau_mm);
}

MetricRecord evaluate(const Mask& pred, const Mask& gt, double tau_mm) {
    return MetricRecord{dice(pred, gt), nsd(pred, gt, tau_mm), tau_mm};
}

MetricReference::MetricReference(Mask gt) : gt_(std::move(gt)), surface_(surface_voxels(gt_)) {
    if (!gt_.none()) to_surface_ = squared_edt(surface_);
}

MetricRecord MetricReference::evaluate(const Mask& pred, double tau_mm) const {
    check_nsd_inputs(pred, gt_, tau_mm);
    const double n = gt_.none() ? (pred.none() ? 1.0 : 0.0)
                                : nsd_against(pred, surface_, to_surface_, tau_mm);
    return MetricRecord{dice(pred, gt_), n, tau_mm};
}

}  // namespace promptbench
