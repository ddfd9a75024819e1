#include "promptbench/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

#include "promptbench/error.hpp"
#include "promptbench/metrics.hpp"

namespace promptbench {

void OracleParams::validate() const {
    if (!(r_base >= 0.0) || !(alpha >= 0.0) || !(r_neg >= 0.0)) {
        throw ValidationError("oracle parameters r_base, alpha, r_neg must be >= 0");
    }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance from every voxel to the nearest background voxel; empty
// when the mask fills the whole volume.
std::vector<double> background_field(const Mask& gt) {
    std::vector<std::uint8_t> bg(gt.size());
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = gt[i] ? 0 : 1;
    const Mask background(gt.geometry(), std::move(bg));
    if (background.none()) return {};
    return squared_edt(background);
}

// Depth of v: the smaller of the background distance and the distance to
// the nearest voxel centre just outside the volume.
double depth_from(const Geometry& geometry, const std::vector<double>& inner, const Voxel& v) {
    const auto& d = geometry.dims;
    const auto& s = geometry.spacing;
    double best = inner.empty() ? kInf : inner[geometry.index(v)];
    const std::int64_t coord[3] = {v.x, v.y, v.z};
    const std::int64_t len[3] = {d.nx, d.ny, d.nz};
    for (int a = 0; a < 3; ++a) {
        const double before = static_cast<double>(coord[a] + 1) * s[a];
        const double after = static_cast<double>(len[a] - coord[a]) * s[a];
        best = std::min({best, before * before, after * after});
    }
    return std::sqrt(best);
}

// Dijkstra over 6-neighbours inside gt.  Reuses `dist` across calls; only the
// entries listed in `touched` are reset.
class GeodesicSearch {
public:
    explicit GeodesicSearch(const Mask& gt) : gt_(gt), dist_(gt.size(), kInf) {}

    template <typename Visit>
    void run(const Voxel& from, double limit, Visit&& visit) {
        for (auto i : touched_) dist_[i] = kInf;
        touched_.clear();
        if (!gt_.contains(from)) return;

        const auto& g = gt_.geometry();
        const auto& d = g.dims;
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        const auto src = g.index(from);
        dist_[src] = 0.0;
        touched_.push_back(src);
        heap.emplace(0.0, src);
        while (!heap.empty()) {
            const auto [du, u] = heap.top();
            heap.pop();
            if (du > dist_[u]) continue;
            visit(u, du);
            const Voxel p = g.voxel(u);
            const Voxel nbrs[6] = {{p.x - 1, p.y, p.z}, {p.x + 1, p.y, p.z},
                                   {p.x, p.y - 1, p.z}, {p.x, p.y + 1, p.z},
                                   {p.x, p.y, p.z - 1}, {p.x, p.y, p.z + 1}};
            for (int n = 0; n < 6; ++n) {
                const Voxel& q = nbrs[n];
                if (q.x < 0 || q.y < 0 || q.z < 0 || q.x >= d.nx || q.y >= d.ny || q.z >= d.nz) {
                    continue;
                }
                const auto qi = g.index(q);
                if (!gt_[qi]) continue;
                const double nd = du + g.spacing[static_cast<std::size_t>(n / 2)];
                if (nd > limit || nd >= dist_[qi]) continue;
                if (dist_[qi] == kInf) touched_.push_back(qi);
                dist_[qi] = nd;
                heap.emplace(nd, qi);
            }
        }
    }

private:
    const Mask& gt_;
    std::vector<double> dist_;
    std::vector<std::size_t> touched_;
};

}  // namespace

double depth_to_background(const Mask& gt, const Voxel& v) {
    if (!gt.geometry().contains(v)) throw ValidationError("depth_to_background: voxel outside volume");
    return depth_from(gt.geometry(), background_field(gt), v);
}

std::vector<double> geodesic_distances(const Mask& gt, const Voxel& from, double limit) {
    std::vector<double> out(gt.size(), kInf);
    GeodesicSearch search(gt);
    search.run(from, limit, [&](std::size_t idx, double d) { out[idx] = d; });
    return out;
}

SyntheticOracle::SyntheticOracle(Mask gt, OracleParams params)
    : gt_(std::move(gt)), params_(params) {
    params_.validate();
    if (gt_.none()) throw ValidationError("synthetic_segment: ground truth is empty");
    background_sq_ = background_field(gt_);
}

Mask SyntheticOracle::segment(const PromptSet& prompts) const {
    for (const auto& p : prompts.prompts) {
        if (!gt_.geometry().contains(p.voxel)) {
            throw ValidationError("synthetic_segment: prompt outside the volume");
        }
        if (p.label == PromptLabel::Positive && !gt_.contains(p.voxel)) {
            throw ValidationError("synthetic_segment: positive prompt outside the ground truth");
        }
    }

    std::vector<std::uint8_t> out(gt_.size(), 0);
    if (prompts.prompts.empty()) return Mask(gt_.geometry(), std::move(out));

    GeodesicSearch search(gt_);
    for (const auto& p : prompts.prompts) {
        if (p.label != PromptLabel::Positive) continue;
        const double radius =
            params_.r_base + params_.alpha * depth_from(gt_.geometry(), background_sq_, p.voxel);
        search.run(p.voxel, radius, [&](std::size_t idx, double) { out[idx] = 1; });
    }
    for (const auto& q : prompts.prompts) {
        if (q.label != PromptLabel::Negative) continue;
        search.run(q.voxel, params_.r_neg, [&](std::size_t idx, double) { out[idx] = 0; });
    }
    return Mask(gt_.geometry(), std::move(out));
}

Mask synthetic_segment(const Mask& gt, const PromptSet& prompts, const OracleParams& params) {
    return SyntheticOracle(gt, params).segment(prompts);
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::ordered_json to_json(const SegmenterBackend& backend) {
    nlohmann::ordered_json j;
    if (const auto* oracle = std::get_if<OracleParams>(&backend)) {
        j["kind"] = "synthetic-oracle";
        j["r_base"] = oracle->r_base;
        j["alpha"] = oracle->alpha;
        j["r_neg"] = oracle->r_neg;
    } else {
        const auto& ext = std::get<ExternalCommand>(backend);
        j["kind"] = "external-process";
        j["command"] = ext.argv;
        j["format"] = ext.format == VolumeFormat::Nifti ? "nifti" : "raw";
        j["timeout_s"] = ext.timeout_s;
        j["include_gt"] = ext.include_gt;
        if (!ext.stub_config.is_null()) j["stub_config"] = ext.stub_config;
    }
    return j;
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                    [&key = key](const char* a) { return key == a; });
        if (!ok) throw ValidationError(where + "." + key + ": unknown field");
    }
}

}  // namespace

SegmenterBackend backend_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": must be an object");
    const auto field = [&](const char* name) { return where + "." + name; };
    std::string kind;
    try {
        kind = j.at("kind").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(field("kind") + ": missing or not a string");
    }
    try {
        if (kind == "synthetic-oracle") {
            reject_unknown_keys(j, {"kind", "r_base", "alpha", "r_neg"}, where);
            OracleParams p;
            p.r_base = j.value("r_base", p.r_base);
            p.alpha = j.value("alpha", p.alpha);
            p.r_neg = j.value("r_neg", p.r_neg);
            try {
                p.validate();
            } catch (const ValidationError& e) {
                throw ValidationError(where + ": " + e.what());
            }
            return p;
        }
        if (kind == "external-process") {
            reject_unknown_keys(
                j, {"kind", "command", "format", "timeout_s", "include_gt", "stub_config"}, where);
            ExternalCommand c;
            if (!j.contains("command")) throw ValidationError(field("command") + ": missing");
            const auto& cmd = j.at("command");
            if (cmd.is_string()) {
                c.argv = {cmd.get<std::string>()};
            } else {
                c.argv = cmd.get<std::vector<std::string>>();
            }
            if (c.argv.empty() || c.argv.front().empty()) {
                throw ValidationError(field("command") + ": must name an executable");
            }
            const auto format = j.value("format", std::string("nifti"));
            if (format == "nifti") c.format = VolumeFormat::Nifti;
            else if (format == "raw") c.format = VolumeFormat::RawJson;
            else throw ValidationError(field("format") + ": expected \"nifti\" or \"raw\"");
            c.timeout_s = j.value("timeout_s", c.timeout_s);
            if (!(c.timeout_s > 0.0)) throw ValidationError(field("timeout_s") + ": must be > 0");
            c.include_gt = j.value("include_gt", false);
            if (j.contains("stub_config")) c.stub_config = j.at("stub_config");
            return c;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
    }
    throw ValidationError(field("kind") + ": unknown backend kind \"" + kind + "\"");
}

}  // namespace promptbench
