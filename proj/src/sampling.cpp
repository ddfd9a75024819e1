#include "promptbench/sampling.hpp"

#include <algorithm>

#include "promptbench/error.hpp"
#include "promptbench/rng.hpp"

namespace promptbench {

std::vector<Voxel> PromptSet::voxels() const {
    std::vector<Voxel> out;
    out.reserve(prompts.size());
    for (const auto& p : prompts) out.push_back(p.voxel);
    return out;
}

StrategySpec StrategySpec::random_whole(std::size_t count) {
    StrategySpec s;
    s.kind = StrategyKind::RandomWhole;
    s.region = RegionSet::whole();
    s.count = count;
    return s;
}

StrategySpec StrategySpec::region_constrained(RegionSet region, std::size_t count) {
    StrategySpec s;
    s.kind = StrategyKind::RegionConstrained;
    s.region = region;
    s.count = count;
    return s;
}

StrategySpec StrategySpec::cumulative(RegionSet initial_region, std::size_t initial_count,
                                      RegionSet cumulative_region, std::size_t cumulative_count) {
    StrategySpec s;
    s.kind = StrategyKind::Cumulative;
    s.initial_region = initial_region;
    s.initial_count = initial_count;
    s.initial_seed_role = SeedRole::Fixed;
    s.cumulative_region = cumulative_region;
    s.cumulative_count = cumulative_count;
    s.cumulative_seed_role = SeedRole::PerRun;
    return s;
}

StrategySpec StrategySpec::initial_varied(RegionSet initial_region, std::size_t initial_count,
                                          RegionSet cumulative_region,
                                          std::size_t cumulative_count) {
    StrategySpec s = cumulative(initial_region, initial_count, cumulative_region, cumulative_count);
    s.kind = StrategyKind::InitialVaried;
    s.initial_seed_role = SeedRole::PerRun;
    s.cumulative_seed_role = SeedRole::Fixed;
    return s;
}

void StrategySpec::validate() const {
    if (total_count() == 0) throw ValidationError("strategy must request at least one prompt");
    switch (kind) {
        case StrategyKind::RandomWhole:
        case StrategyKind::RegionConstrained:
            if (region.empty()) throw ValidationError("strategy region selector is empty");
            break;
        case StrategyKind::Cumulative:
            if (initial_seed_role != SeedRole::Fixed || cumulative_seed_role != SeedRole::PerRun) {
                throw ValidationError("cumulative strategy needs a fixed initial seed and a per-run "
                                      "cumulative seed");
            }
            break;
        case StrategyKind::InitialVaried:
            if (initial_seed_role != SeedRole::PerRun || cumulative_seed_role != SeedRole::Fixed) {
                throw ValidationError("initial-varied strategy needs a per-run initial seed and a "
                                      "fixed cumulative seed");
            }
            break;
    }
    if (two_stage()) {
        if (initial_count > 0 && initial_region.empty()) {
            throw ValidationError("strategy initial region selector is empty");
        }
        if (cumulative_count > 0 && cumulative_region.empty()) {
            throw ValidationError("strategy cumulative region selector is empty");
        }
    }
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::RandomWhole: return "random-whole";
        case StrategyKind::RegionConstrained: return "region-constrained";
        case StrategyKind::Cumulative: return "cumulative";
        case StrategyKind::InitialVaried: return "initial-varied";
    }
    return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view text) {
    if (text == "random-whole") return StrategyKind::RandomWhole;
    if (text == "region-constrained") return StrategyKind::RegionConstrained;
    if (text == "cumulative") return StrategyKind::Cumulative;
    if (text == "initial-varied") return StrategyKind::InitialVaried;
    throw ValidationError("unknown strategy kind \"" + std::string(text) + "\"");
}

std::string to_string(PromptRole role) {
    return role == PromptRole::Initial ? "initial" : "cumulative";
}

std::string to_string(WarningKind kind) {
    return kind == WarningKind::ClampedCount ? "clamped-count" : "empty-region-fallback";
}

std::vector<Voxel> region_permutation(const Mask& region, std::uint64_t seed) {
    std::vector<Voxel> voxels = region.voxels();  // already (z, y, x) ordered
    SplitMix64 rng(seed);
    fisher_yates(std::span<Voxel>(voxels), rng);
    return voxels;
}

PromptSet sample_prompts(const Mask& region, std::size_t n, std::uint64_t seed,
                         std::span<const Voxel> exclude, PromptRole role,
                         const std::string& region_tag) {
    PromptSet out;
    out.seed = seed;
    if (n == 0) return out;

    std::vector<std::uint8_t> available(region.data().begin(), region.data().end());
    for (const Voxel& v : exclude) {
        if (region.geometry().contains(v)) available[region.geometry().index(v)] = 0;
    }
    const auto order = region_permutation(Mask(region.geometry(), std::move(available)), seed);

    const std::size_t take = std::min(n, order.size());
    if (take < n) {
        out.warnings.push_back(PromptWarning{WarningKind::ClampedCount, role, region_tag,
                                             region_tag, n, order.size()});
    }
    out.prompts.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.prompts.push_back(Prompt{order[i], PromptLabel::Positive, role, region_tag});
    }
    return out;
}

namespace {

struct ResolvedRegion {
    Mask mask;
    std::string tag;
};

ResolvedRegion resolve_region(const SubRegions& parts, RegionSet requested, PromptRole role,
                              std::vector<PromptWarning>& warnings) {
    if (parts.source.none()) {
        throw ValidationError("cannot place prompts: source mask is empty");
    }
    if (requested.is_whole()) return {parts.source, "whole"};

    Mask mask = union_region(parts, requested);
    if (!mask.none()) return {std::move(mask), requested.tag()};

    // Continue down C -> M -> B -> whole from the outermost requested part.
    static constexpr RegionSet kChain[] = {RegionSet::center(), RegionSet::margin(),
                                           RegionSet::boundary(), RegionSet::whole()};
    std::size_t start = 0;
    if (requested.has_center()) start = 1;
    if (requested.has_margin()) start = 2;
    if (requested.has_boundary()) start = 3;
    for (std::size_t i = start; i < std::size(kChain); ++i) {
        Mask candidate = union_region(parts, kChain[i]);
        if (!candidate.none()) {
            const std::string tag = kChain[i].tag();
            warnings.push_back(PromptWarning{WarningKind::EmptyRegionFallback, role,
                                             requested.tag(), tag, 0, 0});
            return {std::move(candidate), tag};
        }
    }
    throw ValidationError("cannot place prompts: every fallback region is empty");
}

void append(PromptSet& into, PromptSet&& part) {
    for (auto& p : part.prompts) into.prompts.push_back(std::move(p));
    for (auto& w : part.warnings) into.warnings.push_back(std::move(w));
}

}  // namespace

PromptSet build_strategy_prompts(const StrategySpec& spec, const SubRegions& parts,
                                 std::uint64_t fixed_seed, std::uint64_t run_seed) {
    spec.validate();
    PromptSet out;
    out.seed = run_seed;

    switch (spec.kind) {
        case StrategyKind::RandomWhole:
        case StrategyKind::RegionConstrained: {
            const RegionSet region =
                spec.kind == StrategyKind::RandomWhole ? RegionSet::whole() : spec.region;
            auto resolved = resolve_region(parts, region, PromptRole::Initial, out.warnings);
            append(out, sample_prompts(resolved.mask, spec.count, run_seed, {},
                                       PromptRole::Initial, resolved.tag));
            return out;
        }
        case StrategyKind::Cumulative:
        case StrategyKind::InitialVaried: break;
    }

    out.fixed_seed = fixed_seed;
    const auto seed_for = [&](SeedRole role) {
        return role == SeedRole::Fixed ? fixed_seed : run_seed;
    };
    if (spec.initial_count > 0) {
        auto resolved =
            resolve_region(parts, spec.initial_region, PromptRole::Initial, out.warnings);
        append(out, sample_prompts(resolved.mask, spec.initial_count,
                                   seed_for(spec.initial_seed_role), {}, PromptRole::Initial,
                                   resolved.tag));
    }
    if (spec.cumulative_count > 0) {
        auto resolved =
            resolve_region(parts, spec.cumulative_region, PromptRole::Cumulative, out.warnings);
        const auto chosen = out.voxels();
        append(out, sample_prompts(resolved.mask, spec.cumulative_count,
                                   seed_for(spec.cumulative_seed_role), chosen,
                                   PromptRole::Cumulative, resolved.tag));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::ordered_json to_json(const PromptWarning& w) {
    nlohmann::ordered_json wj;
    wj["kind"] = to_string(w.kind);
    wj["role"] = to_string(w.role);
    if (w.kind == WarningKind::ClampedCount) {
        wj["region"] = w.used_region;
        wj["requested"] = w.requested;
        wj["available"] = w.available;
    } else {
        wj["requested_region"] = w.requested_region;
        wj["used_region"] = w.used_region;
    }
    return wj;
}

nlohmann::ordered_json to_json(const PromptSet& set) {
    nlohmann::ordered_json j;
    j["seed"] = set.seed;
    if (set.fixed_seed) j["fixed_seed"] = *set.fixed_seed;
    auto prompts = nlohmann::ordered_json::array();
    for (const auto& p : set.prompts) {
        nlohmann::ordered_json pj;
        pj["voxel"] = {p.voxel.x, p.voxel.y, p.voxel.z};
        pj["label"] = p.label == PromptLabel::Positive ? "pos" : "neg";
        pj["role"] = to_string(p.role);
        pj["region"] = p.source_region;
        prompts.push_back(std::move(pj));
    }
    j["prompts"] = std::move(prompts);
    auto warnings = nlohmann::ordered_json::array();
    for (const auto& w : set.warnings) warnings.push_back(to_json(w));
    j["warnings"] = std::move(warnings);
    return j;
}

namespace {

PromptRole parse_role(const std::string& s) {
    if (s == "initial") return PromptRole::Initial;
    if (s == "cumulative") return PromptRole::Cumulative;
    throw ValidationError("unknown prompt role \"" + s + "\"");
}

}  // namespace

PromptWarning prompt_warning_from_json(const nlohmann::json& wj) {
    PromptWarning w;
    try {
        const auto kind = wj.at("kind").get<std::string>();
        w.role = parse_role(wj.value("role", std::string("initial")));
        if (kind == "clamped-count") {
            w.kind = WarningKind::ClampedCount;
            w.requested_region = w.used_region = wj.value("region", std::string());
            w.requested = wj.value("requested", std::size_t{0});
            w.available = wj.value("available", std::size_t{0});
        } else if (kind == "empty-region-fallback") {
            w.kind = WarningKind::EmptyRegionFallback;
            w.requested_region = wj.value("requested_region", std::string());
            w.used_region = wj.value("used_region", std::string());
        } else {
            throw ValidationError("unknown prompt warning kind \"" + kind + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed prompt warning: ") + e.what());
    }
    return w;
}

PromptSet prompt_set_from_json(const nlohmann::json& j) {
    PromptSet out;
    try {
        out.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("fixed_seed")) out.fixed_seed = j.at("fixed_seed").get<std::uint64_t>();
        for (const auto& pj : j.at("prompts")) {
            Prompt p;
            const auto v = pj.at("voxel").get<std::vector<std::int32_t>>();
            if (v.size() != 3) throw ValidationError("prompt voxel must have 3 coordinates");
            p.voxel = Voxel{v[0], v[1], v[2]};
            const auto label = pj.value("label", std::string("pos"));
            if (label == "pos") p.label = PromptLabel::Positive;
            else if (label == "neg") p.label = PromptLabel::Negative;
            else throw ValidationError("unknown prompt label \"" + label + "\"");
            p.role = parse_role(pj.value("role", std::string("initial")));
            p.source_region = pj.value("region", std::string("whole"));
            out.prompts.push_back(std::move(p));
        }
        if (j.contains("warnings")) {
            for (const auto& wj : j.at("warnings")) out.warnings.push_back(prompt_warning_from_json(wj));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed prompts JSON: ") + e.what());
    }
    return out;
}

}  // namespace promptbench
