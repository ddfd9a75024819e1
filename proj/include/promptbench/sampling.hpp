#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptbench/subregion.hpp"
#include "promptbench/volume.hpp"

namespace promptbench {

enum class PromptLabel { Positive, Negative };
enum class PromptRole { Initial, Cumulative };

struct Prompt {
    Voxel voxel;
    PromptLabel label = PromptLabel::Positive;
    PromptRole role = PromptRole::Initial;
    std::string source_region = "whole";  // RegionSet tag of the region actually sampled

    bool operator==(const Prompt&) const = default;
};

enum class WarningKind { EmptyRegionFallback, ClampedCount };

struct PromptWarning {
    WarningKind kind = WarningKind::ClampedCount;
    PromptRole role = PromptRole::Initial;
    std::string requested_region;
    std::string used_region;
    std::size_t requested = 0;  // prompts asked for (clamped-count only)
    std::size_t available = 0;  // voxels that were available (clamped-count only)

    bool operator==(const PromptWarning&) const = default;
};

/// Prompts in generation order: initial prompts precede cumulative ones.
struct PromptSet {
    std::vector<Prompt> prompts;
    std::uint64_t seed = 0;                   // per-run seed
    std::optional<std::uint64_t> fixed_seed;  // set by two-stage strategies
    std::vector<PromptWarning> warnings;

    std::vector<Voxel> voxels() const;
    bool operator==(const PromptSet&) const = default;
};

enum class StrategyKind { RandomWhole, RegionConstrained, Cumulative, InitialVaried };
enum class SeedRole { Fixed, PerRun };

/// Declarative selection strategy.
///
/// RandomWhole and RegionConstrained draw `count` prompts with the run seed
/// (RandomWhole from the whole mask, RegionConstrained from `region`).
/// Cumulative draws the initial prompts with the fixed seed and the
/// cumulative prompts with the run seed; InitialVaried swaps the two roles.
struct StrategySpec {
    StrategyKind kind = StrategyKind::RandomWhole;

    RegionSet region = RegionSet::whole();
    std::size_t count = 1;

    RegionSet initial_region = RegionSet::whole();
    std::size_t initial_count = 0;
    SeedRole initial_seed_role = SeedRole::Fixed;

    RegionSet cumulative_region = RegionSet::center();
    std::size_t cumulative_count = 0;
    SeedRole cumulative_seed_role = SeedRole::PerRun;

    static StrategySpec random_whole(std::size_t count);
    static StrategySpec region_constrained(RegionSet region, std::size_t count);
    static StrategySpec cumulative(RegionSet initial_region, std::size_t initial_count,
                                   RegionSet cumulative_region, std::size_t cumulative_count);
    static StrategySpec initial_varied(RegionSet initial_region, std::size_t initial_count,
                                       RegionSet cumulative_region, std::size_t cumulative_count);

    bool two_stage() const noexcept {
        return kind == StrategyKind::Cumulative || kind == StrategyKind::InitialVaried;
    }
    std::size_t total_count() const noexcept {
        return two_stage() ? initial_count + cumulative_count : count;
    }

    /// Throws ValidationError when the total count is zero or the seed roles
    /// do not match the kind.
    void validate() const;

    bool operator==(const StrategySpec&) const = default;
};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view text);
std::string to_string(PromptRole role);
std::string to_string(WarningKind kind);

/// All foreground voxels of `region`, enumerated in (z, y, x) order and then
/// shuffled by Fisher-Yates over a splitmix64 stream seeded with `seed`.
std::vector<Voxel> region_permutation(const Mask& region, std::uint64_t seed);

/// First n voxels of region_permutation(region \ exclude, seed), labeled
/// positive.  Asking for more than is available returns everything with a
/// clamped-count warning.
PromptSet sample_prompts(const Mask& region, std::size_t n, std::uint64_t seed,
                         std::span<const Voxel> exclude = {},
                         PromptRole role = PromptRole::Initial,
                         const std::string& region_tag = "whole");

/// Builds the prompts of one run.  Empty requested regions fall back along
/// C -> M -> B -> whole with a warning.  Throws ValidationError when the
/// source mask is empty.
PromptSet build_strategy_prompts(const StrategySpec& spec, const SubRegions& parts,
                                 std::uint64_t fixed_seed, std::uint64_t run_seed);

nlohmann::ordered_json to_json(const PromptWarning& warning);
PromptWarning prompt_warning_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PromptSet& prompts);
PromptSet prompt_set_from_json(const nlohmann::json& j);

}  // namespace promptbench
