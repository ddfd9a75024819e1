#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptbench/metrics.hpp"
#include "promptbench/sampling.hpp"
#include "promptbench/segmenter.hpp"
#include "promptbench/stats.hpp"

namespace promptbench {

/// A grid column: strategy name plus total prompt count.
struct MethodKey {
    std::string strategy;
    std::size_t count = 0;

    auto operator<=>(const MethodKey&) const = default;
    std::string label() const;  // "name@count"
};

struct SubjectSpec {
    std::string case_id;
    std::optional<std::filesystem::path> image;
    std::filesystem::path gt;
};

/// One configured strategy.  Single-stage kinds expand over the prompt
/// counts (or `counts` when given); two-stage kinds expand over `splits`.
struct StrategyEntry {
    std::string name;
    StrategySpec spec;
    std::vector<std::size_t> counts;                              // optional override
    std::vector<std::pair<std::size_t, std::size_t>> splits;      // (initial, cumulative)
};

/// A fully specified grid column.
struct GridColumn {
    std::string name;
    StrategySpec spec;

    MethodKey key() const { return MethodKey{name, spec.total_count()}; }
};

/// Edges 0, 0.1, ..., 1.0.
std::vector<double> default_dice_bins();

enum class AggregationMode { PerSeed, PerSubject };
enum class PairingUnit { Runs, Subjects };

struct ExperimentConfig {
    std::vector<SubjectSpec> subjects;
    std::vector<StrategyEntry> strategies;
    std::vector<std::size_t> prompt_counts{1, 5, 10, 20, 100};
    std::vector<std::uint64_t> seeds;
    std::uint64_t master_seed = 0;
    std::uint64_t fixed_seed = 0;
    SegmenterBackend backend = OracleParams{};
    double tau_mm = kDefaultTauMm;
    std::filesystem::path output_dir = "promptbench-out";
    std::size_t workers = 0;  // 0: decided by the caller
    AggregationMode aggregation = AggregationMode::PerSeed;
    PairingUnit pairing = PairingUnit::Runs;
    std::optional<MethodKey> baseline;
    std::vector<double> dice_bins = default_dice_bins();

    /// Every (strategy, count) column of the grid, in configuration order.
    std::vector<GridColumn> columns() const;
    /// Throws ValidationError naming the offending field.
    void validate() const;
};

constexpr std::size_t kDefaultSeedCount = 50;

/// Parses the JSON config.  Relative paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunRecord {
    std::string strategy;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string case_id;
    StrategySpec spec;
    bool ok = true;
    std::string error;
    MetricRecord metrics;
    std::vector<PromptWarning> warnings;
    std::vector<Voxel> prompts;

    MethodKey key() const { return MethodKey{strategy, count}; }
    bool operator==(const RunRecord&) const = default;
};

/// Sort key (strategy, count, seed, case_id).
bool canonical_less(const RunRecord& a, const RunRecord& b);
void sort_canonical(std::vector<RunRecord>& records);

nlohmann::ordered_json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
/// One record per line.  A malformed final line (interrupted write) is
/// skipped; malformed lines elsewhere throw FormatError.
std::vector<RunRecord> read_results(const std::filesystem::path& path);
void write_results(const std::filesystem::path& path, const std::vector<RunRecord>& records);

struct MetricSummary {
    std::vector<std::string> units;  // seed or case id of each mean
    std::vector<double> unit_means;  // run_means in per-seed mode
    double mean = 0.0;
    double std = 0.0;  // population
};

struct AggregateCell {
    MethodKey key;
    StrategySpec spec;
    MetricSummary dice;
    MetricSummary nsd;
    std::size_t n_records = 0;
    std::size_t n_failed = 0;
};

struct Comparison {
    MethodKey a;
    MethodKey b;
    std::string metric;
    PairingUnit pairing = PairingUnit::Runs;
    std::size_t n = 0;
    TTestResult result;
};

struct ResultTable {
    AggregationMode mode = AggregationMode::PerSeed;
    std::vector<AggregateCell> cells;  // sorted by key
    std::vector<Comparison> comparisons;
    std::vector<std::string> notes;    // rendered under markdown tables

    const AggregateCell* find(const MethodKey& key) const;
};

/// Per-seed mode: mean over subjects for each seed, then mean and population
/// std over those seed means.  Per-subject mode swaps the roles.  Failed
/// records are excluded and counted.
ResultTable aggregate(const std::vector<RunRecord>& records,
                      AggregationMode mode = AggregationMode::PerSeed);

/// Paired means of one metric for two methods over the shared units.
Comparison compare(const std::vector<RunRecord>& records, const MethodKey& a, const MethodKey& b,
                   const std::string& metric = "dice", PairingUnit pairing = PairingUnit::Runs);

struct DiceBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::map<MethodKey, double> mean_dice;  // over the subjects in the bin
};

/// Subjects are binned by their mean Dice under `reference` (all records
/// pooled when absent) into [e_i, e_{i+1}); the last bin is closed.
std::vector<DiceBin> group_by_dice(const std::vector<RunRecord>& records,
                                   const std::vector<double>& bin_edges,
                                   const std::optional<MethodKey>& reference = std::nullopt);

nlohmann::ordered_json to_json(const ResultTable& table);
nlohmann::ordered_json to_json(const std::vector<DiceBin>& bins);

struct RunOutcome {
    ResultTable table;
    std::vector<RunRecord> records;  // canonical order
    std::size_t computed = 0;
    std::size_t reused = 0;
    std::size_t failed = 0;
};

/// Runs every missing (strategy, count, seed, subject) cell and writes
/// results.jsonl, aggregate.json, run_meta.json and table files into the
/// output directory.  Records already present there are reused.
RunOutcome run_experiment(const ExperimentConfig& config);

std::string to_string(AggregationMode mode);
std::string to_string(PairingUnit unit);

}  // namespace promptbench
