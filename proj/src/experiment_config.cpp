#include <algorithm>
#include <fstream>
#include <set>

#include "promptbench/error.hpp"
#include "promptbench/experiment.hpp"
#include "promptbench/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace promptbench {

std::string MethodKey::label() const { return strategy + "@" + std::to_string(count); }

std::string to_string(AggregationMode mode) {
    return mode == AggregationMode::PerSeed ? "per-seed" : "per-subject";
}

std::string to_string(PairingUnit unit) {
    return unit == PairingUnit::Runs ? "runs" : "subjects";
}

std::vector<double> default_dice_bins() {
    std::vector<double> edges;
    for (int i = 0; i <= 10; ++i) edges.push_back(i / 10.0);
    return edges;
}

std::vector<GridColumn> ExperimentConfig::columns() const {
    std::vector<GridColumn> out;
    for (const auto& entry : strategies) {
        if (entry.spec.two_stage()) {
            if (entry.splits.empty()) {
                out.push_back(GridColumn{entry.name, entry.spec});
            }
            for (const auto& [initial, cumulative] : entry.splits) {
                GridColumn col{entry.name, entry.spec};
                col.spec.initial_count = initial;
                col.spec.cumulative_count = cumulative;
                out.push_back(std::move(col));
            }
        } else {
            const auto& counts = entry.counts.empty() ? prompt_counts : entry.counts;
            for (auto c : counts) {
                GridColumn col{entry.name, entry.spec};
                col.spec.count = c;
                out.push_back(std::move(col));
            }
        }
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (subjects.empty()) throw ValidationError("subjects: must not be empty");
    if (strategies.empty()) throw ValidationError("strategies: must not be empty");
    if (seeds.empty()) throw ValidationError("seeds: must not be empty");
    for (std::size_t i = 0; i < prompt_counts.size(); ++i) {
        if (prompt_counts[i] < 1) {
            throw ValidationError("prompt_counts[" + std::to_string(i) + "]: must be >= 1");
        }
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& s = subjects[i];
        const auto where = "subjects[" + std::to_string(i) + "]";
        if (s.case_id.empty()) throw ValidationError(where + ".case_id: must not be empty");
        if (!ids.insert(s.case_id).second) {
            throw ValidationError(where + ".case_id: duplicate \"" + s.case_id + "\"");
        }
    }
    std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
    if (unique_seeds.size() != seeds.size()) throw ValidationError("seeds: duplicate seed");

    std::set<std::string> names;
    for (std::size_t i = 0; i < strategies.size(); ++i) {
        const auto where = "strategies[" + std::to_string(i) + "]";
        if (strategies[i].name.empty()) throw ValidationError(where + ".name: must not be empty");
        if (!names.insert(strategies[i].name).second) {
            throw ValidationError(where + ".name: duplicate \"" + strategies[i].name + "\"");
        }
    }
    std::set<MethodKey> keys;
    for (const auto& col : columns()) {
        try {
            col.spec.validate();
        } catch (const ValidationError& e) {
            throw ValidationError("strategy \"" + col.name + "\": " + e.what());
        }
        if (!keys.insert(col.key()).second) {
            throw ValidationError("strategy \"" + col.name + "\": two columns share total count " +
                                  std::to_string(col.key().count));
        }
    }
    if (!(tau_mm >= 0.0)) throw ValidationError("tau_mm: must be >= 0");
    if (baseline && !keys.contains(*baseline)) {
        throw ValidationError("baseline: no strategy column " + baseline->label());
    }
    for (std::size_t i = 1; i < dice_bins.size(); ++i) {
        if (!(dice_bins[i] > dice_bins[i - 1])) {
            throw ValidationError("dice_bins: edges must be strictly ascending");
        }
    }
    if (dice_bins.size() < 2 || dice_bins.front() > 0.0 || dice_bins.back() < 1.0) {
        throw ValidationError("dice_bins: need at least two edges covering [0, 1]");
    }
    if (std::holds_alternative<ExternalCommand>(backend)) {
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            if (!subjects[i].image) {
                throw ValidationError("subjects[" + std::to_string(i) +
                                      "].image: required by the external-process backend");
            }
        }
    }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&key = key](const char* a) { return key == a; })) {
            throw ValidationError((where.empty() ? key : where + "." + key) + ": unknown field");
        }
    }
}

template <typename T>
T read_field(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::out_of_range&) {
        throw ValidationError((where.empty() ? std::string(key) : where + "." + key) +
                              ": missing");
    } catch (const json::exception&) {
        throw ValidationError((where.empty() ? std::string(key) : where + "." + key) +
                              ": wrong type");
    }
}

template <typename T>
T read_field_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    return read_field<T>(j, key, where);
}

RegionSet read_region(const json& j, const char* key, RegionSet fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto text = read_field<std::string>(j, key, where);
    try {
        return RegionSet::parse(text);
    } catch (const ValidationError& e) {
        throw ValidationError(where + "." + key + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    return p.is_absolute() ? p : base / p;
}

StrategyEntry parse_strategy(const json& j, const std::string& where) {
    check_keys(j,
               {"name", "kind", "region", "counts", "initial_region", "initial_count",
                "cumulative_region", "cumulative_count", "splits"},
               where);
    StrategyEntry entry;
    entry.name = read_field<std::string>(j, "name", where);
    const auto kind_text = read_field<std::string>(j, "kind", where);
    StrategyKind kind;
    try {
        kind = parse_strategy_kind(kind_text);
    } catch (const ValidationError& e) {
        throw ValidationError(where + ".kind: " + e.what());
    }
    switch (kind) {
        case StrategyKind::RandomWhole: entry.spec = StrategySpec::random_whole(1); break;
        case StrategyKind::RegionConstrained:
            if (!j.contains("region")) throw ValidationError(where + ".region: missing");
            entry.spec = StrategySpec::region_constrained(
                read_region(j, "region", RegionSet::whole(), where), 1);
            break;
        case StrategyKind::Cumulative:
        case StrategyKind::InitialVaried: {
            const auto initial = read_region(j, "initial_region", RegionSet::whole(), where);
            const auto cumulative = read_region(j, "cumulative_region", RegionSet::center(), where);
            const auto n_init = read_field_or<std::size_t>(j, "initial_count", 1, where);
            const auto n_cum = read_field_or<std::size_t>(j, "cumulative_count", 0, where);
            entry.spec = kind == StrategyKind::Cumulative
                             ? StrategySpec::cumulative(initial, n_init, cumulative, n_cum)
                             : StrategySpec::initial_varied(initial, n_init, cumulative, n_cum);
            if (j.contains("splits")) {
                const auto& splits = j.at("splits");
                if (!splits.is_array()) throw ValidationError(where + ".splits: must be an array");
                for (std::size_t i = 0; i < splits.size(); ++i) {
                    const auto& s = splits[i];
                    if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() ||
                        !s[1].is_number_unsigned()) {
                        throw ValidationError(where + ".splits[" + std::to_string(i) +
                                              "]: expected [initial, cumulative]");
                    }
                    entry.splits.emplace_back(s[0].get<std::size_t>(), s[1].get<std::size_t>());
                }
            }
            break;
        }
    }
    if (j.contains("counts")) {
        if (entry.spec.two_stage()) {
            throw ValidationError(where + ".counts: two-stage strategies use splits");
        }
        entry.counts = read_field<std::vector<std::size_t>>(j, "counts", where);
    }
    return entry;
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
    check_keys(j,
               {"subjects", "strategies", "prompt_counts", "seeds", "master_seed", "num_seeds",
                "fixed_seed", "backend", "tau_mm", "output_dir", "workers", "aggregation",
                "pairing", "baseline", "dice_bins"},
               "");
    ExperimentConfig cfg;

    if (!j.contains("subjects") || !j.at("subjects").is_array()) {
        throw ValidationError("subjects: missing or not an array");
    }
    const auto& subjects = j.at("subjects");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto where = "subjects[" + std::to_string(i) + "]";
        check_keys(subjects[i], {"case_id", "gt", "image"}, where);
        SubjectSpec s;
        s.case_id = read_field<std::string>(subjects[i], "case_id", where);
        s.gt = resolve(base_dir, read_field<std::string>(subjects[i], "gt", where));
        if (subjects[i].contains("image")) {
            s.image = resolve(base_dir, read_field<std::string>(subjects[i], "image", where));
        }
        cfg.subjects.push_back(std::move(s));
    }

    if (!j.contains("strategies") || !j.at("strategies").is_array()) {
        throw ValidationError("strategies: missing or not an array");
    }
    const auto& strategies = j.at("strategies");
    for (std::size_t i = 0; i < strategies.size(); ++i) {
        cfg.strategies.push_back(parse_strategy(strategies[i], "strategies[" + std::to_string(i) + "]"));
    }

    cfg.prompt_counts = read_field_or(j, "prompt_counts", cfg.prompt_counts, "");
    cfg.master_seed = read_field_or<std::uint64_t>(j, "master_seed", 0, "");
    if (j.contains("seeds")) {
        cfg.seeds = read_field<std::vector<std::uint64_t>>(j, "seeds", "");
    } else {
        const auto n = read_field_or<std::size_t>(j, "num_seeds", kDefaultSeedCount, "");
        cfg.seeds = derive_seeds(cfg.master_seed, n);
    }
    cfg.fixed_seed = read_field_or<std::uint64_t>(j, "fixed_seed", cfg.master_seed, "");
    if (j.contains("backend")) cfg.backend = backend_from_json(j.at("backend"), "backend");
    cfg.tau_mm = read_field_or(j, "tau_mm", cfg.tau_mm, "");
    cfg.output_dir = resolve(base_dir, read_field_or<std::string>(j, "output_dir", "promptbench-out", ""));
    cfg.workers = read_field_or<std::size_t>(j, "workers", 0, "");

    const auto aggregation = read_field_or<std::string>(j, "aggregation", "per-seed", "");
    if (aggregation == "per-seed") cfg.aggregation = AggregationMode::PerSeed;
    else if (aggregation == "per-subject") cfg.aggregation = AggregationMode::PerSubject;
    else throw ValidationError("aggregation: expected \"per-seed\" or \"per-subject\"");

    const auto pairing = read_field_or<std::string>(j, "pairing", "runs", "");
    if (pairing == "runs") cfg.pairing = PairingUnit::Runs;
    else if (pairing == "subjects") cfg.pairing = PairingUnit::Subjects;
    else throw ValidationError("pairing: expected \"runs\" or \"subjects\"");

    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        check_keys(b, {"strategy", "count"}, "baseline");
        cfg.baseline = MethodKey{read_field<std::string>(b, "strategy", "baseline"),
                                 read_field_or<std::size_t>(b, "count", 1, "baseline")};
    }
    cfg.dice_bins = read_field_or(j, "dice_bins", default_dice_bins(), "");

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j, path.parent_path());
}

}  // namespace promptbench
