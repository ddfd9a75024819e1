#include "promptbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "promptbench/error.hpp"
#include "promptbench/report.hpp"
#include "promptbench/subregion.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace promptbench {

// ---------------------------------------------------------------------------
// Records

bool canonical_less(const RunRecord& a, const RunRecord& b) {
    return std::tie(a.strategy, a.count, a.seed, a.case_id) <
           std::tie(b.strategy, b.count, b.seed, b.case_id);
}

void sort_canonical(std::vector<RunRecord>& records) {
    std::sort(records.begin(), records.end(), canonical_less);
}

namespace {

void spec_to_json(const StrategySpec& spec, ordered_json& j) {
    j["kind"] = to_string(spec.kind);
    if (spec.two_stage()) {
        j["initial_region"] = spec.initial_region.tag();
        j["initial_count"] = spec.initial_count;
        j["cumulative_region"] = spec.cumulative_region.tag();
        j["cumulative_count"] = spec.cumulative_count;
    } else {
        j["region"] = spec.region.tag();
    }
}

StrategySpec spec_from_json(const json& j, std::size_t count) {
    const auto kind = parse_strategy_kind(j.at("kind").get<std::string>());
    switch (kind) {
        case StrategyKind::RandomWhole: return StrategySpec::random_whole(count);
        case StrategyKind::RegionConstrained:
            return StrategySpec::region_constrained(
                RegionSet::parse(j.at("region").get<std::string>()), count);
        case StrategyKind::Cumulative:
        case StrategyKind::InitialVaried: {
            const auto initial = RegionSet::parse(j.at("initial_region").get<std::string>());
            const auto cumulative = RegionSet::parse(j.at("cumulative_region").get<std::string>());
            const auto n_init = j.at("initial_count").get<std::size_t>();
            const auto n_cum = j.at("cumulative_count").get<std::size_t>();
            return kind == StrategyKind::Cumulative
                       ? StrategySpec::cumulative(initial, n_init, cumulative, n_cum)
                       : StrategySpec::initial_varied(initial, n_init, cumulative, n_cum);
        }
    }
    throw ValidationError("unreachable strategy kind");
}

}  // namespace

ordered_json to_json(const RunRecord& r) {
    ordered_json j;
    j["strategy"] = r.strategy;
    j["count"] = r.count;
    j["seed"] = r.seed;
    j["case_id"] = r.case_id;
    spec_to_json(r.spec, j);
    j["status"] = r.ok ? "ok" : "failed";
    j["dice"] = r.metrics.dice;
    j["nsd"] = r.metrics.nsd;
    j["tau_mm"] = r.metrics.tau_mm;
    auto warnings = ordered_json::array();
    for (const auto& w : r.warnings) warnings.push_back(to_json(w));
    j["warnings"] = std::move(warnings);
    auto prompts = ordered_json::array();
    for (const auto& v : r.prompts) prompts.push_back({v.x, v.y, v.z});
    j["prompts"] = std::move(prompts);
    if (!r.ok) j["error"] = r.error;
    return j;
}

RunRecord run_record_from_json(const json& j) {
    RunRecord r;
    try {
        r.strategy = j.at("strategy").get<std::string>();
        r.count = j.at("count").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.case_id = j.at("case_id").get<std::string>();
        r.spec = spec_from_json(j, r.count);
        r.ok = j.at("status").get<std::string>() == "ok";
        r.metrics.dice = j.at("dice").get<double>();
        r.metrics.nsd = j.at("nsd").get<double>();
        r.metrics.tau_mm = j.at("tau_mm").get<double>();
        for (const auto& w : j.at("warnings")) r.warnings.push_back(prompt_warning_from_json(w));
        for (const auto& p : j.at("prompts")) {
            const auto v = p.get<std::vector<std::int32_t>>();
            if (v.size() != 3) throw FormatError("record prompt voxel must have 3 coordinates");
            r.prompts.push_back(Voxel{v[0], v[1], v[2]});
        }
        if (!r.ok) r.error = j.value("error", std::string());
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed run record: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("malformed run record: ") + e.what());
    }
    return r;
}

std::vector<RunRecord> read_results(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open results " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(std::move(line));
    }
    std::vector<RunRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(run_record_from_json(json::parse(lines[i])));
        } catch (const std::exception& e) {
            if (i + 1 == lines.size()) break;  // torn final line from an interrupted run
            throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace

void write_results(const fs::path& path, const std::vector<RunRecord>& records) {
    std::string text;
    for (const auto& r : records) text += to_json(r).dump() + "\n";
    write_text_atomic(path, text);
}

// ---------------------------------------------------------------------------
// Aggregation

const AggregateCell* ResultTable::find(const MethodKey& key) const {
    for (const auto& c : cells) {
        if (c.key == key) return &c;
    }
    return nullptr;
}

namespace {

enum class Metric { Dice, Nsd };

double metric_of(const RunRecord& r, Metric m) {
    return m == Metric::Dice ? r.metrics.dice : r.metrics.nsd;
}

Metric parse_metric(const std::string& name) {
    if (name == "dice") return Metric::Dice;
    if (name == "nsd") return Metric::Nsd;
    throw ValidationError("unknown metric \"" + name + "\"");
}

// Mean of one metric per unit (seed or subject) over the other axis, in
// ascending unit order (seeds numerically, subjects lexically).
std::vector<std::pair<std::string, double>> unit_means(const std::vector<const RunRecord*>& records,
                                                       Metric metric, bool by_seed) {
    std::vector<std::pair<std::string, double>> out;
    if (by_seed) {
        std::map<std::uint64_t, std::pair<double, std::size_t>> acc;
        for (const auto* r : records) {
            if (!r->ok) continue;
            auto& [sum, n] = acc[r->seed];
            sum += metric_of(*r, metric);
            ++n;
        }
        for (const auto& [seed, sn] : acc) {
            out.emplace_back(std::to_string(seed), sn.first / static_cast<double>(sn.second));
        }
    } else {
        std::map<std::string, std::pair<double, std::size_t>> acc;
        for (const auto* r : records) {
            if (!r->ok) continue;
            auto& [sum, n] = acc[r->case_id];
            sum += metric_of(*r, metric);
            ++n;
        }
        for (const auto& [id, sn] : acc) {
            out.emplace_back(id, sn.first / static_cast<double>(sn.second));
        }
    }
    return out;
}

MetricSummary summarize(const std::vector<const RunRecord*>& records, Metric metric, bool by_seed) {
    MetricSummary s;
    for (auto& [unit, value] : unit_means(records, metric, by_seed)) {
        s.units.push_back(unit);
        s.unit_means.push_back(value);
    }
    if (s.unit_means.empty()) {
        s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    } else {
        s.mean = mean(s.unit_means);
        s.std = population_std(s.unit_means);
    }
    return s;
}

std::map<MethodKey, std::vector<const RunRecord*>> by_method(const std::vector<RunRecord>& records) {
    std::map<MethodKey, std::vector<const RunRecord*>> out;
    for (const auto& r : records) out[r.key()].push_back(&r);
    return out;
}

}  // namespace

ResultTable aggregate(const std::vector<RunRecord>& records, AggregationMode mode) {
    ResultTable table;
    table.mode = mode;
    const bool by_seed = mode == AggregationMode::PerSeed;
    for (const auto& [key, group] : by_method(records)) {
        AggregateCell cell;
        cell.key = key;
        cell.spec = group.front()->spec;
        cell.dice = summarize(group, Metric::Dice, by_seed);
        cell.nsd = summarize(group, Metric::Nsd, by_seed);
        cell.n_records = group.size();
        cell.n_failed = static_cast<std::size_t>(
            std::count_if(group.begin(), group.end(), [](const RunRecord* r) { return !r->ok; }));
        table.cells.push_back(std::move(cell));
    }
    return table;
}

Comparison compare(const std::vector<RunRecord>& records, const MethodKey& a, const MethodKey& b,
                   const std::string& metric, PairingUnit pairing) {
    const Metric m = parse_metric(metric);
    const auto groups = by_method(records);
    const auto ga = groups.find(a);
    const auto gb = groups.find(b);
    if (ga == groups.end()) throw ValidationError("compare: no records for " + a.label());
    if (gb == groups.end()) throw ValidationError("compare: no records for " + b.label());
    const bool by_seed = pairing == PairingUnit::Runs;
    const auto ma = unit_means(ga->second, m, by_seed);
    const auto mb = unit_means(gb->second, m, by_seed);
    std::map<std::string, double> lookup(mb.begin(), mb.end());
    std::vector<double> xs, ys;
    for (const auto& [unit, value] : ma) {
        if (auto it = lookup.find(unit); it != lookup.end()) {
            xs.push_back(value);
            ys.push_back(it->second);
        }
    }
    Comparison c;
    c.a = a;
    c.b = b;
    c.metric = metric;
    c.pairing = pairing;
    c.n = xs.size();
    c.result = paired_ttest(xs, ys);
    return c;
}

std::vector<DiceBin> group_by_dice(const std::vector<RunRecord>& records,
                                   const std::vector<double>& edges,
                                   const std::optional<MethodKey>& reference) {
    if (edges.size() < 2) throw ValidationError("group_by_dice: need at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) {
            throw ValidationError("group_by_dice: bin edges must be strictly ascending");
        }
    }
    if (edges.front() > 0.0 || edges.back() < 1.0) {
        throw ValidationError("group_by_dice: bin edges must cover [0, 1]");
    }

    std::vector<DiceBin> bins(edges.size() - 1);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        bins[i].lo = edges[i];
        bins[i].hi = edges[i + 1];
    }

    // Per-subject mean Dice, for the reference and for every method.
    std::map<std::string, std::pair<double, std::size_t>> ref;
    std::map<MethodKey, std::map<std::string, std::pair<double, std::size_t>>> per_method;
    for (const auto& r : records) {
        if (!r.ok) continue;
        if (!reference || r.key() == *reference) {
            auto& [sum, n] = ref[r.case_id];
            sum += r.metrics.dice;
            ++n;
        }
        auto& [sum, n] = per_method[r.key()][r.case_id];
        sum += r.metrics.dice;
        ++n;
    }

    std::vector<std::vector<std::string>> members(bins.size());
    for (const auto& [case_id, sn] : ref) {
        const double v = sn.first / static_cast<double>(sn.second);
        std::size_t bin = bins.size() - 1;
        for (std::size_t i = 0; i + 1 < bins.size(); ++i) {
            if (v < edges[i + 1]) {
                bin = i;
                break;
            }
        }
        ++bins[bin].count;
        members[bin].push_back(case_id);
    }

    for (std::size_t b = 0; b < bins.size(); ++b) {
        for (const auto& [key, subjects] : per_method) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& case_id : members[b]) {
                if (auto it = subjects.find(case_id); it != subjects.end()) {
                    sum += it->second.first / static_cast<double>(it->second.second);
                    ++n;
                }
            }
            if (n > 0) bins[b].mean_dice[key] = sum / static_cast<double>(n);
        }
    }
    return bins;
}

namespace {

ordered_json summary_json(const MetricSummary& s) {
    ordered_json j;
    j["mean"] = s.mean;
    j["std"] = s.std;
    j["units"] = s.units;
    j["run_means"] = s.unit_means;
    return j;
}

ordered_json key_json(const MethodKey& k) {
    ordered_json j;
    j["strategy"] = k.strategy;
    j["count"] = k.count;
    return j;
}

}  // namespace

ordered_json to_json(const ResultTable& table) {
    ordered_json j;
    j["aggregation"] = to_string(table.mode);
    auto cells = ordered_json::array();
    for (const auto& c : table.cells) {
        ordered_json cj = key_json(c.key);
        spec_to_json(c.spec, cj);
        cj["n_records"] = c.n_records;
        cj["n_failed"] = c.n_failed;
        cj["dice"] = summary_json(c.dice);
        cj["nsd"] = summary_json(c.nsd);
        cells.push_back(std::move(cj));
    }
    j["cells"] = std::move(cells);
    auto comparisons = ordered_json::array();
    for (const auto& c : table.comparisons) {
        ordered_json cj;
        cj["a"] = key_json(c.a);
        cj["b"] = key_json(c.b);
        cj["metric"] = c.metric;
        cj["pairing"] = to_string(c.pairing);
        cj["n"] = c.n;
        cj["t"] = c.result.t;
        cj["df"] = c.result.df;
        cj["p"] = c.result.p;
        cj["degenerate"] = c.result.degenerate;
        comparisons.push_back(std::move(cj));
    }
    j["comparisons"] = std::move(comparisons);
    return j;
}

ordered_json to_json(const std::vector<DiceBin>& bins) {
    auto out = ordered_json::array();
    for (const auto& b : bins) {
        ordered_json bj;
        bj["lo"] = b.lo;
        bj["hi"] = b.hi;
        bj["count"] = b.count;
        ordered_json means = ordered_json::object();
        for (const auto& [key, value] : b.mean_dice) means[key.label()] = value;
        bj["mean_dice"] = std::move(means);
        out.push_back(std::move(bj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid runner

namespace {

struct LoadedSubject {
    Mask gt;
    std::optional<Volume3> image;
    SubRegions parts;
    MetricReference reference;
    std::optional<SyntheticOracle> oracle;
};

struct Task {
    std::size_t column = 0;
    std::uint64_t seed = 0;
    std::size_t subject = 0;
};

using CellKey = std::tuple<std::string, std::size_t, std::uint64_t, std::string>;

CellKey key_of(const RunRecord& r) { return {r.strategy, r.count, r.seed, r.case_id}; }

ordered_json fingerprint(const ExperimentConfig& cfg) {
    ordered_json j;
    j["backend"] = to_json(cfg.backend);
    j["tau_mm"] = cfg.tau_mm;
    j["fixed_seed"] = cfg.fixed_seed;
    return j;
}

LoadedSubject load_subject(const SubjectSpec& spec, const SegmenterBackend& backend) {
    const bool need_image = std::holds_alternative<ExternalCommand>(backend);
    auto fail = [&](const std::string& what) {
        return ValidationError("subject \"" + spec.case_id + "\": " + what);
    };
    std::optional<Mask> gt;
    try {
        gt = load_mask(spec.gt);
    } catch (const Error& e) {
        throw fail(std::string("cannot load ground truth: ") + e.what());
    }
    if (gt->none()) throw fail("ground truth mask is empty");
    std::optional<Volume3> image;
    if (spec.image && need_image) {
        try {
            image = load_volume(*spec.image);
        } catch (const Error& e) {
            throw fail(std::string("cannot load image: ") + e.what());
        }
        if (image->dims() != gt->dims()) throw fail("image and ground truth dims differ");
    }
    SubRegions parts = decompose(*gt);
    MetricReference reference(*gt);
    std::optional<SyntheticOracle> oracle;
    if (const auto* params = std::get_if<OracleParams>(&backend)) oracle.emplace(*gt, *params);
    return LoadedSubject{std::move(*gt), std::move(image), std::move(parts), std::move(reference),
                         std::move(oracle)};
}

std::string backend_note(const ExperimentConfig& cfg) {
    std::ostringstream ss;
    if (const auto* o = std::get_if<OracleParams>(&cfg.backend)) {
        ss << "Backend: synthetic-oracle (r_base=" << o->r_base << " mm, alpha=" << o->alpha
           << ", r_neg=" << o->r_neg << " mm).";
    } else {
        const auto& c = std::get<ExternalCommand>(cfg.backend);
        ss << "Backend: external-process (" << c.argv.front() << ").";
    }
    ss << " NSD tolerance " << cfg.tau_mm << " mm; " << cfg.seeds.size() << " seeds; "
       << cfg.subjects.size() << " subjects; mean ± population std over "
       << (cfg.aggregation == AggregationMode::PerSeed ? "per-seed" : "per-subject") << " means.";
    return ss.str();
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config) {
    config.validate();
    const fs::path out_dir = config.output_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output dir " + out_dir.string() + ": " + ec.message());

    const fs::path meta_path = out_dir / "run_meta.json";
    const fs::path results_path = out_dir / "results.jsonl";
    const auto print = fingerprint(config);
    if (fs::exists(meta_path)) {
        std::ifstream in(meta_path);
        json meta;
        try {
            meta = json::parse(in);
        } catch (const json::exception& e) {
            throw FormatError("malformed " + meta_path.string() + ": " + e.what());
        }
        if (meta.value("fingerprint", json()) != json(print)) {
            throw ValidationError("output dir " + out_dir.string() +
                                  " holds results for a different backend, tau_mm or fixed_seed");
        }
    }
    {
        ordered_json meta;
        meta["fingerprint"] = print;
        write_text_atomic(meta_path, meta.dump(2) + "\n");
    }

    const auto columns = config.columns();

    // Reuse whatever is already on disk for this grid.
    std::map<CellKey, RunRecord> existing;
    if (fs::exists(results_path)) {
        for (auto& r : read_results(results_path)) existing.insert_or_assign(key_of(r), std::move(r));
    }

    std::vector<RunRecord> records;
    std::vector<Task> pending;
    std::set<std::size_t> pending_subjects;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto key = columns[c].key();
        for (auto seed : config.seeds) {
            for (std::size_t s = 0; s < config.subjects.size(); ++s) {
                auto it = existing.find({key.strategy, key.count, seed, config.subjects[s].case_id});
                if (it != existing.end()) {
                    records.push_back(std::move(it->second));
                    existing.erase(it);
                } else {
                    pending.push_back(Task{c, seed, s});
                    pending_subjects.insert(s);
                }
            }
        }
    }
    RunOutcome outcome;
    outcome.reused = records.size();

    std::vector<std::optional<LoadedSubject>> subjects(config.subjects.size());
    for (auto s : pending_subjects) subjects[s] = load_subject(config.subjects[s], config.backend);

    if (!pending.empty()) {
        std::mutex sink_mutex;
        std::ofstream sink(results_path, std::ios::app);
        if (!sink) throw IoError("cannot append to " + results_path.string());
        std::vector<RunRecord> fresh(pending.size());

        auto run_task = [&](std::size_t index) {
            const Task& task = pending[index];
            const auto& column = columns[task.column];
            const auto& subject = *subjects[task.subject];
            RunRecord r;
            r.strategy = column.name;
            r.count = column.spec.total_count();
            r.seed = task.seed;
            r.case_id = config.subjects[task.subject].case_id;
            r.spec = column.spec;
            r.metrics.tau_mm = config.tau_mm;
            try {
                const auto prompts =
                    build_strategy_prompts(column.spec, subject.parts, config.fixed_seed, task.seed);
                r.prompts = prompts.voxels();
                r.warnings = prompts.warnings;
                Mask pred = [&] {
                    if (subject.oracle) return subject.oracle->segment(prompts);
                    const auto workdir = out_dir / "work" / ("task-" + std::to_string(index));
                    const ExternalRequest request{
                        r.case_id + "/" + r.strategy + "/" + std::to_string(r.count) + "/" +
                            std::to_string(r.seed),
                        config.tau_mm};
                    Mask m = external_segment(*subject.image, prompts,
                                              std::get<ExternalCommand>(config.backend), workdir,
                                              request, &subject.gt);
                    std::error_code rm;
                    fs::remove_all(workdir, rm);
                    return m;
                }();
                r.metrics = subject.reference.evaluate(pred, config.tau_mm);
            } catch (const BackendError& e) {
                r.ok = false;
                r.error = e.what();
                if (!e.diagnostics().empty()) r.error += "\n" + e.diagnostics();
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
            if (!r.ok) r.metrics = MetricRecord{0.0, 0.0, config.tau_mm};
            {
                std::lock_guard lock(sink_mutex);
                sink << to_json(r).dump() << '\n';
                sink.flush();
            }
            fresh[index] = std::move(r);
        };

        const std::size_t workers =
            std::max<std::size_t>(1, std::min(config.workers == 0
                                                  ? std::size_t{std::thread::hardware_concurrency()}
                                                  : config.workers,
                                              pending.size()));
        std::atomic<std::size_t> next{0};
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < pending.size(); i = next++) run_task(i);
                });
            }
        }
        outcome.computed = fresh.size();
        for (auto& r : fresh) records.push_back(std::move(r));
    }

    sort_canonical(records);
    write_results(results_path, records);
    outcome.failed = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const RunRecord& r) { return !r.ok; }));

    ResultTable table = aggregate(records, config.aggregation);
    table.notes.push_back(backend_note(config));
    if (config.baseline) {
        for (const auto& cell : table.cells) {
            if (cell.key == *config.baseline) continue;
            for (const char* metric : {"dice", "nsd"}) {
                try {
                    table.comparisons.push_back(
                        compare(records, cell.key, *config.baseline, metric, config.pairing));
                } catch (const ValidationError&) {
                    // fewer than two shared units: nothing to test
                }
            }
        }
    }

    ordered_json agg;
    ordered_json meta;
    meta["backend"] = to_json(config.backend);
    meta["tau_mm"] = config.tau_mm;
    meta["fixed_seed"] = config.fixed_seed;
    meta["seeds"] = config.seeds;
    meta["subjects"] = config.subjects.size();
    meta["aggregation"] = to_string(config.aggregation);
    meta["std"] = "population (divide by n) over unit means";
    meta["ttest"] = "two-tailed paired t-test, sample std (n-1) of differences";
    meta["pairing"] = to_string(config.pairing);
    meta["failed_cells"] = outcome.failed;
    agg["meta"] = std::move(meta);
    const auto body = to_json(table);
    for (const auto& [k, v] : body.items()) agg[k] = v;
    if (config.baseline) {
        agg["dice_groups_reference"] = config.baseline->label();
        agg["dice_groups"] = to_json(group_by_dice(records, config.dice_bins, config.baseline));
    }
    write_text_atomic(out_dir / "aggregate.json", agg.dump(2) + "\n");

    for (auto layout : {TableLayout::Table1, TableLayout::Table2, TableLayout::Table3}) {
        if (!layout_applicable(table, layout)) continue;
        const auto name = to_string(layout);
        write_text_atomic(out_dir / (name + ".md"),
                          render_table(table, layout, TableFormat::Markdown).text);
        write_text_atomic(out_dir / (name + ".csv"),
                          render_table(table, layout, TableFormat::Csv).text);
    }

    outcome.table = std::move(table);
    outcome.records = std::move(records);
    return outcome;
}

}  // namespace promptbench
