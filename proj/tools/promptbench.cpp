// promptbench: command-line front end.
//
// Exit codes: 0 success, 2 usage or validation error, 3 backend failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptbench/error.hpp"
#include "promptbench/experiment.hpp"
#include "promptbench/metrics.hpp"
#include "promptbench/phantom.hpp"
#include "promptbench/report.hpp"
#include "promptbench/sampling.hpp"
#include "promptbench/segmenter.hpp"
#include "promptbench/subregion.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace promptbench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        write_text(out_path, text);
    }
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::size_t resolve_workers(std::optional<std::size_t> flag, std::size_t from_config) {
    if (flag) return *flag;
    if (const char* env = std::getenv("PROMPTBENCH_WORKERS"); env && *env) {
        try {
            std::size_t pos = 0;
            const long long n = std::stoll(env, &pos);
            if (pos != std::string(env).size() || n < 1) throw std::invalid_argument(env);
            return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw ValidationError("PROMPTBENCH_WORKERS must be a positive integer, got \"" +
                                  std::string(env) + "\"");
        }
    }
    if (from_config > 0) return from_config;
    return std::max(1u, std::thread::hardware_concurrency());
}

struct DecomposeArgs {
    std::string gt;
    std::string out;
    std::string format = "nifti";
};

int cmd_decompose(const DecomposeArgs& a) {
    const Mask gt = load_mask(a.gt);
    const SubRegions parts = decompose(gt);
    fs::create_directories(a.out);
    const std::string ext = a.format == "raw" ? ".raw" : ".nii";
    save_mask(parts.boundary, fs::path(a.out) / ("boundary" + ext));
    save_mask(parts.margin, fs::path(a.out) / ("margin" + ext));
    save_mask(parts.center, fs::path(a.out) / ("center" + ext));
    ordered_json summary;
    summary["B"] = parts.boundary.count();
    summary["M"] = parts.margin.count();
    summary["C"] = parts.center.count();
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

struct SampleArgs {
    std::string gt;
    std::string kind = "random-whole";
    std::string region = "whole";
    std::size_t count = 1;
    std::string initial_region = "whole";
    std::size_t initial_count = 1;
    std::string cumulative_region = "C";
    std::size_t cumulative_count = 4;
    std::uint64_t seed = 0;
    std::uint64_t fixed_seed = 0;
    std::string out;
};

StrategySpec spec_from_args(const SampleArgs& a) {
    switch (parse_strategy_kind(a.kind)) {
        case StrategyKind::RandomWhole: return StrategySpec::random_whole(a.count);
        case StrategyKind::RegionConstrained:
            return StrategySpec::region_constrained(RegionSet::parse(a.region), a.count);
        case StrategyKind::Cumulative:
            return StrategySpec::cumulative(RegionSet::parse(a.initial_region), a.initial_count,
                                            RegionSet::parse(a.cumulative_region),
                                            a.cumulative_count);
        case StrategyKind::InitialVaried:
            return StrategySpec::initial_varied(RegionSet::parse(a.initial_region), a.initial_count,
                                                RegionSet::parse(a.cumulative_region),
                                                a.cumulative_count);
    }
    throw ValidationError("unknown strategy kind");
}

int cmd_sample(const SampleArgs& a) {
    const Mask gt = load_mask(a.gt);
    const StrategySpec spec = spec_from_args(a);
    spec.validate();
    const PromptSet prompts = build_strategy_prompts(spec, decompose(gt), a.fixed_seed, a.seed);
    for (const auto& w : prompts.warnings) std::cerr << "warning: " << to_json(w).dump() << "\n";
    emit(to_json(prompts).dump(2) + "\n", a.out);
    return kExitOk;
}

struct SegmentArgs {
    std::string gt;
    std::string image;
    std::string prompts;
    std::string backend;
    std::string out;
    std::string workdir;
    double r_base = OracleParams{}.r_base;
    double alpha = OracleParams{}.alpha;
    double r_neg = OracleParams{}.r_neg;
    double tau_mm = kDefaultTauMm;
};

int cmd_segment(const SegmentArgs& a) {
    const Mask gt = load_mask(a.gt);
    const PromptSet prompts = prompt_set_from_json(read_json(a.prompts));
    SegmenterBackend backend = OracleParams{a.r_base, a.alpha, a.r_neg};
    if (!a.backend.empty()) backend = backend_from_json(read_json(a.backend));
    std::optional<Mask> pred;
    if (const auto* oracle = std::get_if<OracleParams>(&backend)) {
        oracle->validate();
        pred = synthetic_segment(gt, prompts, *oracle);
    } else {
        if (a.image.empty()) throw ValidationError("--image is required for an external backend");
        const Volume3 image = load_volume(a.image);
        const fs::path workdir =
            a.workdir.empty() ? fs::path(a.out).parent_path() / "segment-work" : fs::path(a.workdir);
        pred = external_segment(image, prompts, std::get<ExternalCommand>(backend), workdir,
                                ExternalRequest{fs::path(a.gt).stem().string(), a.tau_mm}, &gt);
    }
    save_mask(*pred, a.out);
    std::cout << pred->count() << " voxels written to " << a.out << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string pred;
    std::string gt;
    double tau_mm = kDefaultTauMm;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const MetricRecord m = evaluate(load_mask(a.pred), load_mask(a.gt), a.tau_mm);
    ordered_json j;
    j["dice"] = m.dice;
    j["nsd"] = m.nsd;
    j["tau_mm"] = m.tau_mm;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

struct RunArgs {
    std::string config;
    std::optional<std::size_t> workers;
};

int cmd_run(const RunArgs& a) {
    ExperimentConfig cfg = load_config(a.config);
    cfg.workers = resolve_workers(a.workers, cfg.workers);
    const RunOutcome outcome = run_experiment(cfg);
    std::cout << "cells: " << outcome.records.size() << " (computed " << outcome.computed
              << ", reused " << outcome.reused << ", failed " << outcome.failed << ")\n"
              << "output: " << cfg.output_dir.string() << "\n";
    for (const auto& r : outcome.records) {
        if (!r.ok) {
            std::cerr << "failed cell " << r.strategy << "@" << r.count << " seed " << r.seed
                      << " case " << r.case_id << ": " << r.error << "\n";
        }
    }
    return kExitOk;
}

struct ReportArgs {
    std::string results;
    std::string layout = "table1";
    std::string format = "markdown";
    std::string aggregation = "per-seed";
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    const TableLayout layout = parse_layout(a.layout);
    const TableFormat format = parse_format(a.format);
    AggregationMode mode;
    if (a.aggregation == "per-seed") {
        mode = AggregationMode::PerSeed;
    } else if (a.aggregation == "per-subject") {
        mode = AggregationMode::PerSubject;
    } else {
        throw ValidationError("--aggregation must be per-seed or per-subject");
    }
    const ResultTable table = aggregate(read_results(a.results), mode);
    const RenderedTable rendered = render_table(table, layout, format);
    for (const auto& w : rendered.warnings) std::cerr << "warning: " << w << "\n";
    emit(rendered.text, a.out);
    return kExitOk;
}

struct PhantomArgs {
    std::string out;
    std::size_t count = 20;
    std::uint64_t seed = 1;
    std::int64_t size = PhantomParams{}.size;
    bool images = false;
};

int cmd_phantoms(const PhantomArgs& a) {
    if (a.count == 0) throw ValidationError("--count must be at least 1");
    fs::create_directories(a.out);
    PhantomParams params;
    params.size = a.size;
    auto subjects = ordered_json::array();
    for (std::size_t i = 0; i < a.count; ++i) {
        const std::string id = "phantom_" + std::to_string(i);
        const std::uint64_t seed = a.seed + i;
        const Mask gt = make_phantom(seed, params);
        save_mask(gt, fs::path(a.out) / (id + "_gt.nii"));
        ordered_json s;
        s["case_id"] = id;
        if (a.images) {
            save_volume(phantom_image(gt, seed), fs::path(a.out) / (id + "_image.nii"));
            s["image"] = id + "_image.nii";
        }
        s["gt"] = id + "_gt.nii";
        subjects.push_back(std::move(s));
    }
    write_text(fs::path(a.out) / "subjects.json", subjects.dump(2) + "\n");
    std::cout << a.count << " phantoms written to " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-prompt selection benchmark: sub-regions, sampling, metrics, experiments"};
    app.require_subcommand(1);

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Split a ground-truth mask into B/M/C sub-regions");
    c_dec->add_option("--gt", dec.gt, "Ground-truth mask (.nii or .raw/.json)")->required();
    c_dec->add_option("--out", dec.out, "Output directory")->required();
    c_dec->add_option("--format", dec.format, "Mask file format")
        ->check(CLI::IsMember({"nifti", "raw"}))
        ->capture_default_str();

    SampleArgs smp;
    auto* c_smp = app.add_subcommand("sample", "Draw point prompts for one run");
    c_smp->add_option("--gt", smp.gt, "Ground-truth mask")->required();
    c_smp->add_option("--strategy", smp.kind,
                      "random-whole | region-constrained | cumulative | initial-varied")
        ->capture_default_str();
    c_smp->add_option("--region", smp.region, "Region for single-stage kinds (B, M+C, whole, ...)")
        ->capture_default_str();
    c_smp->add_option("--count", smp.count, "Prompt count for single-stage kinds")
        ->capture_default_str();
    c_smp->add_option("--initial-region", smp.initial_region, "Initial region (two-stage kinds)")
        ->capture_default_str();
    c_smp->add_option("--initial-count", smp.initial_count, "Initial prompt count")
        ->capture_default_str();
    c_smp->add_option("--cumulative-region", smp.cumulative_region,
                      "Cumulative region (two-stage kinds)")
        ->capture_default_str();
    c_smp->add_option("--cumulative-count", smp.cumulative_count, "Cumulative prompt count")
        ->capture_default_str();
    c_smp->add_option("--seed", smp.seed, "Run seed")->capture_default_str();
    c_smp->add_option("--fixed-seed", smp.fixed_seed, "Seed shared across runs (two-stage kinds)")
        ->capture_default_str();
    c_smp->add_option("--out", smp.out, "Output prompts.json (stdout when omitted)");

    SegmentArgs seg;
    auto* c_seg = app.add_subcommand("segment", "Segment one case from a prompts file");
    c_seg->add_option("--gt", seg.gt, "Ground-truth mask")->required();
    c_seg->add_option("--prompts", seg.prompts, "prompts.json")->required();
    c_seg->add_option("--out", seg.out, "Output mask path")->required();
    c_seg->add_option("--image", seg.image, "Image volume (external backends)");
    c_seg->add_option("--backend", seg.backend, "Backend JSON file (defaults to the synthetic oracle)");
    c_seg->add_option("--workdir", seg.workdir, "Scratch directory for external backends");
    c_seg->add_option("--r-base", seg.r_base, "Oracle base radius, mm")->capture_default_str();
    c_seg->add_option("--alpha", seg.alpha, "Oracle depth gain")->capture_default_str();
    c_seg->add_option("--r-neg", seg.r_neg, "Oracle negative carve radius, mm")->capture_default_str();
    c_seg->add_option("--tau", seg.tau_mm, "Tolerance passed to external backends, mm")
        ->capture_default_str();

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Dice and normalised surface Dice of a prediction");
    c_ev->add_option("--pred", ev.pred, "Predicted mask")->required();
    c_ev->add_option("--gt", ev.gt, "Ground-truth mask")->required();
    c_ev->add_option("--tau", ev.tau_mm, "NSD tolerance, mm")->capture_default_str();

    RunArgs run;
    auto* c_run = app.add_subcommand("run", "Run an experiment grid from a JSON config");
    c_run->add_option("--config", run.config, "Experiment config JSON")->required();
    c_run->add_option("--workers", run.workers,
                      "Parallel tasks (fallback: PROMPTBENCH_WORKERS, config workers, hardware threads)")
        ->check(CLI::PositiveNumber);

    ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "Render a results table from results.jsonl");
    c_rep->add_option("--results", rep.results, "results.jsonl")->required();
    c_rep->add_option("--layout", rep.layout, "table1 | table2 | table3")
        ->check(CLI::IsMember({"table1", "table2", "table3"}))
        ->capture_default_str();
    c_rep->add_option("--format", rep.format, "markdown | csv")
        ->check(CLI::IsMember({"markdown", "md", "csv"}))
        ->capture_default_str();
    c_rep->add_option("--aggregation", rep.aggregation, "per-seed | per-subject")
        ->check(CLI::IsMember({"per-seed", "per-subject"}))
        ->capture_default_str();
    c_rep->add_option("--out", rep.out, "Output file (stdout when omitted)");

    PhantomArgs ph;
    auto* c_ph = app.add_subcommand("phantoms", "Write synthetic phantom subjects");
    c_ph->add_option("--out", ph.out, "Output directory")->required();
    c_ph->add_option("--count", ph.count, "Number of subjects")->capture_default_str();
    c_ph->add_option("--seed", ph.seed, "First phantom seed")->capture_default_str();
    c_ph->add_option("--size", ph.size, "Grid edge, voxels")->capture_default_str();
    c_ph->add_flag("--images", ph.images, "Also write noisy intensity images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*c_dec) return cmd_decompose(dec);
        if (*c_smp) return cmd_sample(smp);
        if (*c_seg) return cmd_segment(seg);
        if (*c_ev) return cmd_evaluate(ev);
        if (*c_run) return cmd_run(run);
        if (*c_rep) return cmd_report(rep);
        if (*c_ph) return cmd_phantoms(ph);
    } catch (const BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
