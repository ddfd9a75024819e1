#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "promptbench/error.hpp"
#include "promptbench/experiment.hpp"
#include "promptbench/phantom.hpp"
#include "support.hpp"

using namespace promptbench;
using namespace testsupport;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunRecord record(const std::string& strategy, std::size_t count, std::uint64_t seed, const std::string& case_id,
                 double dice_value, double nsd_value = 0.5) {
    RunRecord r;
    r.strategy = strategy;
    r.count = count;
    r.seed = seed;
    r.case_id = case_id;
    r.spec = StrategySpec::random_whole(count);
    r.metrics = MetricRecord{dice_value, nsd_value, 1.0};
    return r;
}

std::string error_of(const json& j) {
    try {
        config_from_json(j, "/tmp");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

json minimal_config() {
    return json::parse(R"({
        "subjects": [{"case_id": "a", "gt": "a.nii"}],
        "strategies": [{"name": "baseline", "kind": "random-whole"}],
        "prompt_counts": [1, 5],
        "num_seeds": 3
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small phantom cohort written into `dir`.
std::vector<SubjectSpec> write_cohort(const fs::path& dir, int n, bool images = false) {
    std::vector<SubjectSpec> out;
    PhantomParams params;
    params.size = 16;
    params.min_radius = 2.0;
    params.max_radius = 5.0;
    for (int i = 0; i < n; ++i) {
        const Mask gt = make_phantom(100 + i, params);
        SubjectSpec s;
        s.case_id = "case" + std::to_string(i);
        s.gt = dir / (s.case_id + "_gt.nii");
        save_mask(gt, s.gt);
        if (images) {
            s.image = dir / (s.case_id + "_img.nii");
            save_volume(phantom_image(gt, 100 + i), *s.image);
        }
        out.push_back(s);
    }
    return out;
}

ExperimentConfig small_config(const fs::path& dir, const std::vector<SubjectSpec>& subjects) {
    ExperimentConfig cfg;
    cfg.subjects = subjects;
    cfg.strategies = {
        StrategyEntry{"baseline", StrategySpec::random_whole(1), {}, {}},
        StrategyEntry{"B", StrategySpec::region_constrained(RegionSet::boundary(), 1), {}, {}},
        StrategyEntry{"C", StrategySpec::region_constrained(RegionSet::center(), 1), {}, {}},
        StrategyEntry{"cum", StrategySpec::cumulative(RegionSet::whole(), 1, RegionSet::center(), 1), {},
                      {{1, 2}, {2, 3}}},
    };
    cfg.prompt_counts = {1, 3};
    cfg.seeds = derive_seeds(5, 4);
    cfg.fixed_seed = 99;
    cfg.output_dir = dir / "out";
    cfg.baseline = MethodKey{"baseline", 1};
    return cfg;
}

}  // namespace

TEST_CASE("config parsing fills defaults") {
    const ExperimentConfig cfg = config_from_json(minimal_config(), "/data");
    CHECK(cfg.subjects.at(0).gt == fs::path("/data/a.nii"));
    CHECK(cfg.seeds == derive_seeds(0, 3));
    CHECK(cfg.fixed_seed == cfg.master_seed);
    CHECK(cfg.columns().size() == 2);
    CHECK(cfg.dice_bins == default_dice_bins());
    CHECK(std::holds_alternative<OracleParams>(cfg.backend));
    json j = minimal_config();
    j.erase("num_seeds");
    CHECK(config_from_json(j, "/").seeds.size() == kDefaultSeedCount);
}

TEST_CASE("two-stage strategies expand over their splits") {
    json j = minimal_config();
    j["strategies"].push_back(json::parse(
        R"({"name": "cum", "kind": "cumulative", "initial_region": "W", "cumulative_region": "C",
            "splits": [[1, 4], [1, 9]]})"));
    const auto cols = config_from_json(j, "/").columns();
    REQUIRE(cols.size() == 4);
    CHECK(cols[2].spec.kind == StrategyKind::Cumulative);
    CHECK(cols[2].key() == MethodKey{"cum", 5});
    CHECK(cols[3].spec.cumulative_count == 9);
    CHECK(cols[3].spec.cumulative_region == RegionSet::center());
}

TEST_CASE("config errors name the offending field") {
    json j = minimal_config();
    j["strategies"][0]["kind"] = "psychic";
    CHECK(error_of(j).find("strategies[0].kind") != std::string::npos);

    j = minimal_config();
    j["strategies"].push_back({{"name", "r"}, {"kind", "region-constrained"}});
    CHECK(error_of(j).find("strategies[1].region") != std::string::npos);

    j = minimal_config();
    j["strategies"].push_back({{"name", "r"}, {"kind", "region-constrained"}, {"region", "Q"}});
    CHECK(error_of(j).find("strategies[1].region") != std::string::npos);

    j = minimal_config();
    j["subjects"][0].erase("gt");
    CHECK(error_of(j).find("subjects[0].gt") != std::string::npos);

    j = minimal_config();
    j["colour"] = "blue";
    CHECK(error_of(j).find("colour") != std::string::npos);

    j = minimal_config();
    j["subjects"].push_back({{"case_id", "a"}, {"gt", "b.nii"}});
    CHECK(error_of(j).find("subjects[1].case_id") != std::string::npos);

    j = minimal_config();
    j["baseline"] = {{"strategy", "baseline"}, {"count", 7}};
    CHECK(error_of(j).find("baseline") != std::string::npos);

    j = minimal_config();
    j["dice_bins"] = {0.0, 0.5, 0.4, 1.0};
    CHECK(error_of(j).find("dice_bins") != std::string::npos);

    j = minimal_config();
    j["dice_bins"] = {0.2, 1.0};
    CHECK(error_of(j).find("dice_bins") != std::string::npos);

    j = minimal_config();
    j["backend"] = {{"kind", "external-process"}, {"command", "seg"}};
    CHECK(error_of(j).find("subjects[0].image") != std::string::npos);

    j = minimal_config();
    j["aggregation"] = "per-voxel";
    CHECK(error_of(j).find("aggregation") != std::string::npos);

    j = minimal_config();
    j["seeds"] = {1, 1};
    CHECK(error_of(j).find("seeds") != std::string::npos);

    j = minimal_config();
    j["strategies"] = json::array();
    CHECK(error_of(j).find("strategies") != std::string::npos);
}

TEST_CASE("per-seed aggregation averages subjects first") {
    // seed 1: (0.2 + 0.4) / 2 = 0.3; seed 2: (0.6 + 0.8) / 2 = 0.7.
    const std::vector<RunRecord> rs{record("m", 1, 1, "a", 0.2), record("m", 1, 1, "b", 0.4),
                                    record("m", 1, 2, "a", 0.6), record("m", 1, 2, "b", 0.8)};
    const ResultTable t = aggregate(rs);
    REQUIRE(t.cells.size() == 1);
    const auto& c = t.cells[0];
    CHECK(c.dice.unit_means.size() == 2);
    CHECK(c.dice.mean == doctest::Approx(0.5));
    CHECK(c.dice.std == doctest::Approx(0.2));
    CHECK(c.nsd.std == 0.0);
    CHECK(c.n_records == 4);

    // Per subject: a = 0.4, b = 0.6.
    const ResultTable s = aggregate(rs, AggregationMode::PerSubject);
    CHECK(s.cells[0].dice.units == std::vector<std::string>{"a", "b"});
    CHECK(s.cells[0].dice.mean == doctest::Approx(0.5));
    CHECK(s.cells[0].dice.std == doctest::Approx(0.1));
}

TEST_CASE("single cell aggregates to itself with zero spread") {
    const ResultTable t = aggregate({record("m", 5, 7, "a", 0.637, 0.9)});
    CHECK(t.cells[0].dice.mean == 0.637);
    CHECK(t.cells[0].dice.std == 0.0);
    CHECK(t.cells[0].nsd.mean == 0.9);
}

TEST_CASE("failed records are excluded and counted") {
    std::vector<RunRecord> rs{record("m", 1, 1, "a", 0.5), record("m", 1, 1, "b", 0.0)};
    rs[1].ok = false;
    const ResultTable t = aggregate(rs);
    CHECK(t.cells[0].n_failed == 1);
    CHECK(t.cells[0].dice.mean == 0.5);

    rs[0].ok = false;
    const ResultTable none = aggregate(rs);
    CHECK(std::isnan(none.cells[0].dice.mean));
    CHECK(none.cells[0].n_failed == 2);
}

TEST_CASE("compare pairs methods over shared units") {
    std::vector<RunRecord> rs;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        rs.push_back(record("a", 1, seed, "x", 0.5 + 0.01 * seed));
        rs.push_back(record("b", 1, seed, "x", 0.4 + 0.02 * (seed % 3)));
    }
    rs.push_back(record("b", 1, 99, "x", 0.0));  // seed absent from a
    const Comparison c = compare(rs, {"a", 1}, {"b", 1});
    CHECK(c.n == 6);
    std::vector<double> xs, ys;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        xs.push_back(0.5 + 0.01 * seed);
        ys.push_back(0.4 + 0.02 * (seed % 3));
    }
    CHECK(c.result.p == doctest::Approx(paired_ttest(xs, ys).p));
    CHECK_THROWS_AS(compare(rs, {"a", 1}, {"zzz", 1}), ValidationError);
    CHECK_THROWS_AS(compare(rs, {"a", 1}, {"b", 1}, "hausdorff"), ValidationError);
}

TEST_CASE("group_by_dice bins subjects by reference Dice") {
    const std::vector<double> edges{0.0, 0.5, 1.0};
    std::vector<RunRecord> rs{record("ref", 1, 1, "a", 0.2), record("ref", 1, 1, "b", 0.7),
                              record("ref", 1, 1, "c", 0.9), record("new", 1, 1, "a", 0.4),
                              record("new", 1, 1, "b", 0.8), record("new", 1, 1, "c", 1.0)};
    const auto bins = group_by_dice(rs, edges, MethodKey{"ref", 1});
    REQUIRE(bins.size() == 2);
    CHECK(bins[0].count == 1);
    CHECK(bins[1].count == 2);
    CHECK(bins[0].mean_dice.at({"new", 1}) == doctest::Approx(0.4));
    CHECK(bins[1].mean_dice.at({"new", 1}) == doctest::Approx(0.9));
    CHECK(bins[1].mean_dice.at({"ref", 1}) == doctest::Approx(0.8));

    // Dice of exactly 1 lands in the closed last bin.
    const auto top = group_by_dice({record("ref", 1, 1, "a", 1.0)}, default_dice_bins());
    CHECK(top.back().count == 1);
    // A value on an inner edge goes to the upper bin.
    const auto edge = group_by_dice({record("ref", 1, 1, "a", 0.5)}, edges);
    CHECK(edge[1].count == 1);

    const auto empty = group_by_dice({}, default_dice_bins());
    CHECK(empty.size() == 10);
    for (const auto& b : empty) {
        CHECK(b.count == 0);
        CHECK(b.mean_dice.empty());
    }

    CHECK_THROWS_AS(group_by_dice(rs, {0.0, 0.6, 0.5, 1.0}), ValidationError);
    CHECK_THROWS_AS(group_by_dice(rs, {0.0}), ValidationError);
    CHECK_THROWS_AS(group_by_dice(rs, {0.1, 1.0}), ValidationError);
}

TEST_CASE("run records round trip through JSON lines") {
    const fs::path dir = scratch_dir("records");
    RunRecord a = record("cum", 5, 42, "case1", 0.75, 0.5);
    a.spec = StrategySpec::cumulative(RegionSet::whole(), 1, RegionSet::center(), 4);
    a.prompts = {{1, 2, 3}, {4, 5, 6}};
    a.warnings.push_back(PromptWarning{WarningKind::EmptyRegionFallback, PromptRole::Cumulative, "C", "M", 0, 0});
    RunRecord b = record("baseline", 1, 7, "case0", 0.0, 0.0);
    b.ok = false;
    b.error = "segmenter exited with status 7";
    write_results(dir / "r.jsonl", {a, b});
    const auto back = read_results(dir / "r.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0] == a);
    CHECK(back[1] == b);

    std::vector<RunRecord> sorted{a, b};
    sort_canonical(sorted);
    CHECK(sorted[0].strategy == "baseline");

    // A torn final line is dropped; a torn middle line is an error.
    {
        std::ofstream out(dir / "r.jsonl", std::ios::app);
        out << R"({"strategy":"x","cou)";
    }
    CHECK(read_results(dir / "r.jsonl").size() == 2);
    {
        std::ofstream out(dir / "r.jsonl", std::ios::app);
        out << "\n" << to_json(a).dump() << "\n";
    }
    CHECK_THROWS_AS(read_results(dir / "r.jsonl"), FormatError);
    CHECK_THROWS_AS(read_results(dir / "missing.jsonl"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("grid results do not depend on the worker count") {
    const fs::path dir = scratch_dir("determinism");
    const auto subjects = write_cohort(dir, 3);
    ExperimentConfig one = small_config(dir / "one", subjects);
    one.workers = 1;
    ExperimentConfig many = small_config(dir / "many", subjects);
    many.workers = 4;
    const RunOutcome a = run_experiment(one);
    const RunOutcome b = run_experiment(many);
    // 3 single-stage strategies x 2 counts + 2 splits = 8 columns.
    CHECK(a.records.size() == 8 * 4 * 3);
    CHECK(a.computed == a.records.size());
    CHECK(slurp(one.output_dir / "results.jsonl") == slurp(many.output_dir / "results.jsonl"));
    CHECK(slurp(one.output_dir / "aggregate.json") == slurp(many.output_dir / "aggregate.json"));
    CHECK(slurp(one.output_dir / "table1.md") == slurp(many.output_dir / "table1.md"));
    CHECK(fs::exists(one.output_dir / "table2.md"));
    CHECK(fs::exists(one.output_dir / "table1.csv"));
    fs::remove_all(dir);
}

TEST_CASE("rerunning reuses finished cells and fills in missing ones") {
    const fs::path dir = scratch_dir("resume");
    const auto subjects = write_cohort(dir, 2);
    ExperimentConfig cfg = small_config(dir, subjects);
    cfg.workers = 2;
    const RunOutcome first = run_experiment(cfg);
    const std::string before = slurp(cfg.output_dir / "results.jsonl");

    const RunOutcome again = run_experiment(cfg);
    CHECK(again.computed == 0);
    CHECK(again.reused == first.records.size());
    CHECK(slurp(cfg.output_dir / "results.jsonl") == before);

    // Drop a few records and leave a torn line behind, as after a crash.
    auto records = read_results(cfg.output_dir / "results.jsonl");
    records.resize(records.size() - 5);
    write_results(cfg.output_dir / "results.jsonl", records);
    {
        std::ofstream out(cfg.output_dir / "results.jsonl", std::ios::app);
        out << R"({"strategy":"B","count":)";
    }
    const RunOutcome resumed = run_experiment(cfg);
    CHECK(resumed.computed == 5);
    CHECK(slurp(cfg.output_dir / "results.jsonl") == before);

    // Extending the seed list only computes the new seeds.
    cfg.seeds.push_back(12345);
    const RunOutcome extended = run_experiment(cfg);
    CHECK(extended.computed == 8 * subjects.size());

    // A different backend may not reuse the directory.
    ExperimentConfig other = cfg;
    other.backend = OracleParams{1.0, 1.0, 0.0};
    CHECK_THROWS_AS(run_experiment(other), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("recorded prompts and metrics reproduce from the record alone") {
    const fs::path dir = scratch_dir("replay");
    const auto subjects = write_cohort(dir, 2);
    const ExperimentConfig cfg = small_config(dir, subjects);
    const RunOutcome out = run_experiment(cfg);
    for (const auto& r : out.records) {
        const auto& spec = *std::find_if(subjects.begin(), subjects.end(),
                                         [&](const SubjectSpec& s) { return s.case_id == r.case_id; });
        const Mask gt = load_mask(spec.gt);
        const PromptSet prompts = build_strategy_prompts(r.spec, decompose(gt), cfg.fixed_seed, r.seed);
        CHECK(prompts.voxels() == r.prompts);
        const Mask pred = synthetic_segment(gt, prompts, std::get<OracleParams>(cfg.backend));
        CHECK(evaluate(pred, gt, cfg.tau_mm) == r.metrics);
    }
    fs::remove_all(dir);
}

TEST_CASE("failing external backend marks cells failed and keeps going") {
    const fs::path dir = scratch_dir("failing");
    const auto subjects = write_cohort(dir, 2, true);
    ExperimentConfig cfg = small_config(dir, subjects);
    cfg.strategies.resize(1);
    cfg.prompt_counts = {1};
    cfg.seeds = {1, 2};
    ExternalCommand cmd;
    cmd.argv = {(fs::path(PB_FIXTURE_DIR) / "fail.sh").string()};
    cfg.backend = cmd;
    const RunOutcome out = run_experiment(cfg);
    CHECK(out.failed == 4);
    CHECK(out.table.cells.at(0).n_failed == 4);
    for (const auto& r : out.records) {
        CHECK_FALSE(r.ok);
        CHECK(r.error.find("model exploded") != std::string::npos);
    }
    const json agg = json::parse(slurp(cfg.output_dir / "aggregate.json"));
    CHECK(agg["meta"]["failed_cells"] == 4);
    fs::remove_all(dir);
}

TEST_CASE("external oracle stub reproduces the in-process grid") {
    const fs::path dir = scratch_dir("stub-grid");
    const auto subjects = write_cohort(dir, 2, true);
    ExperimentConfig local = small_config(dir / "local", subjects);
    local.strategies.resize(3);
    local.seeds = {1, 2};
    const OracleParams params = std::get<OracleParams>(local.backend);

    ExperimentConfig remote = local;
    remote.output_dir = dir / "remote" / "out";
    ExternalCommand cmd;
    cmd.argv = {PB_ORACLE_STUB};
    cmd.include_gt = true;
    cmd.stub_config = json{{"mode", "oracle-mirror"}, {"r_base", params.r_base}, {"alpha", params.alpha},
                           {"r_neg", params.r_neg}};
    remote.backend = cmd;
    const RunOutcome a = run_experiment(local);
    const RunOutcome b = run_experiment(remote);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(b.records[i].ok);
        CHECK(a.records[i].metrics == b.records[i].metrics);
        CHECK(a.records[i].prompts == b.records[i].prompts);
    }
    CHECK_FALSE(fs::exists(remote.output_dir / "work" / "task-0"));
    fs::remove_all(dir);
}

TEST_CASE("unreadable subjects are reported by case id") {
    const fs::path dir = scratch_dir("bad-subject");
    auto subjects = write_cohort(dir, 1);
    subjects[0].gt = dir / "nope.nii";
    const ExperimentConfig cfg = small_config(dir, subjects);
    try {
        run_experiment(cfg);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("case0") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("smallest grids") {
    const fs::path dir = scratch_dir("smallest");
    const auto subjects = write_cohort(dir, 1);
    ExperimentConfig cfg;
    cfg.subjects = subjects;
    cfg.strategies = {StrategyEntry{"baseline", StrategySpec::random_whole(1), {}, {}}};
    cfg.prompt_counts = {1};
    cfg.seeds = {17};
    cfg.output_dir = dir / "one";
    const RunOutcome one = run_experiment(cfg);
    REQUIRE(one.records.size() == 1);
    REQUIRE(one.table.cells.size() == 1);
    CHECK(one.table.cells[0].dice.mean == one.records[0].metrics.dice);
    CHECK(one.table.cells[0].dice.std == 0.0);

    // A single-voxel subject gives the same prompt under every seed.
    std::vector<std::uint8_t> d(27, 0);
    d[13] = 1;
    SubjectSpec dot{"dot", std::nullopt, dir / "dot.nii"};
    save_mask(Mask(grid(3, 3, 3), d), dot.gt);
    cfg.subjects = {dot};
    cfg.seeds = {1, 2};
    cfg.output_dir = dir / "dot";
    const RunOutcome two = run_experiment(cfg);
    REQUIRE(two.records.size() == 2);
    CHECK(two.records[0].prompts == two.records[1].prompts);
    const auto& means = two.table.cells[0].dice.unit_means;
    REQUIRE(means.size() == 2);
    CHECK(means[0] == means[1]);
    CHECK(two.table.cells[0].dice.std == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("dice binning worked examples") {
    const std::vector<double> edges{0.0, 0.5, 1.0};
    const auto ones = group_by_dice({record("m", 1, 1, "a", 1.0), record("m", 1, 1, "b", 1.0)}, edges);
    CHECK(ones[0].count == 0);
    CHECK(ones[1].count == 2);
    const auto three = group_by_dice(
        {record("m", 1, 1, "a", 0.1), record("m", 1, 1, "b", 0.55), record("m", 1, 1, "c", 0.9)}, edges);
    CHECK(three[0].count == 1);
    CHECK(three[1].count == 2);
}
