#include "promptbench/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "promptbench/error.hpp"

namespace promptbench {

TableLayout parse_layout(std::string_view text) {
    if (text == "table1") return TableLayout::Table1;
    if (text == "table2") return TableLayout::Table2;
    if (text == "table3") return TableLayout::Table3;
    throw ValidationError("unknown layout \"" + std::string(text) +
                          "\" (expected table1, table2 or table3)");
}

TableFormat parse_format(std::string_view text) {
    if (text == "markdown" || text == "md") return TableFormat::Markdown;
    if (text == "csv") return TableFormat::Csv;
    throw ValidationError("unknown format \"" + std::string(text) + "\" (expected markdown or csv)");
}

std::string to_string(TableLayout layout) {
    switch (layout) {
        case TableLayout::Table1: return "table1";
        case TableLayout::Table2: return "table2";
        case TableLayout::Table3: return "table3";
    }
    return "table1";
}

std::string format_decimal(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    std::string s(buf);
    if (s.rfind("0.", 0) == 0) {
        s.erase(0, 1);
    } else if (s.rfind("-0.", 0) == 0) {
        s.erase(1, 1);
        if (s == "-.000") s = ".000";
    }
    return s;
}

std::string format_mean_std(double mean, double std) {
    return format_decimal(mean) + "±" + format_decimal(std);
}

namespace {

constexpr const char* kMissing = "—";

std::string raw_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

// B, M, C, then pairs, then whole.
int region_rank(RegionSet r) {
    static constexpr int kRank[8] = {99, 0, 1, 3, 2, 4, 5, 6};
    return kRank[r.bits()];
}

std::string count_label(std::size_t n) { return std::to_string(n) + "P"; }

std::string split_label(std::size_t i, std::size_t c) {
    return "(" + std::to_string(i) + "+" + std::to_string(c) + ")P";
}

std::string short_tag(RegionSet r) { return r.is_whole() ? "W" : r.tag(); }

// Values displayed equal are treated as tied.
long long display_key(double v) { return std::llround(v * 1000.0); }

struct Cell {
    const AggregateCell* src = nullptr;
};

struct Grid {
    std::vector<std::string> row_prefix_header;       // leading label columns
    std::vector<std::vector<std::string>> row_labels;  // per row, raw text
    std::vector<std::vector<std::string>> row_csv_labels;
    std::vector<std::string> col_labels;              // per metric group
    std::vector<std::string> metrics;                 // "dice" and optionally "nsd"
    std::vector<std::vector<Cell>> cells;             // rows x cols
};

const MetricSummary& pick(const AggregateCell& c, const std::string& metric) {
    return metric == "dice" ? c.dice : c.nsd;
}

std::string metric_title(const std::string& m) { return m == "dice" ? "Dice" : "NSD"; }

RenderedTable emit(const Grid& g, TableFormat format, const std::vector<std::string>& notes) {
    RenderedTable out;
    out.rows = g.cells.size();
    const std::size_t ncols = g.col_labels.size();

    for (std::size_t r = 0; r < g.cells.size(); ++r) {
        for (std::size_t c = 0; c < ncols; ++c) {
            if (!g.cells[r][c].src) {
                std::string where;
                for (const auto& l : g.row_labels[r]) where += (where.empty() ? "" : " ") + l;
                out.warnings.push_back("missing cell: row [" + where + "] column " + g.col_labels[c]);
            }
        }
    }

    std::ostringstream ss;
    if (format == TableFormat::Csv) {
        for (const auto& h : g.row_prefix_header) ss << h << ',';
        bool first = true;
        for (const auto& m : g.metrics) {
            for (const auto& col : g.col_labels) {
                ss << (first ? "" : ",") << m << '_' << col << "_mean," << m << '_' << col << "_std";
                first = false;
            }
        }
        ss << '\n';
        for (std::size_t r = 0; r < g.cells.size(); ++r) {
            for (const auto& l : g.row_csv_labels[r]) ss << l << ',';
            first = true;
            for (const auto& m : g.metrics) {
                for (std::size_t c = 0; c < ncols; ++c) {
                    ss << (first ? "" : ",");
                    first = false;
                    if (const auto* cell = g.cells[r][c].src) {
                        const auto& s = pick(*cell, m);
                        ss << raw_number(s.mean) << ',' << raw_number(s.std);
                    } else {
                        ss << ',';
                    }
                }
            }
            ss << '\n';
        }
        out.text = ss.str();
        return out;
    }

    // Markdown.  Column best in bold, row best (within a metric group) underlined.
    std::vector<std::vector<std::string>> body(g.cells.size());
    for (const auto& m : g.metrics) {
        std::vector<long long> col_best(ncols, std::numeric_limits<long long>::min());
        std::vector<long long> row_best(g.cells.size(), std::numeric_limits<long long>::min());
        for (std::size_t r = 0; r < g.cells.size(); ++r) {
            for (std::size_t c = 0; c < ncols; ++c) {
                if (const auto* cell = g.cells[r][c].src) {
                    const double v = pick(*cell, m).mean;
                    if (std::isnan(v)) continue;
                    col_best[c] = std::max(col_best[c], display_key(v));
                    row_best[r] = std::max(row_best[r], display_key(v));
                }
            }
        }
        const bool multi_row = g.cells.size() > 1;
        const bool multi_col = ncols > 1;
        for (std::size_t r = 0; r < g.cells.size(); ++r) {
            for (std::size_t c = 0; c < ncols; ++c) {
                const auto* cell = g.cells[r][c].src;
                if (!cell) {
                    body[r].push_back(kMissing);
                    continue;
                }
                const auto& s = pick(*cell, m);
                std::string text = format_mean_std(s.mean, s.std);
                if (!std::isnan(s.mean)) {
                    const auto k = display_key(s.mean);
                    if (multi_col && k == row_best[r]) text = "<u>" + text + "</u>";
                    if (multi_row && k == col_best[c]) text = "**" + text + "**";
                }
                body[r].push_back(std::move(text));
            }
        }
    }

    ss << '|';
    for (const auto& h : g.row_prefix_header) ss << ' ' << h << " |";
    for (const auto& m : g.metrics) {
        for (const auto& col : g.col_labels) ss << ' ' << metric_title(m) << ' ' << col << " |";
    }
    ss << "\n|";
    for (std::size_t i = 0; i < g.row_prefix_header.size(); ++i) ss << ":---:|";
    for (std::size_t i = 0; i < g.metrics.size() * ncols; ++i) ss << ":---:|";
    ss << '\n';
    for (std::size_t r = 0; r < g.cells.size(); ++r) {
        ss << '|';
        for (const auto& l : g.row_labels[r]) ss << ' ' << l << " |";
        for (const auto& t : body[r]) ss << ' ' << t << " |";
        ss << '\n';
    }
    if (!notes.empty()) {
        ss << '\n';
        for (const auto& n : notes) ss << n << '\n';
    }
    out.text = ss.str();
    return out;
}

std::string mark(bool present) { return present ? "✓" : "✗"; }
std::string flag(bool present) { return present ? "1" : "0"; }

// Region-constrained cells by (region, count).  Random-whole cells fill the
// whole-region row when no region-constrained whole cell exists.
Grid table1(const ResultTable& t) {
    std::map<std::pair<int, std::size_t>, const AggregateCell*> by_slot;
    std::map<int, RegionSet> regions;
    std::set<std::size_t> counts;
    for (const auto& c : t.cells) {
        RegionSet region;
        if (c.spec.kind == StrategyKind::RegionConstrained) {
            region = c.spec.region;
        } else if (c.spec.kind == StrategyKind::RandomWhole) {
            region = RegionSet::whole();
        } else {
            continue;
        }
        const int rank = region_rank(region);
        regions.emplace(rank, region);
        counts.insert(c.key.count);
        auto& slot = by_slot[{rank, c.key.count}];
        const bool preferred = c.spec.kind == StrategyKind::RegionConstrained;
        if (!slot || (preferred && slot->spec.kind != StrategyKind::RegionConstrained)) slot = &c;
    }
    Grid g;
    g.row_prefix_header = {"B", "M", "C"};
    g.metrics = {"dice", "nsd"};
    for (auto n : counts) g.col_labels.push_back(count_label(n));
    for (const auto& [rank, region] : regions) {
        g.row_labels.push_back(
            {mark(region.has_boundary()), mark(region.has_margin()), mark(region.has_center())});
        g.row_csv_labels.push_back(
            {flag(region.has_boundary()), flag(region.has_margin()), flag(region.has_center())});
        std::vector<Cell> row;
        for (auto n : counts) {
            auto it = by_slot.find({rank, n});
            row.push_back(Cell{it == by_slot.end() ? nullptr : it->second});
        }
        g.cells.push_back(std::move(row));
    }
    return g;
}

// Cumulative cells: rows are (initial region, cumulative region), columns
// are the (initial + cumulative) splits.
Grid table2(const ResultTable& t) {
    using RowKey = std::pair<int, int>;
    std::map<RowKey, std::pair<RegionSet, RegionSet>> rows;
    std::set<std::pair<std::size_t, std::size_t>> splits;
    std::map<std::pair<RowKey, std::pair<std::size_t, std::size_t>>, const AggregateCell*> by_slot;
    for (const auto& c : t.cells) {
        if (c.spec.kind != StrategyKind::Cumulative) continue;
        const RowKey rk{region_rank(c.spec.initial_region), region_rank(c.spec.cumulative_region)};
        rows.emplace(rk, std::make_pair(c.spec.initial_region, c.spec.cumulative_region));
        const std::pair<std::size_t, std::size_t> split{c.spec.initial_count, c.spec.cumulative_count};
        splits.insert(split);
        by_slot.emplace(std::make_pair(rk, split), &c);
    }
    Grid g;
    g.row_prefix_header = {"Init.", "B", "M", "C"};
    g.metrics = {"dice", "nsd"};
    for (const auto& [i, c] : splits) g.col_labels.push_back(split_label(i, c));
    for (const auto& [rk, regions] : rows) {
        const auto& [init, cumu] = regions;
        g.row_labels.push_back({short_tag(init), mark(cumu.has_boundary()), mark(cumu.has_margin()),
                                mark(cumu.has_center())});
        g.row_csv_labels.push_back({short_tag(init), flag(cumu.has_boundary()),
                                    flag(cumu.has_margin()), flag(cumu.has_center())});
        std::vector<Cell> row;
        for (const auto& split : splits) {
            auto it = by_slot.find({rk, split});
            row.push_back(Cell{it == by_slot.end() ? nullptr : it->second});
        }
        g.cells.push_back(std::move(row));
    }
    return g;
}

// Two-stage cells: rows are (initial region, initial count, cumulative
// count), columns the cumulative region.  Dice only.  Initial-varied cells
// are used when present, cumulative cells otherwise.
Grid table3(const ResultTable& t) {
    const bool have_varied = std::any_of(t.cells.begin(), t.cells.end(), [](const auto& c) {
        return c.spec.kind == StrategyKind::InitialVaried;
    });
    const auto wanted = have_varied ? StrategyKind::InitialVaried : StrategyKind::Cumulative;
    using RowKey = std::tuple<int, std::size_t, std::size_t>;
    std::map<RowKey, RegionSet> rows;
    std::map<int, RegionSet> cols;
    std::map<std::pair<RowKey, int>, const AggregateCell*> by_slot;
    for (const auto& c : t.cells) {
        if (c.spec.kind != wanted) continue;
        const RowKey rk{region_rank(c.spec.initial_region), c.spec.initial_count,
                        c.spec.cumulative_count};
        const int ck = region_rank(c.spec.cumulative_region);
        rows.emplace(rk, c.spec.initial_region);
        cols.emplace(ck, c.spec.cumulative_region);
        by_slot.emplace(std::make_pair(rk, ck), &c);
    }
    Grid g;
    g.row_prefix_header = {"Init.", "Cumu."};
    g.metrics = {"dice"};
    for (const auto& [ck, region] : cols) g.col_labels.push_back(short_tag(region));
    for (const auto& [rk, init] : rows) {
        const auto label = std::to_string(std::get<1>(rk)) + "(" + short_tag(init) + ")";
        g.row_labels.push_back({label, count_label(std::get<2>(rk))});
        g.row_csv_labels.push_back({label, std::to_string(std::get<2>(rk))});
        std::vector<Cell> row;
        for (const auto& [ck, region] : cols) {
            auto it = by_slot.find({rk, ck});
            row.push_back(Cell{it == by_slot.end() ? nullptr : it->second});
        }
        g.cells.push_back(std::move(row));
    }
    return g;
}

Grid build(const ResultTable& t, TableLayout layout) {
    switch (layout) {
        case TableLayout::Table1: return table1(t);
        case TableLayout::Table2: return table2(t);
        case TableLayout::Table3: return table3(t);
    }
    return table1(t);
}

}  // namespace

RenderedTable render_table(const ResultTable& results, TableLayout layout, TableFormat format) {
    const Grid g = build(results, layout);
    if (g.cells.empty()) {
        throw ValidationError("results hold no cells for layout " + to_string(layout));
    }
    return emit(g, format, results.notes);
}

bool layout_applicable(const ResultTable& results, TableLayout layout) {
    return !build(results, layout).cells.empty();
}

}  // namespace promptbench
