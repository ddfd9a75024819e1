#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "promptbench/experiment.hpp"

namespace promptbench {

enum class TableLayout { Table1, Table2, Table3 };
enum class TableFormat { Markdown, Csv };

TableLayout parse_layout(std::string_view text);
TableFormat parse_format(std::string_view text);
std::string to_string(TableLayout layout);

/// Three decimals with the leading zero dropped: 0.637 -> ".637",
/// 1.0 -> "1.000".
std::string format_decimal(double value);
/// ".637±.014"
std::string format_mean_std(double mean, double std);

struct RenderedTable {
    std::string text;
    std::vector<std::string> warnings;  // e.g. cells rendered as "—"
    std::size_t rows = 0;
};

/// Table1: region-constrained rows (B/M/C presence) x prompt counts, Dice and NSD.
/// Table2: cumulative rows (initial region, cumulative region) x splits, Dice and NSD.
/// Table3: two-stage rows (initial region/count, cumulative count) x cumulative region, Dice.
/// Markdown bolds the best mean of each column and underlines the best of each
/// row within a metric; CSV carries raw numbers only.
RenderedTable render_table(const ResultTable& results, TableLayout layout, TableFormat format);

/// True when `results` holds at least one cell the layout can show.
bool layout_applicable(const ResultTable& results, TableLayout layout);

}  // namespace promptbench
