#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cartoonqa/core.hpp"
#include "cartoonqa/runner.hpp"

namespace cartoonqa {

struct SummaryTableRow {
    std::string label;
    std::map<std::string, double> values;  // keyed by column name
    std::optional<double> delta_vs_full;   // percent, non-Full rows when a Full row exists

    bool operator==(const SummaryTableRow&) const = default;
};

struct SummaryTable {
    std::string title;
    std::vector<std::string> columns;  // fixed order: Accuracy, BLEU-1..BERTScore
    std::vector<SummaryTableRow> rows;

    static SummaryTable from_run(const AblationRun& run, std::string title = "");
    json to_json() const;
    static SummaryTable from_json(const json& j);

    bool operator==(const SummaryTable&) const = default;
};

enum class ReportFormat { markdown, csv, json_format };

ReportFormat report_format_from_string(const std::string& s);

std::string render_table(const SummaryTable& table, ReportFormat format);
std::string render_table(const AblationRun& run, ReportFormat format);

// The (a)/(b) panel layout used when several datasets are reported in one
// invocation. Markdown only.
std::string render_panels_markdown(const std::vector<SummaryTable>& tables);

}  // namespace cartoonqa
