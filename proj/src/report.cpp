#include "cartoonqa/report.hpp"

#include <cstdio>
#include <sstream>

#include "cartoonqa/metrics.hpp"

namespace cartoonqa {

namespace {

constexpr const char* kBleurtFootnote =
    "BLEURT is not reported: it requires a fine-tuned learned checkpoint.";

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::vector<std::string> standard_columns() {
    std::vector<std::string> cols{"Accuracy"};
    for (const std::string& name : lexical_metric_names()) cols.push_back(name);
    return cols;
}

}  // namespace

SummaryTable SummaryTable::from_run(const AblationRun& run, std::string title) {
    SummaryTable table;
    table.title = title.empty() ? to_string(run.spec.dataset_kind) : std::move(title);
    table.columns = standard_columns();

    const AblationRow* full_row = nullptr;
    for (const AblationRow& row : run.rows)
        if (row.label == "Full") full_row = &row;

    for (const AblationRow& row : run.rows) {
        SummaryTableRow out;
        out.label = row.label;
        out.values["Accuracy"] = row.summary.average;
        for (const auto& [name, value] : row.summary.per_metric) out.values[name] = value;
        if (full_row && row.label != "Full")
            out.delta_vs_full = relative_delta(row.summary.average, full_row->summary.average);
        table.rows.push_back(std::move(out));
    }
    return table;
}

json SummaryTable::to_json() const {
    json rows_json = json::array();
    for (const SummaryTableRow& row : rows) {
        json r{{"label", row.label}, {"values", row.values}};
        if (row.delta_vs_full) r["delta_vs_full_percent"] = *row.delta_vs_full;
        rows_json.push_back(std::move(r));
    }
    return json{{"title", title}, {"columns", columns}, {"rows", std::move(rows_json)}};
}

SummaryTable SummaryTable::from_json(const json& j) {
    SummaryTable table;
    table.title = j.at("title").get<std::string>();
    table.columns = j.at("columns").get<std::vector<std::string>>();
    for (const json& r : j.at("rows")) {
        SummaryTableRow row;
        row.label = r.at("label").get<std::string>();
        row.values = r.at("values").get<std::map<std::string, double>>();
        if (r.contains("delta_vs_full_percent"))
            row.delta_vs_full = r.at("delta_vs_full_percent").get<double>();
        table.rows.push_back(std::move(row));
    }
    return table;
}

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json_format;
    throw std::invalid_argument("unknown report format: '" + s + "'");
}

namespace {

std::string render_markdown(const SummaryTable& table) {
    std::ostringstream out;
    if (!table.title.empty()) out << "### " << table.title << "\n\n";
    out << "| Config. |";
    for (const std::string& col : table.columns) out << " " << col << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < table.columns.size(); ++i) out << "---|";
    out << "\n";
    for (const SummaryTableRow& row : table.rows) {
        out << "| " << row.label << " |";
        for (const std::string& col : table.columns) {
            const auto it = row.values.find(col);
            const double v = it == row.values.end() ? 0.0 : it->second;
            out << " " << fixed4(v);
            if (col == "Accuracy" && row.delta_vs_full)
                out << " (" << format_delta(*row.delta_vs_full) << ")";
            out << " |";
        }
        out << "\n";
    }
    out << "\n_" << kBleurtFootnote << "_\n";
    return out.str();
}

std::string render_csv(const SummaryTable& table) {
    std::ostringstream out;
    out << "Config";
    for (const std::string& col : table.columns) {
        out << "," << col;
        if (col == "Accuracy") out << ",DeltaVsFull";
    }
    out << "\n";
    for (const SummaryTableRow& row : table.rows) {
        out << row.label;
        for (const std::string& col : table.columns) {
            const auto it = row.values.find(col);
            out << "," << fixed4(it == row.values.end() ? 0.0 : it->second);
            if (col == "Accuracy")
                out << "," << (row.delta_vs_full ? format_delta(*row.delta_vs_full) : "");
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace

std::string render_table(const SummaryTable& table, ReportFormat format) {
    switch (format) {
        case ReportFormat::markdown: return render_markdown(table);
        case ReportFormat::csv: return render_csv(table);
        case ReportFormat::json_format: return table.to_json().dump(2) + "\n";
    }
    throw std::invalid_argument("unknown report format");
}

std::string render_table(const AblationRun& run, ReportFormat format) {
    if (run.rows.empty()) throw std::invalid_argument("render_table: run has no rows");
    return render_table(SummaryTable::from_run(run), format);
}

std::string render_panels_markdown(const std::vector<SummaryTable>& tables) {
    std::ostringstream out;
    const char* panel = "abcdefgh";
    for (std::size_t i = 0; i < tables.size(); ++i) {
        SummaryTable labelled = tables[i];
        if (tables.size() > 1 && i < 8)
            labelled.title = "(" + std::string(1, panel[i]) + ") " + labelled.title;
        out << render_markdown(labelled);
        if (i + 1 < tables.size()) out << "\n";
    }
    return out.str();
}

}  // namespace cartoonqa
