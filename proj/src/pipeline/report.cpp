#include "emseg/pipeline/report.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <optional>

#include "emseg/binary_io.hpp"
#include "emseg/errors.hpp"
#include "emseg/pipeline/config.hpp"
#include "emseg/pipeline/csv.hpp"
#include "emseg/pipeline/pipeline.hpp"

namespace emseg::pipeline {
namespace fs = std::filesystem;

namespace {

using Row = std::vector<std::string>;

std::optional<Row> find_row(const CsvTable& table, const std::vector<std::pair<std::string, std::string>>& match) {
    for (const auto& row : table.rows) {
        bool ok = true;
        for (const auto& [column, value] : match) {
            ok = ok && row[table.column(column)] == value;
        }
        if (ok) {
            return row;
        }
    }
    return std::nullopt;
}

std::string cell(const CsvTable& table, const Row& row, const std::string& column) {
    return row[table.column(column)];
}

double number(const std::string& text) {
    try {
        return std::stod(text);
    } catch (const std::exception&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

std::string table_block(const CsvTable& table, const std::vector<std::string>& columns,
                        const std::vector<Row>& rows) {
    std::vector<std::size_t> width;
    for (const auto& c : columns) {
        std::size_t w = c.size();
        for (const auto& row : rows) {
            w = std::max(w, cell(table, row, c).size());
        }
        width.push_back(w + 2);
    }
    std::string out;
    auto line = [&](auto&& text_of) {
        std::string l;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            l += fmt::format("{:<{}}", text_of(i), width[i]);
        }
        l.erase(l.find_last_not_of(' ') + 1);
        out += l + "\n";
    };
    line([&](std::size_t i) { return columns[i]; });
    for (const auto& row : rows) {
        line([&](std::size_t i) { return cell(table, row, columns[i]); });
    }
    return out;
}

std::string metrics_section(const CsvTable& table, const std::string& split) {
    std::vector<Row> rows;
    for (const auto& target : {"recurrence", "whole"}) {
        for (const auto& row : table.rows) {
            if (row[table.column("case")] == kPooledRow && row[table.column("target")] == target) {
                rows.push_back(row);
            }
        }
    }
    return fmt::format("Metrics, {} split (pooled over cases)\n", split) +
           table_block(table, {"target", "model", "auc", "sensitivity", "specificity", "youden", "mcc", "dice", "tau"},
                       rows);
}

std::string verdict(const CriterionCheck& c) {
    if (!c.evaluated) {
        return "SKIP";
    }
    return c.passed ? "PASS" : "FAIL";
}

} // namespace

const CriterionCheck& Report::check(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) {
            return c;
        }
    }
    throw ContractError("report has no check named '" + name + "'");
}

Report emit_report(const fs::path& run_dir) {
    const RunLayout layout{run_dir};
    const std::vector<fs::path> required{layout.config(),     layout.metrics("train"),      layout.metrics("test"),
                                         layout.thresholds(), layout.burden_regression(), layout.mrs()};
    std::vector<std::string> missing;
    for (const auto& path : required) {
        if (!fs::is_regular_file(path)) {
            missing.push_back(path.filename().string());
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size(); ++i) {
            list += (i ? ", " : "") + missing[i];
        }
        throw PipelineError("incomplete run in " + run_dir.string() + "; missing " + list);
    }

    CsvTable train;
    CsvTable test;
    CsvTable thresholds;
    CsvTable regression;
    CsvTable mrs;
    try {
        train = read_csv(layout.metrics("train"));
        test = read_csv(layout.metrics("test"));
        thresholds = read_csv(layout.thresholds());
        regression = read_csv(layout.burden_regression());
        mrs = read_csv(layout.mrs());
    } catch (const Error& e) {
        throw PipelineError(std::string("cannot read run artifacts: ") + e.what());
    }

    Report report;
    std::string& text = report.text;
    text += "Run summary: " + run_dir.string() + "\n\n";
    text += metrics_section(test, "test") + "\n";
    text += metrics_section(train, "train") + "\n";
    text += "Selected thresholds (Youden on pooled training ROC)\n";
    text += table_block(thresholds, {"model", "target", "tau", "train_youden"}, thresholds.rows) + "\n";
    text += "Tumor burden correlation, test cases\n";
    text += table_block(regression, {"model", "component", "n", "r", "p", "slope", "intercept"}, regression.rows) +
            "\n";
    text += "Metabolite contrast, test cases (segmented vs unsegmented ROI2)\n";
    text += table_block(mrs, {"model", "metabolite", "n", "mean_infiltrated", "mean_non_infiltrated", "t", "p"},
                        mrs.rows) +
            "\n";

    const std::string em(kEmredl);
    const std::string base(kBaseline);
    const std::vector<std::pair<std::string, std::string>> rec_em{
        {"case", kPooledRow}, {"model", em}, {"target", "recurrence"}};
    const std::vector<std::pair<std::string, std::string>> rec_base{
        {"case", kPooledRow}, {"model", base}, {"target", "recurrence"}};

    CriterionCheck gap{"separation-gap", false, false, "needs both emredl and baseline"};
    const auto em_row = find_row(test, rec_em);
    const auto base_row = find_row(test, rec_base);
    if (em_row && base_row) {
        const auto a = cell(test, *em_row, "auc");
        const auto b = cell(test, *base_row, "auc");
        const double diff = number(a) - number(b);
        gap.evaluated = true;
        gap.passed = diff >= kRequiredAucGap && number(a) >= kRequiredAuc;
        gap.detail = fmt::format("emredl recurrence test AUC {} vs baseline {}, gap {} (need gap >= {} and AUC >= {})",
                                 a, b, format_number(diff), kRequiredAucGap, kRequiredAuc);
    }
    report.checks.push_back(gap);

    CriterionCheck burden{"burden-correlation", false, false, "needs both emredl and baseline"};
    const auto em_fit = find_row(regression, {{"model", em}, {"component", "infiltrated"}});
    const auto base_fit = find_row(regression, {{"model", base}, {"component", "infiltrated"}});
    if (em_fit && base_fit) {
        const auto a = cell(regression, *em_fit, "r");
        const auto b = cell(regression, *base_fit, "r");
        burden.evaluated = true;
        burden.passed = number(a) >= kRequiredBurdenR && number(b) < number(a);
        burden.detail = fmt::format("emredl infiltrated burden r {} vs baseline {} (need r >= {} and baseline smaller)",
                                    a, b, kRequiredBurdenR);
    }
    report.checks.push_back(burden);

    CriterionCheck metabolite{"metabolite-contrast", false, false, "needs emredl with metabolite channels"};
    const auto cho = find_row(mrs, {{"model", em}, {"metabolite", "cho"}});
    const auto naa = find_row(mrs, {{"model", em}, {"metabolite", "naa"}});
    if (cho && naa) {
        const auto cho_p = cell(mrs, *cho, "p");
        const auto naa_p = cell(mrs, *naa, "p");
        const bool cho_up = number(cell(mrs, *cho, "mean_infiltrated")) > number(cell(mrs, *cho, "mean_non_infiltrated"));
        const bool naa_down =
            number(cell(mrs, *naa, "mean_infiltrated")) < number(cell(mrs, *naa, "mean_non_infiltrated"));
        metabolite.evaluated = true;
        metabolite.passed = cho_up && naa_down && number(cho_p) < kRequiredMrsP && number(naa_p) < kRequiredMrsP;
        metabolite.detail = fmt::format("cho {} (p {}), naa {} (p {}) in the segmented part (need higher cho, lower "
                                        "naa, p < {})",
                                        cho_up ? "higher" : "not higher", cho_p, naa_down ? "lower" : "not lower",
                                        naa_p, kRequiredMrsP);
    }
    report.checks.push_back(metabolite);

    text += "Acceptance checks\n";
    for (const auto& c : report.checks) {
        text += fmt::format("[{}] {}: {}\n", verdict(c), c.name, c.detail);
    }
    write_text_file(layout.summary(), text);
    return report;
}

} // namespace emseg::pipeline
