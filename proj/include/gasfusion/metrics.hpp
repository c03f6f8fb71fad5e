#pragma once

#include <array>
#include <string>
#include <vector>

#include "gasfusion/errors.hpp"

namespace gasfusion {

inline constexpr int kMetricClasses = 4;

// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    std::array<std::array<long, kMetricClasses>, kMetricClasses> counts{};

    long total() const;
    long row_sum(int r) const;
    long col_sum(int c) const;
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-class precision/recall/F1 plus overall accuracy; 0/0 cells resolve
// to 0 so a report is always total.
struct ClassReport {
    std::array<ClassMetrics, kMetricClasses> per_class{};
    double accuracy = 0.0;
};

ClassReport report(const ConfusionMatrix& cm);

std::string confusion_text(const ConfusionMatrix& cm);
std::string report_text(const std::string& name, const ConfusionMatrix& cm,
                        const ClassReport& rep);

// Comparison of several models: an aligned text table and a JSON twin that
// parses back to the same records.
struct ComparisonRow {
    std::string name;
    ClassReport rep;
};

std::string comparison_text(const std::vector<ComparisonRow>& rows);
std::string comparison_json(const std::vector<ComparisonRow>& rows);
std::vector<ComparisonRow> parse_comparison_json(const std::string& text);

std::string report_json(const std::string& name, const ConfusionMatrix& cm,
                        const ClassReport& rep);

} // namespace gasfusion
