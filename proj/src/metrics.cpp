#include "gasfusion/metrics.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "gasfusion/datagen.hpp"

namespace gasfusion {

using nlohmann::json;

long ConfusionMatrix::total() const {
    long n = 0;
    for (const auto& row : counts) {
        for (long v : row) n += v;
    }
    return n;
}

long ConfusionMatrix::row_sum(int r) const {
    long n = 0;
    for (long v : counts[static_cast<std::size_t>(r)]) n += v;
    return n;
}

long ConfusionMatrix::col_sum(int c) const {
    long n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(c)];
    return n;
}

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw ShapeMismatch("confusion: label/prediction lists differ in length");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= kMetricClasses || p < 0 || p >= kMetricClasses) {
            throw InvalidLabel("confusion: label out of range at index " + std::to_string(i));
        }
        ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return cm;
}

ClassReport report(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total == 0) {
        throw EmptyInput("report: empty confusion matrix");
    }
    ClassReport rep;
    long trace = 0;
    for (int c = 0; c < kMetricClasses; ++c) {
        const long tp = cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
        trace += tp;
        const long col = cm.col_sum(c);
        const long row = cm.row_sum(c);
        ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
        m.precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        m.recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    return rep;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

} // namespace

std::string confusion_text(const ConfusionMatrix& cm) {
    std::ostringstream out;
    out << "true\\pred";
    for (int c = 0; c < kMetricClasses; ++c) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%9s", class_name(static_cast<GasClass>(c)));
        out << buf;
    }
    out << '\n';
    for (int r = 0; r < kMetricClasses; ++r) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%-9s", class_name(static_cast<GasClass>(r)));
        out << buf;
        for (int c = 0; c < kMetricClasses; ++c) {
            std::snprintf(buf, sizeof(buf), "%9ld",
                          cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

std::string report_text(const std::string& name, const ConfusionMatrix& cm,
                        const ClassReport& rep) {
    std::ostringstream out;
    out << "model: " << name << '\n';
    out << "samples: " << cm.total() << '\n';
    out << "accuracy: " << fmt(rep.accuracy) << '\n';
    out << '\n' << confusion_text(cm) << '\n';
    out << "class      precision  recall     f1\n";
    for (int c = 0; c < kMetricClasses; ++c) {
        const ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%-10s %-10s %-10s %s\n",
                      class_name(static_cast<GasClass>(c)), fmt(m.precision).c_str(),
                      fmt(m.recall).c_str(), fmt(m.f1).c_str());
        out << buf;
    }
    return out.str();
}

namespace {

json report_to_json(const ClassReport& rep) {
    json j;
    j["accuracy"] = rep.accuracy;
    j["classes"] = json::array();
    for (int c = 0; c < kMetricClasses; ++c) {
        const ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
        j["classes"].push_back(json{{"name", class_name(static_cast<GasClass>(c))},
                                    {"precision", m.precision},
                                    {"recall", m.recall},
                                    {"f1", m.f1}});
    }
    return j;
}

ClassReport report_from_json(const json& j) {
    ClassReport rep;
    rep.accuracy = j.at("accuracy").get<double>();
    const json& classes = j.at("classes");
    if (!classes.is_array() || classes.size() != kMetricClasses) {
        throw FormatError("report json: expected 4 class entries");
    }
    for (int c = 0; c < kMetricClasses; ++c) {
        const json& e = classes[static_cast<std::size_t>(c)];
        ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
        m.precision = e.at("precision").get<double>();
        m.recall = e.at("recall").get<double>();
        m.f1 = e.at("f1").get<double>();
    }
    return rep;
}

} // namespace

std::string comparison_text(const std::vector<ComparisonRow>& rows) {
    if (rows.empty()) {
        throw EmptyInput("comparison needs at least one report");
    }
    std::ostringstream out;
    out << "model         accuracy  f1:NoGas  f1:Perfume  f1:Smoke  f1:Mixture\n";
    for (const ComparisonRow& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-13s %-9s %-9s %-11s %-9s %s\n", r.name.c_str(),
                      fmt(r.rep.accuracy).c_str(), fmt(r.rep.per_class[0].f1).c_str(),
                      fmt(r.rep.per_class[1].f1).c_str(), fmt(r.rep.per_class[2].f1).c_str(),
                      fmt(r.rep.per_class[3].f1).c_str());
        out << buf;
    }
    return out.str();
}

std::string comparison_json(const std::vector<ComparisonRow>& rows) {
    if (rows.empty()) {
        throw EmptyInput("comparison needs at least one report");
    }
    json j = json::array();
    for (const ComparisonRow& r : rows) {
        json e = report_to_json(r.rep);
        e["model"] = r.name;
        j.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

std::vector<ComparisonRow> parse_comparison_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("comparison json: ") + e.what());
    }
    if (!j.is_array()) {
        throw FormatError("comparison json: expected an array of model reports");
    }
    std::vector<ComparisonRow> rows;
    for (const json& e : j) {
        rows.push_back(ComparisonRow{e.at("model").get<std::string>(), report_from_json(e)});
    }
    return rows;
}

std::string report_json(const std::string& name, const ConfusionMatrix& cm,
                        const ClassReport& rep) {
    json j = report_to_json(rep);
    j["model"] = name;
    j["samples"] = cm.total();
    json rows = json::array();
    for (int r = 0; r < kMetricClasses; ++r) {
        rows.push_back(cm.counts[static_cast<std::size_t>(r)]);
    }
    j["confusion"] = std::move(rows);
    return j.dump(2) + "\n";
}

} // namespace gasfusion
