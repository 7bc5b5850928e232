#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrattrib/attribution.hpp"
#include "mrattrib/core.hpp"
#include "mrattrib/learners.hpp"

namespace mrattrib {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (std::string& s : out) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    return out;
}

// Locale-independent double parsing ('.' decimal separator only).
inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw SchemaError("cannot parse numeric value '" + s + "' at " + where);
    return v;
}

}  // namespace detail

// Dataset CSV: header row, a required 0/1 column named T, the explanatory
// columns in causal order, and the outcome in the final column named Y.
inline TwoSampleDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty dataset file: " + path);
    std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() < 3)
        throw SchemaError("dataset needs at least columns T, one explanatory variable, and Y");
    if (header.back() != "Y") throw SchemaError("final dataset column must be named Y");
    long t_col = -1;
    for (std::size_t j = 0; j + 1 < header.size(); ++j)
        if (header[j] == "T") t_col = static_cast<long>(j);
    if (t_col < 0) throw SchemaError("dataset is missing the required T column");

    std::vector<std::string> names;
    std::vector<long> x_cols;
    for (std::size_t j = 0; j + 1 < header.size(); ++j) {
        if (static_cast<long>(j) == t_col) continue;
        names.push_back(header[j]);
        x_cols.push_back(static_cast<long>(j));
    }

    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<int> ts;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split_csv_line(line);
        if (f.size() != header.size())
            throw SchemaError("row " + std::to_string(line_no) + " has " +
                              std::to_string(f.size()) + " fields, expected " +
                              std::to_string(header.size()));
        const std::string where = "row " + std::to_string(line_no);
        double tv = detail::parse_double(f[static_cast<std::size_t>(t_col)], where + " column T");
        if (tv != 0.0 && tv != 1.0)
            throw SchemaError("T must be 0 or 1 at " + where);
        ts.push_back(static_cast<int>(tv));
        std::vector<double> row;
        row.reserve(x_cols.size());
        for (std::size_t j = 0; j < x_cols.size(); ++j)
            row.push_back(detail::parse_double(f[static_cast<std::size_t>(x_cols[j])],
                                               where + " column " + names[j]));
        xs.push_back(std::move(row));
        ys.push_back(detail::parse_double(f.back(), where + " column Y"));
    }
    if (xs.empty()) throw SchemaError("dataset has no data rows: " + path);
    Eigen::MatrixXd X(static_cast<long>(xs.size()), static_cast<long>(x_cols.size()));
    Eigen::VectorXd Y(static_cast<long>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < x_cols.size(); ++j)
            X(static_cast<long>(i), static_cast<long>(j)) = xs[i][j];
        Y[static_cast<long>(i)] = ys[i];
    }
    return TwoSampleDataset::make(std::move(names), std::move(X), std::move(Y), std::move(ts));
}

inline void write_dataset_csv(const TwoSampleDataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write dataset file: " + path);
    out << "T";
    for (const auto& n : d.names) out << "," << n;
    out << ",Y\n";
    char buf[64];
    for (long i = 0; i < d.n(); ++i) {
        out << d.t[static_cast<std::size_t>(i)];
        for (int j = 0; j < d.K(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", d.x(i, j));
            out << "," << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", d.y[i]);
        out << "," << buf << "\n";
    }
}

// External predictions: CSV of (row_id, prediction); the i-th data row must
// carry row_id i, predictions are matched by position.
inline std::shared_ptr<const PrecomputedTable> read_precomputed_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open precomputed-learner file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty precomputed-learner file: " + path);
    std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() != 2 || header[0] != "row_id" || header[1] != "prediction")
        throw SchemaError("precomputed-learner file must have header 'row_id,prediction'");
    auto table = std::make_shared<PrecomputedTable>();
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split_csv_line(line);
        if (f.size() != 2)
            throw SchemaError("precomputed-learner row " + std::to_string(line_no) + " malformed");
        const std::string where = "precomputed row " + std::to_string(line_no);
        double rid = detail::parse_double(f[0], where);
        if (rid != static_cast<double>(table->values.size()))
            throw SchemaError("precomputed-learner row_id out of order at " + where);
        table->values.push_back(detail::parse_double(f[1], where));
    }
    if (table->values.empty()) throw SchemaError("precomputed-learner file has no rows");
    return table;
}

// ---------------------------------------------------------------------------
// Report serialization. JSON field order is fixed for diffability; the flat
// CSV variant uses 6 significant digits.
// ---------------------------------------------------------------------------

inline ordered_json attribution_report_json(const AttributionReport& r) {
    ordered_json j;
    j["theta"] = ordered_json::array();
    for (const ThetaRow& row : r.theta_rows) {
        ordered_json t;
        t["c"] = row.c.to_string();
        t["theta"] = row.theta;
        t["se"] = row.se;
        t["ci_lo"] = row.ci_lo;
        t["ci_hi"] = row.ci_hi;
        j["theta"].push_back(std::move(t));
    }
    auto entries = [](const std::vector<AttributionEntry>& es) {
        ordered_json arr = ordered_json::array();
        for (const AttributionEntry& e : es) {
            ordered_json o;
            o["mechanism"] = e.mechanism;
            o["value"] = e.value;
            o["se"] = e.se;
            o["p"] = e.p_value;
            arr.push_back(std::move(o));
        }
        return arr;
    };
    j["shap"] = entries(r.shap);
    j["path"] = entries(r.path);
    j["total_change"] = r.total_change;
    j["total_change_se"] = r.total_change_se;
    j["approximate_shapley"] = r.approximate_shapley;
    return j;
}

inline std::string attribution_report_csv(const AttributionReport& r) {
    auto fmt = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    std::string out = "kind,name,value,se,p,ci_lo,ci_hi\n";
    for (const ThetaRow& row : r.theta_rows)
        out += "theta," + row.c.to_string() + "," + fmt(row.theta) + "," + fmt(row.se) + ",," +
               fmt(row.ci_lo) + "," + fmt(row.ci_hi) + "\n";
    for (const AttributionEntry& e : r.shap)
        out += "shap," + e.mechanism + "," + fmt(e.value) + "," + fmt(e.se) + "," +
               fmt(e.p_value) + ",,\n";
    for (const AttributionEntry& e : r.path)
        out += "path," + e.mechanism + "," + fmt(e.value) + "," + fmt(e.se) + "," +
               fmt(e.p_value) + ",,\n";
    return out;
}

inline ordered_json diagnostics_json(const EstimateDiagnostics& d,
                                     const std::vector<std::pair<long, long>>& fold_sizes) {
    ordered_json j;
    j["clipped_weight_fraction"] = d.clipped_fraction();
    j["weight_evaluations"] = d.weight_evaluations;
    j["fold_sizes"] = ordered_json::array();
    for (auto [tr, ev] : fold_sizes) {
        ordered_json f;
        f["train"] = tr;
        f["eval"] = ev;
        j["fold_sizes"].push_back(std::move(f));
    }
    j["learners"] = ordered_json::array();
    for (const StageSummary& s : d.learners) {
        ordered_json l;
        l["role"] = s.role;
        l["prefix"] = s.prefix;
        l["sample"] = s.sample;
        l["penalty"] = s.penalty;
        if (!s.warning.empty()) l["warning"] = s.warning;
        j["learners"].push_back(std::move(l));
    }
    return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write output file: " + path);
    out << content;
}

}  // namespace mrattrib
