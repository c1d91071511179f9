#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tabattack/common.hpp"
#include "tabattack/dataset.hpp"

namespace tabattack {

namespace detail {

// Splits one RFC-4180 record. `pos` points just past the record on return.
// Handles quoted fields with doubled quotes and embedded newlines.
inline bool next_record(const std::string& text, std::size_t& pos,
                        std::vector<std::string>& fields) {
    fields.clear();
    if (pos >= text.size()) return false;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    while (pos < text.size()) {
        const char c = text[pos];
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                } else {
                    in_quotes = false;
                    ++pos;
                }
            } else {
                field.push_back(c);
                ++pos;
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
            any = true;
            ++pos;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            any = true;
            ++pos;
        } else if (c == '\n' || c == '\r') {
            ++pos;
            if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
            any = true;
            ++pos;
        }
    }
    if (any || !field.empty()) {
        fields.push_back(std::move(field));
        return true;
    }
    return false;
}

inline std::optional<double> parse_double(const std::string& s) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    if (begin == end) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace detail

/// Per-feature validity flags for load_csv. Empty => every feature is treated
/// as non-negative (the conservative default for count/magnitude metrics).
struct NonNegativePolicy {
    std::vector<bool> flags;  // empty = infer all true

    static NonNegativePolicy all_non_negative() { return {}; }
    static NonNegativePolicy explicit_flags(std::vector<bool> f) { return {std::move(f)}; }
};

/// Reads an RFC-4180 CSV with a header row into a Dataset. All cells must
/// parse as finite reals; the label column must be binary {0,1}. Rows are
/// reported 1-based over data records (the header is row 0).
inline Dataset load_csv(const std::string& path, const std::string& label_name,
                        const NonNegativePolicy& policy = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_csv: cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::size_t pos = 0;
    std::vector<std::string> header;
    if (!detail::next_record(text, pos, header) || header.empty())
        throw DataError("load_csv: '" + path + "' has no header row");

    int label_col = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == label_name) label_col = static_cast<int>(j);
    if (label_col < 0)
        throw DataError("load_csv: label column '" + label_name + "' not found in '" + path + "'");

    FeatureSchema schema;
    schema.label_name = label_name;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (static_cast<int>(j) != label_col) schema.names.push_back(header[j]);
    if (!policy.flags.empty()) {
        if (policy.flags.size() != schema.names.size())
            throw ConfigError("load_csv: non_negative flags count does not match feature count");
        schema.non_negative = policy.flags;
    } else {
        schema.non_negative.assign(schema.names.size(), true);
    }
    schema.validate();

    std::vector<double> values;
    std::vector<int> labels;
    std::vector<std::string> fields;
    std::size_t row_no = 0;
    while (detail::next_record(text, pos, fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
        ++row_no;
        if (fields.size() != header.size())
            throw DataError("load_csv: row " + std::to_string(row_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const auto v = detail::parse_double(fields[j]);
            if (!v || !std::isfinite(*v))
                throw DataError("load_csv: unparsable cell at row " + std::to_string(row_no) +
                                ", column '" + header[j] + "'");
            if (static_cast<int>(j) == label_col) {
                if (*v != 0.0 && *v != 1.0)
                    throw DataError("load_csv: non-binary label '" + fields[j] + "' at row " +
                                    std::to_string(row_no));
                labels.push_back(static_cast<int>(*v));
            } else {
                values.push_back(*v);
            }
        }
    }
    return Dataset(std::move(schema), std::move(values), std::move(labels));
}

/// Writes a Dataset back to CSV: features in schema order, label last.
/// Floats use 17 significant digits so a reload round-trips exactly.
inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_csv: cannot open '" + path + "' for writing");
    const auto& sc = ds.schema();
    for (std::size_t j = 0; j < sc.names.size(); ++j)
        out << detail::quote_if_needed(sc.names[j]) << ',';
    out << detail::quote_if_needed(sc.label_name) << '\n';
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        const auto r = ds.row(i);
        for (double v : r) out << format_double(v) << ',';
        out << ds.label(i) << '\n';
    }
    if (!out) throw DataError("save_csv: write failed for '" + path + "'");
}

}  // namespace tabattack
