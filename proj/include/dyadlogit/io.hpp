#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "attributes.hpp"
#include "config.hpp"
#include "core_model.hpp"
#include "errors.hpp"

namespace dyadlogit {

/// A parsed CSV file: header plus data rows, each with its 1-based line number.
struct CsvTable {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;

    std::string where(std::size_t row) const { return file + ":" + std::to_string(lines[row]); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false, was_quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            if (!field.empty()) throw ParseError(where + ": stray quote inside unquoted field");
            quoted = was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? field : trim(field));
            field.clear();
            was_quoted = false;
        } else {
            if (was_quoted && c != ' ' && c != '\t')
                throw ParseError(where + ": text after closing quote");
            field += c;
        }
    }
    if (quoted) throw ParseError(where + ": unterminated quoted field");
    out.push_back(was_quoted ? field : trim(field));
    return out;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

} // namespace detail

/// Reads a CSV file. Blank lines are skipped; every record must have as many
/// fields as the header.
inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    CsvTable t;
    t.file = path.string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const std::string where = t.file + ":" + std::to_string(lineno);
        auto fields = detail::split_csv_line(line, where);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(where + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.lines.push_back(lineno);
    }
    if (t.header.empty()) throw ParseError(t.file + ":1: missing header row");
    return t;
}

/// Attribute CSV: first column is the unit id, the rest are attributes.
inline AttributeTable load_attribute_table(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& id = t.rows[r][0];
        if (id.empty()) throw ParseError(t.where(r) + ": empty unit id");
        auto [it, fresh] = seen.emplace(id, r);
        if (!fresh)
            throw ParseError(t.where(r) + ": duplicate id '" + id + "' (first at line " +
                             std::to_string(t.lines[it->second]) + ")");
        for (std::size_t c = 1; c < t.rows[r].size(); ++c)
            if (t.rows[r][c].empty())
                throw ParseError(t.where(r) + ": missing value for '" + t.header[c] + "'");
        ids.push_back(id);
        rows.emplace_back(t.rows[r].begin() + 1, t.rows[r].end());
    }
    return AttributeTable::from_strings(std::move(ids),
                                        std::vector<std::string>(t.header.begin() + 1, t.header.end()),
                                        rows);
}

/// Edge CSV with header consumer_id,product_id. Unknown ids raise
/// ReferentialError; a repeated pair raises InputError citing both lines.
inline std::vector<Edge> load_edges(const std::filesystem::path& path, const AttributeTable& consumers,
                                    const AttributeTable& products) {
    const CsvTable t = read_csv(path);
    if (t.header.size() != 2 || t.header[0] != "consumer_id" || t.header[1] != "product_id")
        throw ParseError(t.file + ":1: edge list header must be 'consumer_id,product_id'");
    std::vector<Edge> edges;
    std::map<Edge, std::size_t> first_line;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto ci = consumers.index_of(t.rows[r][0]);
        if (!ci)
            throw ReferentialError(t.where(r) + ": unknown consumer id '" + t.rows[r][0] + "'");
        const auto pj = products.index_of(t.rows[r][1]);
        if (!pj) throw ReferentialError(t.where(r) + ": unknown product id '" + t.rows[r][1] + "'");
        const Edge e{*ci, *pj};
        auto [it, fresh] = first_line.emplace(e, t.lines[r]);
        if (!fresh)
            throw InputError("duplicate edge (" + t.rows[r][0] + ", " + t.rows[r][1] + ") at " +
                             t.file + " lines " + std::to_string(it->second) + " and " +
                             std::to_string(t.lines[r]));
        edges.push_back(e);
    }
    return edges;
}

inline DyadDesign load_design(const std::filesystem::path& edge_csv,
                              const std::filesystem::path& consumer_csv,
                              const std::filesystem::path& product_csv, const FeatureMap& features) {
    AttributeTable consumers = load_attribute_table(consumer_csv);
    AttributeTable products = load_attribute_table(product_csv);
    std::vector<Edge> edges = load_edges(edge_csv, consumers, products);
    return DyadDesign(std::move(consumers), std::move(products), features, std::move(edges));
}

inline DyadDesign load_design(const std::filesystem::path& edge_csv,
                              const std::filesystem::path& consumer_csv,
                              const std::filesystem::path& product_csv,
                              const std::filesystem::path& feature_config) {
    return load_design(edge_csv, consumer_csv, product_csv, load_feature_map(feature_config));
}

inline void write_attribute_csv(const std::filesystem::path& path, const AttributeTable& table) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << "id";
    for (const auto& c : table.columns()) out << ',' << detail::csv_escape(c.name);
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << detail::csv_escape(table.ids()[r]);
        for (const auto& c : table.columns())
            out << ',' << (c.numeric ? detail::fmt_double(c.values[r]) : detail::csv_escape(c.labels[r]));
        out << '\n';
    }
}

/// Writes edges.csv, consumers.csv and products.csv into `dir`.
inline void write_design_csv(const std::filesystem::path& dir, const DyadDesign& design) {
    std::filesystem::create_directories(dir);
    write_attribute_csv(dir / "consumers.csv", design.consumers());
    write_attribute_csv(dir / "products.csv", design.products());
    std::ofstream out(dir / "edges.csv");
    if (!out) throw InputError("cannot write '" + (dir / "edges.csv").string() + "'");
    out << "consumer_id,product_id\n";
    for (const Edge& e : design.edges())
        out << detail::csv_escape(design.consumers().ids()[e.consumer]) << ','
            << detail::csv_escape(design.products().ids()[e.product]) << '\n';
}

} // namespace dyadlogit
