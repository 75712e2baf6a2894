#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace dyadlogit {

/// One attribute table (consumers W or products X). Rows are units, the first
/// CSV column becomes `ids()`. A column is numeric when every cell parses as a
/// finite number, otherwise it is categorical and keeps its string labels.
class AttributeTable {
public:
    struct Column {
        std::string name;
        bool numeric = true;
        std::vector<double> values;       // numeric columns
        std::vector<std::string> labels;  // categorical columns
    };

    AttributeTable() = default;

    AttributeTable(std::vector<std::string> ids, std::vector<Column> columns)
        : ids_(std::move(ids)), columns_(std::move(columns)) {
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (!index_.emplace(ids_[i], i).second)
                throw InputError("duplicate unit id '" + ids_[i] + "'");
        }
        for (const auto& c : columns_) {
            std::size_t len = c.numeric ? c.values.size() : c.labels.size();
            if (len != ids_.size())
                throw InputError("column '" + c.name + "' has " + std::to_string(len) +
                                 " rows, expected " + std::to_string(ids_.size()));
            if (c.numeric) {
                for (double v : c.values)
                    if (!std::isfinite(v))
                        throw InputError("column '" + c.name + "' holds a non-finite value");
            }
        }
    }

    /// Builds a table from raw strings, inferring the type of each column.
    static AttributeTable from_strings(std::vector<std::string> ids,
                                       const std::vector<std::string>& column_names,
                                       const std::vector<std::vector<std::string>>& rows) {
        std::vector<Column> cols(column_names.size());
        for (std::size_t k = 0; k < column_names.size(); ++k) {
            Column& col = cols[k];
            col.name = column_names[k];
            std::vector<double> parsed;
            parsed.reserve(rows.size());
            for (const auto& row : rows) {
                auto v = parse_number(row.at(k));
                if (!v) {
                    col.numeric = false;
                    break;
                }
                parsed.push_back(*v);
            }
            if (col.numeric) {
                col.values = std::move(parsed);
            } else {
                col.labels.reserve(rows.size());
                for (const auto& row : rows) col.labels.push_back(row.at(k));
            }
        }
        return AttributeTable(std::move(ids), std::move(cols));
    }

    static std::optional<double> parse_number(std::string_view s) {
        std::string tmp(s);
        if (tmp.empty()) return std::nullopt;
        char* end = nullptr;
        double v = std::strtod(tmp.c_str(), &end);
        if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    }

    std::size_t rows() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<Column>& columns() const { return columns_; }

    const Column* find(std::string_view name) const {
        for (const auto& c : columns_)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::vector<std::string> ids_;
    std::vector<Column> columns_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Attribute values of a hypothetical unit, keyed by column name.
using AttributeRow = std::map<std::string, std::string>;

enum class Transform { product, abs_diff, equality_indicator, consumer_only, product_only };

inline std::string to_string(Transform t) {
    switch (t) {
    case Transform::product: return "product";
    case Transform::abs_diff: return "abs_diff";
    case Transform::equality_indicator: return "equality_indicator";
    case Transform::consumer_only: return "consumer_only";
    case Transform::product_only: return "product_only";
    }
    return "?";
}

inline Transform parse_transform(const std::string& s) {
    if (s == "product") return Transform::product;
    if (s == "abs_diff") return Transform::abs_diff;
    if (s == "equality_indicator") return Transform::equality_indicator;
    if (s == "consumer_only") return Transform::consumer_only;
    if (s == "product_only") return Transform::product_only;
    throw ConfigError("unknown feature transform '" + s + "'");
}

inline bool uses_consumer(Transform t) { return t != Transform::product_only; }
inline bool uses_product(Transform t) { return t != Transform::consumer_only; }

struct FeatureSpec {
    std::string name;
    std::string consumer_column;
    std::string product_column;
    Transform transform = Transform::product;
};

/// Ordered list of feature specs; Z_ij has one entry per spec.
struct FeatureMap {
    std::vector<FeatureSpec> specs;

    std::size_t size() const { return specs.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& s : specs) out.push_back(s.name);
        return out;
    }
};

/// Feature map resolved against a pair of tables. Every column reference is
/// turned into a per-unit double (numeric value, or a category code shared by
/// both sides for equality indicators), so that z(W_i, X_j) is plain arithmetic.
class FeatureEncoder {
public:
    FeatureEncoder() = default;

    FeatureEncoder(const AttributeTable& consumers, const AttributeTable& products,
                   const FeatureMap& fmap)
        : transforms_(fmap.size()), numeric_(fmap.size(), true), codebooks_(fmap.size()),
          consumer_values_(fmap.size()), product_values_(fmap.size()),
          product_columns_(fmap.size()) {
        for (std::size_t k = 0; k < fmap.size(); ++k) {
            const FeatureSpec& spec = fmap.specs[k];
            transforms_[k] = spec.transform;
            product_columns_[k] = spec.product_column;
            const AttributeTable::Column* cc = nullptr;
            const AttributeTable::Column* pc = nullptr;
            if (uses_consumer(spec.transform)) {
                cc = consumers.find(spec.consumer_column);
                if (!cc)
                    throw ConfigError("feature '" + spec.name + "': consumer column '" +
                                      spec.consumer_column + "' not found");
            }
            if (uses_product(spec.transform)) {
                pc = products.find(spec.product_column);
                if (!pc)
                    throw ConfigError("feature '" + spec.name + "': product column '" +
                                      spec.product_column + "' not found");
            }

            if (spec.transform == Transform::equality_indicator) {
                if (cc->numeric != pc->numeric)
                    throw InputError("feature '" + spec.name +
                                     "': equality_indicator mixes numeric and categorical columns");
                numeric_[k] = cc->numeric;
            } else {
                for (const auto* col : {cc, pc}) {
                    if (col && !col->numeric)
                        throw InputError("feature '" + spec.name + "': transform " +
                                         to_string(spec.transform) +
                                         " needs a numeric column, '" + col->name +
                                         "' is categorical");
                }
            }

            consumer_values_[k] = encode(k, cc, consumers.rows());
            product_values_[k] = encode(k, pc, products.rows());
        }
    }

    std::size_t dim() const { return transforms_.size(); }
    Transform transform(std::size_t k) const { return transforms_[k]; }

    double consumer_value(std::size_t k, std::size_t i) const { return consumer_values_[k][i]; }
    double product_value(std::size_t k, std::size_t j) const { return product_values_[k][j]; }

    /// Encodes one feature's product-side value for an attribute row that is
    /// not part of the product table. Unseen category labels get a fresh code.
    double encode_product_row(std::size_t k, const AttributeRow& row) const {
        if (!uses_product(transforms_[k])) return 0.0;
        auto it = row.find(product_columns_[k]);
        if (it == row.end())
            throw InputError("product profile lacks column '" + product_columns_[k] + "'");
        if (numeric_[k]) {
            auto v = AttributeTable::parse_number(it->second);
            if (!v)
                throw InputError("product profile column '" + product_columns_[k] +
                                 "' must be numeric, got '" + it->second + "'");
            return *v;
        }
        auto c = codebooks_[k].find(it->second);
        return c == codebooks_[k].end() ? -1.0 : c->second;
    }

    static double apply(Transform t, double w, double x) {
        switch (t) {
        case Transform::product: return w * x;
        case Transform::abs_diff: return std::abs(w - x);
        case Transform::equality_indicator: return w == x ? 1.0 : 0.0;
        case Transform::consumer_only: return w;
        case Transform::product_only: return x;
        }
        return 0.0;
    }

    /// Writes z(W_i, X_j) into `out` (length dim()).
    void features(std::size_t i, std::size_t j, double* out) const {
        for (std::size_t k = 0; k < dim(); ++k)
            out[k] = apply(transforms_[k], consumer_values_[k][i], product_values_[k][j]);
    }

private:
    std::vector<double> encode(std::size_t k, const AttributeTable::Column* col, std::size_t rows) {
        std::vector<double> out(rows, 0.0);
        if (!col) return out;
        if (col->numeric) return col->values;
        auto& book = codebooks_[k];
        for (std::size_t r = 0; r < rows; ++r) {
            auto [it, _] = book.emplace(col->labels[r], static_cast<double>(book.size()));
            out[r] = it->second;
        }
        return out;
    }

    std::vector<Transform> transforms_;
    std::vector<bool> numeric_;
    std::vector<std::map<std::string, double>> codebooks_;
    std::vector<std::vector<double>> consumer_values_;
    std::vector<std::vector<double>> product_values_;
    std::vector<std::string> product_columns_;
};

/// Z_ij = z(W_i, X_j) for one dyad. Resolves the feature map on every call;
/// DyadDesign caches the resolved encoder for bulk work.
inline Eigen::VectorXd build_features(const AttributeTable& consumer_attrs,
                                      const AttributeTable& product_attrs,
                                      const FeatureMap& feature_map, std::size_t i,
                                      std::size_t j) {
    if (i >= consumer_attrs.rows() || j >= product_attrs.rows())
        throw InputError("dyad index out of range");
    FeatureEncoder enc(consumer_attrs, product_attrs, feature_map);
    Eigen::VectorXd z(enc.dim());
    enc.features(i, j, z.data());
    return z;
}

} // namespace dyadlogit
