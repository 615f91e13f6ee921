#include "mddlm/cohort/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mddlm::cohort {

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Numeric: return "numeric";
        case FeatureKind::Categorical: return "categorical";
        case FeatureKind::Ordinal: return "ordinal";
    }
    return "numeric";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "numeric") return FeatureKind::Numeric;
    if (s == "categorical") return FeatureKind::Categorical;
    if (s == "ordinal") return FeatureKind::Ordinal;
    throw ConfigError("unknown feature kind: " + s);
}

const CategorySpec* FeatureSpec::find_category(const std::string& code) const {
    for (const auto& c : categories)
        if (c.code == code) return &c;
    return nullptr;
}

const FeatureSpec* Schema::find(const std::string& feature_name) const {
    for (const auto& f : features)
        if (f.name == feature_name) return &f;
    return nullptr;
}

size_t Schema::index_of(const std::string& feature_name) const {
    for (size_t i = 0; i < features.size(); ++i)
        if (features[i].name == feature_name) return i;
    throw ConfigError("schema " + name + " has no feature " + feature_name);
}

bool Schema::is_missing_code(const std::string& cell) const {
    return std::find(missing_codes.begin(), missing_codes.end(), cell) != missing_codes.end();
}

namespace {
size_t count_placeholder(const std::string& phrase) {
    size_t n = 0;
    for (size_t at = phrase.find("{v}"); at != std::string::npos; at = phrase.find("{v}", at + 3))
        ++n;
    return n;
}
}  // namespace

void Schema::validate() const {
    std::set<std::string> seen;
    for (const auto& f : features) {
        if (f.name.empty()) throw ConfigError("schema " + name + ": empty feature name");
        if (!seen.insert(f.name).second)
            throw ConfigError("schema " + name + ": duplicate feature " + f.name);
        if (f.is_numeric()) {
            if (!f.categories.empty())
                throw ConfigError("numeric feature " + f.name + " declares categories");
            if (!f.phrase.empty() && count_placeholder(f.phrase) != 1)
                throw ConfigError("feature " + f.name +
                                  ": phrase must contain exactly one {v} placeholder");
        } else {
            if (f.categories.empty())
                throw ConfigError("feature " + f.name + ": categorical without categories");
            std::set<std::string> codes;
            for (const auto& c : f.categories)
                if (!codes.insert(c.code).second)
                    throw ConfigError("feature " + f.name + ": duplicate category " + c.code);
        }
    }
    for (const auto& n : list_order)
        if (!find(n)) throw ConfigError("schema " + name + ": list_order names unknown feature " + n);
}

Value Value::numeric(double v, std::string literal) {
    if (!std::isfinite(v)) throw DataError("numeric value must be finite");
    Value out;
    out.kind = Kind::Numeric;
    out.number = v;
    out.text = std::move(literal);
    return out;
}

Value Value::category(std::string code) {
    Value out;
    out.kind = Kind::Category;
    out.text = std::move(code);
    return out;
}

std::string Value::numeric_literal() const {
    if (!text.empty()) return text;
    return format_shortest(number);
}

const Value& Record::get(const std::string& feature_name) const {
    static const Value kMissing{};
    auto it = values.find(feature_name);
    return it == values.end() ? kMissing : it->second;
}

void Record::validate(const Schema& schema) const {
    for (const auto& [feature_name, value] : values) {
        const FeatureSpec* f = schema.find(feature_name);
        if (!f)
            throw DataError("record " + patient_id + ": feature " + feature_name +
                            " not in schema " + schema.name);
        if (value.is_missing()) continue;
        if (f->is_numeric()) {
            if (value.kind != Value::Kind::Numeric)
                throw DataError("record " + patient_id + ": feature " + feature_name +
                                " expects a numeric value");
            if (!std::isfinite(value.number))
                throw DataError("record " + patient_id + ": non-finite " + feature_name);
        } else {
            if (value.kind != Value::Kind::Category || !f->find_category(value.text))
                throw DataError("record " + patient_id + ": value '" + value.text +
                                "' not in categories of " + feature_name);
        }
    }
}

void Cohort::validate() const {
    schema.validate();
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.patient_id).second)
            throw DataError("duplicate patient_id " + r.patient_id);
        r.validate(schema);
    }
    if (!oracle_scores.empty() && oracle_scores.size() != records.size())
        throw DataError("oracle_scores length mismatch");
}

size_t Cohort::count_label(Label l) const {
    size_t n = 0;
    for (const auto& r : records)
        if (r.label == l) ++n;
    return n;
}

}  // namespace mddlm::cohort
