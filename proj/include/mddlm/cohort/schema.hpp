#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mddlm/common.hpp"

namespace mddlm::cohort {

enum class FeatureKind { Numeric, Categorical, Ordinal };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

/// One allowed category of a categorical/ordinal feature, with the surface
/// strings used by the prompt templates.
struct CategorySpec {
    std::string code;           // canonical stored value
    std::string list_text;      // List Template value; default: code
    std::string text_fragment;  // Text Template fragment; default: "<name> is <code>"

    const std::string& list() const { return list_text.empty() ? code : list_text; }
};

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::string unit;
    std::vector<CategorySpec> categories;  // non-empty iff kind != Numeric
    std::string phrase;       // Text Template fragment with a {v} placeholder (numeric)
    std::string list_label;   // empty: feature omitted from the List Template
    std::string list_suffix;  // appended after the numeric value in the List Template
    std::string text_sep;     // separator preceding this fragment; empty means ", "

    bool is_numeric() const { return kind == FeatureKind::Numeric; }
    const CategorySpec* find_category(const std::string& code) const;
};

struct Schema {
    std::string name;
    std::vector<FeatureSpec> features;
    // List Template feature order; empty means schema order (skipping features
    // without a list_label).
    std::vector<std::string> list_order;
    std::string text_suffix;  // appended to a non-empty Text Template render
    std::vector<std::string> missing_codes{""};

    const FeatureSpec* find(const std::string& feature_name) const;
    size_t index_of(const std::string& feature_name) const;
    bool is_missing_code(const std::string& cell) const;
    void validate() const;
};

enum class Label { HC = 0, MDD = 1, Unlabeled = 2 };

struct Value {
    enum class Kind { Missing, Numeric, Category };
    Kind kind = Kind::Missing;
    double number = 0.0;
    std::string text;  // numeric: the ingested/authored literal; category: the code

    static Value missing() { return {}; }
    static Value numeric(double v, std::string literal = "");
    static Value category(std::string code);
    bool is_missing() const { return kind == Kind::Missing; }
    /// Literal if present, else shortest round-trip decimal.
    std::string numeric_literal() const;
};

struct Record {
    std::string patient_id;
    std::map<std::string, Value> values;
    Label label = Label::Unlabeled;

    const Value& get(const std::string& feature_name) const;  // absent -> Missing
    void set(const std::string& feature_name, Value v) { values[feature_name] = std::move(v); }
    void validate(const Schema& schema) const;
};

struct Provenance {
    enum class Kind { Ingested, Synthetic } kind = Provenance::Kind::Ingested;
    uint64_t seed = 0;
    std::string generator;  // preset name or config digest
};

struct Cohort {
    Schema schema;
    std::vector<Record> records;
    Provenance provenance;
    // Bayes oracle scores, parallel to records; only set for synthetic cohorts.
    std::vector<double> oracle_scores;

    void validate() const;
    size_t count_label(Label l) const;
};

// Built-in schemas.
namespace builtin {
/// 16-feature schema used by the synthetic cohorts and experiments.
Schema uk16();
/// Schema behind the worked prompt example record.
Schema worked_example();
/// Schema reproducing the figure3 example panels verbatim, including their
/// typographical quirks ("Dring", "sometime", the missing space after the
/// age fragment).
Schema figure3();
/// figure3 with the typos fixed.
Schema figure3_corrected();

Schema by_name(const std::string& name);
std::vector<std::string> names();
}  // namespace builtin

// Fixture records for the built-in example schemas.
namespace fixtures {
/// The worked-example record (sex and long-standing illness included),
/// labeled MDD. Valid against builtin::worked_example().
Record worked_example_record();
/// The figure3 record (list-panel features plus bmi and illness from the
/// text panel). Valid against builtin::figure3().
Record figure3_record();
}  // namespace fixtures

}  // namespace mddlm::cohort
