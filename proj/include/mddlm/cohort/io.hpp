#pragma once

#include <string>
#include <vector>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::cohort {

// Minimal CSV support: comma-separated, double-quote escaping, no embedded
// newlines inside fields.
std::vector<std::string> split_csv_line(const std::string& line);
std::string join_csv_line(const std::vector<std::string>& fields);

struct LoadOptions {
    std::string label_column = "mdd";
    std::string id_column = "patient_id";
};

/// Reads a delimited table with a header row. Empty cells and declared
/// missing codes become Missing; the label column maps 1 -> MDD, 0 -> HC,
/// and an absent column leaves records Unlabeled.
Cohort load_cohort(const std::string& path, const Schema& schema, const LoadOptions& opts = {});
Cohort cohort_from_csv(const std::string& text, const Schema& schema, const LoadOptions& opts = {});

/// Re-emits the cohort in the ingest format. Non-missing values round-trip
/// exactly (numeric cells echo the ingested literal).
std::string cohort_to_csv(const Cohort& cohort, const LoadOptions& opts = {});
void save_cohort(const Cohort& cohort, const std::string& path, const LoadOptions& opts = {});

// Declarative schema config file: one `key = value` per line, `#` comments.
// Keys:
//   schema.name, schema.text_suffix, schema.list_order (., |-separated),
//   schema.missing_codes (|-separated)
//   feature.<name>.kind|unit|phrase|list_label|list_suffix|text_sep
//   feature.<name>.categories (|-separated codes)
//   feature.<name>.category.<code>.list|text
// Feature order is first-mention order.
Schema schema_from_config(const std::string& text);
std::string schema_to_config(const Schema& schema);
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace mddlm::cohort
