#pragma once

#include <map>
#include <string>
#include <vector>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::cohort {

struct NumericMarginal {
    double mean = 0, sd = 1;
    double min = -1e30, max = 1e30;
    int decimals = 0;  // emitted literal precision; 0 -> integer
};

struct FeatureGen {
    // Numeric features draw from a clamped normal; categorical from `probs`
    // over the schema's category list.
    NumericMarginal numeric;
    std::vector<double> probs;
    double missing_rate = 0.0;
    // Log-odds contribution: numeric applies beta to the standardized value
    // ((v - mean) / sd); categorical indexes beta_category by category.
    double beta = 0.0;
    std::vector<double> beta_category;
};

struct GeneratorConfig {
    std::string name;  // preset name or "custom"
    Schema schema;
    std::map<std::string, FeatureGen> features;  // keyed by schema feature name
    size_t n = 1000;
    // Either a fixed intercept, or a target prevalence the intercept is
    // calibrated against (Monte Carlo + bisection, deterministic).
    bool has_intercept = false;
    double intercept = 0.0;
    double target_prevalence = 0.5;

    void validate() const;
};

/// Independent per-record draws; label ~ Bernoulli(sigmoid(beta.x + b)) with
/// the true risk retained as the cohort's oracle score. Byte-identical output
/// under equal (config, seed).
Cohort synth_cohort(const GeneratorConfig& config, uint64_t seed);

/// sigmoid(beta.x + b) recomputed from an emitted record (missing features
/// contribute zero). Matches the generator's stored oracle score exactly.
double oracle_score(const GeneratorConfig& config, const Record& record, double intercept);

/// The intercept actually used for a given config/seed (calibrated when
/// target_prevalence is set).
double resolve_intercept(const GeneratorConfig& config);

// Presets: "strong-signal" (oracle AUC >= 0.95, balanced), "paper-analog"
// (4.6% prevalence, moderate signal), "null" (no signal).
GeneratorConfig synth_preset(const std::string& name);
std::vector<std::string> synth_preset_names();

GeneratorConfig generator_from_json_string(const std::string& text);
std::string generator_to_json_string(const GeneratorConfig& config);

}  // namespace mddlm::cohort
