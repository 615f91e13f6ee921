#pragma once

#include <string>
#include <vector>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::cohort {

struct GroupQuartiles {
    double median = 0, q1 = 0, q3 = 0;
    size_t n = 0;  // non-missing values in the group
};

struct CategoryCount {
    std::string category;  // category code, or "Missing"
    size_t hc = 0;
    size_t mdd = 0;
};

struct BaselineRow {
    std::string feature;
    FeatureKind kind = FeatureKind::Numeric;
    GroupQuartiles hc, mdd;             // numeric rows
    std::vector<CategoryCount> counts;  // categorical rows; Missing last if present
    double p_value = 1.0;
    bool degenerate = false;
};

struct BaselineTable {
    std::vector<BaselineRow> rows;
    size_t n_hc = 0;
    size_t n_mdd = 0;
};

/// Baseline characteristics table: group medians with Q1-Q3 and a two-sided
/// rank-sum P for numeric features; counts/percentages (missing as its own
/// row) and a chi-square P over non-missing categories for the rest.
BaselineTable baseline_table(const Cohort& cohort);

std::string baseline_to_csv(const BaselineTable& table);

/// Two-sided Wilcoxon rank-sum P, normal approximation with continuity and
/// tie correction. degenerate set when the variance collapses.
double ranksum_p(const std::vector<double>& a, const std::vector<double>& b, bool& degenerate);

/// Pearson chi-square P over a groups x categories contingency table.
double chi2_p(const std::vector<std::vector<size_t>>& table, bool& degenerate);

// Regularized incomplete gamma functions (series / continued fraction).
double gamma_p(double a, double x);  // lower
double gamma_q(double a, double x);  // upper
/// Upper tail of chi-square with df degrees of freedom at statistic x.
double chi2_sf(double x, double df);

}  // namespace mddlm::cohort
