#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mddlm/common.hpp"

namespace mddlm::metrics {

/// Parallel (score, label, id) arrays. Scores are risk scores in [0,1],
/// labels are 0 (control) / 1 (case).
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> patient_ids;  // optional, may be empty

    size_t size() const { return scores.size(); }
    void push(double score, int label, std::string id = "") {
        scores.push_back(score);
        labels.push_back(label);
        patient_ids.push_back(std::move(id));
    }
    void validate() const;
    size_t positives() const;
};

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    int64_t total() const { return tp + fp + tn + fn; }
};

struct SummaryStats {
    double acc = 0, f1 = 0, spe = 0, sens = 0, ppv = 0, npv = 0;
    bool degenerate = false;  // some denominator was zero and reported as 0
};

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
};

struct BootstrapCi {
    double lo = 0, hi = 0;
    double level = 0.95;
    int redrawn = 0;  // resamples redrawn because the statistic was undefined
};

struct MetricReport {
    double acc = 0, f1 = 0, auc = 0, spe = 0, sens = 0, ppv = 0, npv = 0;
    BootstrapCi auc_ci;
    double threshold = 0.5;
    size_t n = 0;
    bool degenerate = false;
};

struct CrossvalSummary {
    std::vector<MetricReport> folds;
    MetricReport mean;
    // Sample standard deviation across folds; unset with a single fold.
    std::optional<MetricReport> sd;
};

/// score >= threshold predicts positive.
ConfusionCounts confusion(const ScoredSet& set, double threshold);

SummaryStats summarize(const ConfusionCounts& counts);

/// Grouped-threshold ROC sweep with trapezoidal area. Equal scores collapse
/// into single sweep steps, which makes the area identical to the
/// tie-credited Mann-Whitney statistic.
std::pair<RocCurve, double> roc_auc(const ScoredSet& set);

/// Independent O(n_pos * n_neg) pairwise-concordance oracle:
/// mean over (pos, neg) pairs of [s_p > s_n] + 0.5 [s_p == s_n].
double auc_oracle(const ScoredSet& set);

/// Percentile bootstrap over label-stratified resamples. Resample r draws
/// from an rng seeded by derive_seed(seed, r). Resamples on which the
/// statistic is undefined (throws) are redrawn with follow-up seeds, capped.
BootstrapCi bootstrap_ci(const ScoredSet& set,
                         const std::function<double(const ScoredSet&)>& statistic,
                         int n_resamples = 1000, double level = 0.95, uint64_t seed = 0);

CrossvalSummary crossval_aggregate(const std::vector<MetricReport>& per_fold);

/// Full report at one threshold: confusion summary + AUC + bootstrap CI.
MetricReport evaluate(const ScoredSet& set, double threshold = 0.5,
                      int bootstrap_resamples = 1000, double ci_level = 0.95,
                      uint64_t seed = 0);

/// Threshold maximizing Youden's J (sens + spe - 1) on the given set; ties
/// broken toward the lower threshold.
double youden_threshold(const ScoredSet& set);

// Serialization. Text form uses fixed 4-decimal formatting.
std::string to_text(const MetricReport& report, const std::string& title = "");
std::string to_json_string(const MetricReport& report);
MetricReport report_from_json_string(const std::string& text);
std::string roc_to_csv(const RocCurve& curve);

/// Linear-interpolation quantile of a sorted copy of v, p in [0,1].
double quantile(std::vector<double> v, double p);

}  // namespace mddlm::metrics
