#pragma once

#include <string>
#include <vector>

#include "mddlm/backends/local.hpp"
#include "mddlm/baselines/baselines.hpp"
#include "mddlm/cohort/splits.hpp"
#include "mddlm/cohort/synth.hpp"
#include "mddlm/lm/checkpoint.hpp"
#include "mddlm/lm/train.hpp"
#include "mddlm/metrics/metrics.hpp"

namespace mddlm::exp {

struct ExperimentConfig {
    std::string kind = "main";  // main | templates | finetune | missing
    // Cohort source: a synthetic preset, or an ingested csv path.
    std::string preset = "strong-signal";
    std::string cohort_path;
    std::string schema_name = "uk16";
    size_t n = 5000;
    uint64_t cohort_seed = 11;

    prompt::TemplateKind template_kind = prompt::TemplateKind::Text;
    lm::ModelConfig model{2, 4, 64, 128, 384, 0};  // vocab_size resolved per run
    lm::LoraConfig lora{8, 16.0, {"wq", "wv", "wout"}};
    // Desk-scale schedule: the rank-8 adapters on a random-init base need a
    // hotter peak and more passes than the full-scale recipe.
    lm::TrainConfig train{3e-3, 0.1, 0.1, 16, 10, 0, 1.0};
    bool balance_corpus = true;

    std::vector<uint64_t> seeds{1, 2, 3};
    std::string out_dir;
    int bootstrap_resamples = 1000;
    double ci_level = 0.95;
    double threshold = 0.5;

    // exp_missing specifics.
    std::vector<double> retain_ratios{0.2, 0.4, 0.6, 0.8, 1.0};
    bool mask_at_train = false;

    double logreg_l2 = 1e-4;
    baselines::MlpConfig mlp;

    void validate() const;
};

std::string config_to_json_string(const ExperimentConfig& config);
ExperimentConfig config_from_json_string(const std::string& text);

struct ReportRow {
    std::string name;
    metrics::MetricReport metrics;
    size_t param_bytes = 0;
    double runtime_seconds = 0;  // excluded from the deterministic body
    metrics::RocCurve roc;
};

struct ExperimentReport {
    std::string kind;
    std::vector<ReportRow> rows;
    // Everything needed to re-run this report bit-exactly, plus content
    // hashes of the artifacts the run produced.
    struct Manifest {
        std::string config_json;
        uint64_t cohort_hash = 0;
        uint64_t split_hash = 0;
        double oracle_auc = 0;  // Monte Carlo Bayes AUC of the synthetic cohort
        std::map<std::string, std::string> artifact_hashes;  // name -> hex hash
    } manifest;

    /// Aligned metric table; deterministic (no runtimes).
    std::string body_text() const;
    /// rows + manifest as JSON; deterministic.
    std::string body_json() const;
    std::string timing_json() const;
};

ExperimentReport exp_main(const ExperimentConfig& config);
ExperimentReport exp_templates(const ExperimentConfig& config);
ExperimentReport exp_finetune(const ExperimentConfig& config);
ExperimentReport exp_missing(const ExperimentConfig& config);

ExperimentReport run_experiment(const ExperimentConfig& config);

/// Writes report.txt, report.json, manifest.json, timing.json and per-row
/// ROC point files under out_dir.
void write_report(const ExperimentReport& report, const std::string& out_dir);

ExperimentConfig config_from_manifest_file(const std::string& manifest_path);

/// Renders the report.json machine form back to the aligned table.
std::string render_report_json(const std::string& report_json);

// Pipeline pieces shared by the experiment kinds (exposed for tests/CLI).

struct TrainedLm {
    lm::Tokenizer tokenizer;
    lm::ModelParams<float> base;
    lm::LoraAdapter<float> adapter;
    lm::TrainHistory history;
    double train_seconds = 0;
    size_t base_bytes = 0;  // dense or quantized storage footprint
    uint64_t corpus_hash = 0;
    uint64_t base_hash = 0;     // digest of the base weights
    uint64_t adapter_hash = 0;  // digest of the trained adapter
};

uint64_t params_digest(const lm::ModelParams<float>& params);
uint64_t adapter_digest(const lm::LoraAdapter<float>& adapter);

/// Builds the train corpus, vocab, base (optionally stored 4-bit) and runs
/// adapter training. mask_train_ratio < 1 masks the train records first.
TrainedLm train_lm(const cohort::Cohort& cohort, const cohort::SplitPlan& split,
                   const ExperimentConfig& config, prompt::TemplateKind template_kind,
                   uint64_t seed, bool quantize_base_weights = false,
                   double mask_train_ratio = 1.0);

/// Likelihood-classifies the given records (optionally masked at evaluation
/// time) and returns the scored set.
metrics::ScoredSet score_lm(const TrainedLm& model, bool use_adapter,
                            const cohort::Cohort& cohort, const std::vector<std::string>& ids,
                            prompt::TemplateKind template_kind, double mask_ratio = 1.0,
                            uint64_t mask_seed = 0);

uint64_t cohort_hash(const cohort::Cohort& cohort);

}  // namespace mddlm::exp
