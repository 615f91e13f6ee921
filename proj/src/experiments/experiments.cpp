#include "mddlm/experiments/experiments.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mddlm/cohort/io.hpp"
#include "mddlm/promptgen/promptgen.hpp"

namespace mddlm::exp {

using cohort::Cohort;
using cohort::SplitPlan;
using nlohmann::json;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string hex64(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("experiment config: seeds must be non-empty");
    if (kind != "main" && kind != "templates" && kind != "finetune" && kind != "missing")
        throw ConfigError("experiment config: unknown kind " + kind);
    if (n < 20 && cohort_path.empty()) throw ConfigError("experiment config: n too small");
    for (double r : retain_ratios)
        if (r <= 0.0 || r > 1.0) throw ConfigError("experiment config: retain ratio outside (0,1]");
}

std::string config_to_json_string(const ExperimentConfig& c) {
    json j;
    j["kind"] = c.kind;
    j["preset"] = c.preset;
    j["cohort_path"] = c.cohort_path;
    j["schema_name"] = c.schema_name;
    j["n"] = c.n;
    j["cohort_seed"] = c.cohort_seed;
    j["template"] = prompt::to_string(c.template_kind);
    j["model"] = {{"layers", c.model.layers},         {"heads", c.model.heads},
                  {"embed_dim", c.model.embed_dim},   {"mlp_dim", c.model.mlp_dim},
                  {"context_len", c.model.context_len}};
    j["lora"] = {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}, {"targets", c.lora.targets}};
    j["train"] = {{"peak_lr", c.train.peak_lr},
                  {"warmup_fraction", c.train.warmup_fraction},
                  {"weight_decay", c.train.weight_decay},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"grad_clip", c.train.grad_clip}};
    j["balance_corpus"] = c.balance_corpus;
    j["seeds"] = c.seeds;
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    j["ci_level"] = c.ci_level;
    j["threshold"] = c.threshold;
    j["retain_ratios"] = c.retain_ratios;
    j["mask_at_train"] = c.mask_at_train;
    j["logreg_l2"] = c.logreg_l2;
    j["mlp"] = {{"hidden", c.mlp.hidden},
                {"lr", c.mlp.lr},
                {"weight_decay", c.mlp.weight_decay},
                {"epochs", c.mlp.epochs},
                {"batch_size", c.mlp.batch_size}};
    return j.dump(2);
}

ExperimentConfig config_from_json_string(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig c;
    c.kind = j.value("kind", "main");
    c.preset = j.value("preset", "strong-signal");
    c.cohort_path = j.value("cohort_path", "");
    c.schema_name = j.value("schema_name", "uk16");
    c.n = j.value("n", size_t{5000});
    c.cohort_seed = j.value("cohort_seed", uint64_t{11});
    c.template_kind = prompt::template_from_string(j.value("template", "text"));
    if (j.contains("model")) {
        const json& m = j["model"];
        c.model.layers = m.value("layers", c.model.layers);
        c.model.heads = m.value("heads", c.model.heads);
        c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
        c.model.mlp_dim = m.value("mlp_dim", c.model.mlp_dim);
        c.model.context_len = m.value("context_len", c.model.context_len);
    }
    if (j.contains("lora")) {
        const json& l = j["lora"];
        c.lora.rank = l.value("rank", c.lora.rank);
        c.lora.alpha = l.value("alpha", c.lora.alpha);
        c.lora.targets = l.value("targets", c.lora.targets);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.peak_lr = t.value("peak_lr", c.train.peak_lr);
        c.train.warmup_fraction = t.value("warmup_fraction", c.train.warmup_fraction);
        c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.grad_clip = t.value("grad_clip", c.train.grad_clip);
    }
    c.balance_corpus = j.value("balance_corpus", true);
    c.seeds = j.value("seeds", std::vector<uint64_t>{1, 2, 3});
    c.bootstrap_resamples = j.value("bootstrap_resamples", 1000);
    c.ci_level = j.value("ci_level", 0.95);
    c.threshold = j.value("threshold", 0.5);
    c.retain_ratios = j.value("retain_ratios", std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0});
    c.mask_at_train = j.value("mask_at_train", false);
    c.logreg_l2 = j.value("logreg_l2", 1e-4);
    if (j.contains("mlp")) {
        const json& m = j["mlp"];
        c.mlp.hidden = m.value("hidden", c.mlp.hidden);
        c.mlp.lr = m.value("lr", c.mlp.lr);
        c.mlp.weight_decay = m.value("weight_decay", c.mlp.weight_decay);
        c.mlp.epochs = m.value("epochs", c.mlp.epochs);
        c.mlp.batch_size = m.value("batch_size", c.mlp.batch_size);
    }
    c.validate();
    return c;
}

uint64_t cohort_hash(const Cohort& cohort) { return fnv1a64(cohort::cohort_to_csv(cohort)); }

uint64_t params_digest(const lm::ModelParams<float>& params) {
    uint64_t h = kFnvOffset;
    lm::for_each_tensor(params, [&](const std::string&, Eigen::Ref<const lm::Mat<float>> m) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()),
                                     static_cast<size_t>(m.size()) * sizeof(float)),
                    h);
    });
    return h;
}

uint64_t adapter_digest(const lm::LoraAdapter<float>& adapter) {
    uint64_t h = kFnvOffset;
    for (const auto& d : adapter.deltas) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.a.data()),
                                     static_cast<size_t>(d.a.size()) * sizeof(float)),
                    h);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.b.data()),
                                     static_cast<size_t>(d.b.size()) * sizeof(float)),
                    h);
    }
    return h;
}

namespace {

Cohort make_cohort(const ExperimentConfig& config, double* oracle_auc) {
    if (!config.cohort_path.empty()) {
        Cohort c = cohort::load_cohort(config.cohort_path,
                                       cohort::builtin::by_name(config.schema_name));
        if (oracle_auc) *oracle_auc = 0.0;
        return c;
    }
    auto gen = cohort::synth_preset(config.preset);
    gen.n = config.n;
    Cohort c = cohort::synth_cohort(gen, config.cohort_seed);
    if (oracle_auc) {
        metrics::ScoredSet oracle;
        for (size_t i = 0; i < c.records.size(); ++i) {
            if (c.records[i].label == cohort::Label::Unlabeled) continue;
            oracle.push(c.oracle_scores[i], c.records[i].label == cohort::Label::MDD ? 1 : 0,
                        c.records[i].patient_id);
        }
        *oracle_auc = metrics::auc_oracle(oracle);
    }
    return c;
}

metrics::MetricReport evaluate_scores(const metrics::ScoredSet& set,
                                      const ExperimentConfig& config, uint64_t seed) {
    return metrics::evaluate(set, config.threshold, config.bootstrap_resamples, config.ci_level,
                             derive_seed(seed, "bootstrap"));
}

const cohort::Record& record_by_id(const Cohort& cohort, const std::string& id) {
    for (const auto& r : cohort.records)
        if (r.patient_id == id) return r;
    throw DataError("record not found: " + id);
}

}  // namespace

TrainedLm train_lm(const Cohort& cohort, const SplitPlan& split, const ExperimentConfig& config,
                   prompt::TemplateKind template_kind, uint64_t seed, bool quantize_base_weights,
                   double mask_train_ratio) {
    double t0 = now_seconds();

    const Cohort* train_view = &cohort;
    Cohort masked_cohort;
    if (mask_train_ratio < 1.0) {
        masked_cohort = prompt::apply_mask(cohort, mask_train_ratio, derive_seed(seed, "mask-train"));
        train_view = &masked_cohort;
    }

    auto corpus =
        prompt::build_corpus(*train_view, split.train_ids, template_kind, config.balance_corpus);
    std::string corpus_blob;
    std::vector<std::string> texts;
    for (const auto& sft : corpus) {
        corpus_blob += prompt::sft_to_json_line(sft);
        corpus_blob += '\n';
        texts.push_back(prompt::assemble_prompt(sft.instruction, sft.input) + " " + sft.output);
    }

    TrainedLm out;
    out.corpus_hash = fnv1a64(corpus_blob);
    out.tokenizer = lm::Tokenizer::build(texts);

    lm::ModelConfig mc = config.model;
    mc.vocab_size = static_cast<int>(out.tokenizer.vocab_size());
    out.base = lm::init_params<float>(mc, derive_seed(seed, "base-init"));
    out.base_bytes = out.base.byte_size();
    if (quantize_base_weights) {
        auto q = lm::quantize_base(out.base);
        out.base_bytes = q.byte_size();
        out.base = q.dequantize_all();  // 4-bit stored, dequantized for compute
    }

    lm::TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, "train");
    auto examples = lm::make_examples(out.tokenizer, corpus);
    auto [adapter, history] = lm::train_sft(out.base, examples, tc, config.lora);
    out.adapter = std::move(adapter);
    out.history = std::move(history);
    out.base_hash = params_digest(out.base);
    out.adapter_hash = adapter_digest(out.adapter);
    out.train_seconds = now_seconds() - t0;
    return out;
}

metrics::ScoredSet score_lm(const TrainedLm& model, bool use_adapter, const Cohort& cohort,
                            const std::vector<std::string>& ids,
                            prompt::TemplateKind template_kind, double mask_ratio,
                            uint64_t mask_seed) {
    backends::LocalBackend<float> backend(model.base, use_adapter ? &model.adapter : nullptr,
                                          model.tokenizer,
                                          use_adapter ? "local/ft" : "local/base");
    metrics::ScoredSet set;
    for (const auto& id : ids) {
        const cohort::Record& record = record_by_id(cohort, id);
        if (record.label == cohort::Label::Unlabeled) continue;
        cohort::Record eval_record =
            mask_ratio < 1.0
                ? prompt::mask_features(record, cohort.schema, mask_ratio, mask_seed)
                : record;
        std::string input = prompt::render(eval_record, cohort.schema, template_kind);
        std::string p = prompt::assemble_prompt(prompt::kInstruction, input);
        auto score = backends::classify(backend, p);
        set.push(score.p_yes, record.label == cohort::Label::MDD ? 1 : 0, id);
    }
    return set;
}

namespace {

struct BaselineModels {
    baselines::Featurizer featurizer;
    baselines::LinearModel logreg;
    baselines::MlpModel mlp;
    double logreg_seconds = 0, mlp_seconds = 0;
};

BaselineModels train_baselines(const Cohort& cohort, const SplitPlan& split,
                               const ExperimentConfig& config, uint64_t seed) {
    BaselineModels out;
    out.featurizer = baselines::Featurizer::fit(cohort, split.train_ids);
    auto [x, y] = out.featurizer.apply_all(cohort, split.train_ids);
    double t0 = now_seconds();
    out.logreg = baselines::train_logreg(x, y, config.logreg_l2, derive_seed(seed, "logreg"));
    out.logreg_seconds = now_seconds() - t0;
    t0 = now_seconds();
    out.mlp = baselines::train_mlp(x, y, config.mlp, derive_seed(seed, "mlp"));
    out.mlp_seconds = now_seconds() - t0;
    return out;
}

metrics::ScoredSet score_baseline(const BaselineModels& models, bool use_mlp,
                                  const Cohort& cohort, const std::vector<std::string>& ids,
                                  double mask_ratio, uint64_t mask_seed) {
    metrics::ScoredSet set;
    for (const auto& id : ids) {
        const cohort::Record& record = record_by_id(cohort, id);
        if (record.label == cohort::Label::Unlabeled) continue;
        cohort::Record eval_record =
            mask_ratio < 1.0
                ? prompt::mask_features(record, cohort.schema, mask_ratio, mask_seed)
                : record;
        Eigen::VectorXd x = models.featurizer.apply(eval_record);
        double p = use_mlp ? baselines::predict_mlp(models.mlp, x)
                           : baselines::predict_logreg(models.logreg, x);
        set.push(p, record.label == cohort::Label::MDD ? 1 : 0, id);
    }
    return set;
}

size_t mlp_bytes(const baselines::MlpModel& m) {
    size_t n = 0;
    for (const auto& w : m.w) n += static_cast<size_t>(w.size()) * sizeof(double);
    for (const auto& b : m.b) n += static_cast<size_t>(b.size()) * sizeof(double);
    return n;
}

ExperimentReport start_report(const ExperimentConfig& config, const Cohort& cohort,
                              const SplitPlan& split, double oracle_auc) {
    ExperimentReport report;
    report.kind = config.kind;
    report.manifest.config_json = config_to_json_string(config);
    report.manifest.cohort_hash = cohort_hash(cohort);
    report.manifest.split_hash = fnv1a64(cohort::split_to_json_string(split));
    report.manifest.oracle_auc = oracle_auc;
    return report;
}

}  // namespace

ExperimentReport exp_main(const ExperimentConfig& config) {
    config.validate();
    double oracle_auc = 0;
    Cohort cohort = make_cohort(config, &oracle_auc);
    uint64_t seed = config.seeds.front();
    SplitPlan split = cohort::make_splits(cohort, derive_seed(seed, "split"));
    ExperimentReport report = start_report(config, cohort, split, oracle_auc);

    // Fine-tuned LM.
    TrainedLm lm_model = train_lm(cohort, split, config, config.template_kind, seed);
    report.manifest.artifact_hashes["corpus"] = hex64(lm_model.corpus_hash);
    report.manifest.artifact_hashes["base_checkpoint"] = hex64(lm_model.base_hash);
    report.manifest.artifact_hashes["adapter_checkpoint"] = hex64(lm_model.adapter_hash);
    {
        ReportRow row;
        row.name = "llm_finetuned";
        double t0 = now_seconds();
        auto set = score_lm(lm_model, true, cohort, split.test_ids, config.template_kind);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes = lm_model.base_bytes + lm_model.adapter.byte_size();
        row.runtime_seconds = lm_model.train_seconds + (now_seconds() - t0);
        report.rows.push_back(std::move(row));
    }
    // Untrained base (zero-shot analog).
    {
        ReportRow row;
        row.name = "llm_base";
        double t0 = now_seconds();
        auto set = score_lm(lm_model, false, cohort, split.test_ids, config.template_kind);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes = lm_model.base_bytes;
        row.runtime_seconds = now_seconds() - t0;
        report.rows.push_back(std::move(row));
    }
    // Tabular baselines on the same split.
    BaselineModels baselines_models = train_baselines(cohort, split, config, seed);
    {
        ReportRow row;
        row.name = "logreg";
        double t0 = now_seconds();
        auto set = score_baseline(baselines_models, false, cohort, split.test_ids, 1.0, 0);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes =
            (static_cast<size_t>(baselines_models.logreg.weights.size()) + 1) * sizeof(double);
        row.runtime_seconds = baselines_models.logreg_seconds + (now_seconds() - t0);
        report.rows.push_back(std::move(row));
    }
    {
        ReportRow row;
        row.name = "mlp";
        double t0 = now_seconds();
        auto set = score_baseline(baselines_models, true, cohort, split.test_ids, 1.0, 0);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes = mlp_bytes(baselines_models.mlp);
        row.runtime_seconds = baselines_models.mlp_seconds + (now_seconds() - t0);
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport exp_templates(const ExperimentConfig& config) {
    config.validate();
    double oracle_auc = 0;
    Cohort cohort = make_cohort(config, &oracle_auc);
    uint64_t seed = config.seeds.front();
    SplitPlan split = cohort::make_splits(cohort, derive_seed(seed, "split"));
    ExperimentReport report = start_report(config, cohort, split, oracle_auc);

    for (auto kind : {prompt::TemplateKind::List, prompt::TemplateKind::Text,
                      prompt::TemplateKind::Narrative}) {
        TrainedLm model = train_lm(cohort, split, config, kind, seed);
        report.manifest.artifact_hashes["corpus/" + prompt::to_string(kind)] =
            hex64(model.corpus_hash);
        report.manifest.artifact_hashes["adapter/" + prompt::to_string(kind)] =
            hex64(model.adapter_hash);
        ReportRow row;
        row.name = prompt::to_string(kind);
        double t0 = now_seconds();
        auto set = score_lm(model, true, cohort, split.test_ids, kind);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes = model.base_bytes + model.adapter.byte_size();
        row.runtime_seconds = model.train_seconds + (now_seconds() - t0);
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport exp_finetune(const ExperimentConfig& config) {
    config.validate();
    double oracle_auc = 0;
    Cohort cohort = make_cohort(config, &oracle_auc);
    uint64_t seed = config.seeds.front();
    SplitPlan split = cohort::make_splits(cohort, derive_seed(seed, "split"));
    ExperimentReport report = start_report(config, cohort, split, oracle_auc);

    for (bool quantized : {false, true}) {
        TrainedLm model =
            train_lm(cohort, split, config, config.template_kind, seed, quantized);
        ReportRow row;
        row.name = quantized ? "qlora" : "lora";
        double t0 = now_seconds();
        auto set = score_lm(model, true, cohort, split.test_ids, config.template_kind);
        row.metrics = evaluate_scores(set, config, seed);
        row.roc = metrics::roc_auc(set).first;
        row.param_bytes = model.base_bytes;
        row.runtime_seconds = model.train_seconds + (now_seconds() - t0);
        report.manifest.artifact_hashes[row.name + "/corpus"] = hex64(model.corpus_hash);
        report.manifest.artifact_hashes[row.name + "/base_checkpoint"] = hex64(model.base_hash);
        report.manifest.artifact_hashes[row.name + "/adapter_checkpoint"] =
            hex64(model.adapter_hash);
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport exp_missing(const ExperimentConfig& config) {
    config.validate();
    double oracle_auc = 0;
    Cohort cohort = make_cohort(config, &oracle_auc);
    uint64_t seed = config.seeds.front();
    SplitPlan split = cohort::make_splits(cohort, derive_seed(seed, "split"));
    ExperimentReport report = start_report(config, cohort, split, oracle_auc);

    // Default mode: one fixed trained model, masking applied to evaluation
    // inputs. mask_at_train instead retrains every method per ratio on masked
    // records and evaluates on the full-featured test set.
    TrainedLm lm_model = train_lm(cohort, split, config, config.template_kind, seed);
    report.manifest.artifact_hashes["corpus"] = hex64(lm_model.corpus_hash);
    report.manifest.artifact_hashes["base_checkpoint"] = hex64(lm_model.base_hash);
    report.manifest.artifact_hashes["adapter_checkpoint"] = hex64(lm_model.adapter_hash);
    BaselineModels baseline_models = train_baselines(cohort, split, config, seed);

    for (double ratio : config.retain_ratios) {
        const TrainedLm* eval_lm = &lm_model;
        const BaselineModels* eval_baselines = &baseline_models;
        TrainedLm retrained;
        BaselineModels retrained_baselines;
        if (config.mask_at_train && ratio < 1.0) {
            retrained = train_lm(cohort, split, config, config.template_kind, seed, false, ratio);
            eval_lm = &retrained;
            Cohort masked =
                prompt::apply_mask(cohort, ratio, derive_seed(seed, "mask-train"));
            retrained_baselines = train_baselines(masked, split, config, seed);
            eval_baselines = &retrained_baselines;
        }
        struct Method {
            const char* name;
            std::function<metrics::ScoredSet(double, uint64_t)> run;
        };
        std::vector<Method> methods{
            {"llm",
             [&](double r, uint64_t ms) {
                 return score_lm(*eval_lm, true, cohort, split.test_ids, config.template_kind,
                                 config.mask_at_train ? 1.0 : r, ms);
             }},
            {"logreg",
             [&](double r, uint64_t ms) {
                 return score_baseline(*eval_baselines, false, cohort, split.test_ids,
                                       config.mask_at_train ? 1.0 : r, ms);
             }},
            {"mlp",
             [&](double r, uint64_t ms) {
                 return score_baseline(*eval_baselines, true, cohort, split.test_ids,
                                       config.mask_at_train ? 1.0 : r, ms);
             }},
        };
        for (const auto& method : methods) {
            double t0 = now_seconds();
            std::vector<metrics::MetricReport> per_seed;
            for (uint64_t s : config.seeds)
                per_seed.push_back(
                    evaluate_scores(method.run(ratio, derive_seed(s, "mask-eval")), config, s));
            ReportRow row;
            row.name = std::string(method.name) + "@" + format_fixed(ratio, 1);
            row.metrics = metrics::crossval_aggregate(per_seed).mean;
            if (std::string(method.name) == "llm")
                row.param_bytes = eval_lm->base_bytes + eval_lm->adapter.byte_size();
            else if (std::string(method.name) == "logreg")
                row.param_bytes =
                    (static_cast<size_t>(eval_baselines->logreg.weights.size()) + 1) *
                    sizeof(double);
            else
                row.param_bytes = mlp_bytes(eval_baselines->mlp);
            row.runtime_seconds = now_seconds() - t0;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    if (config.kind == "main") return exp_main(config);
    if (config.kind == "templates") return exp_templates(config);
    if (config.kind == "finetune") return exp_finetune(config);
    if (config.kind == "missing") return exp_missing(config);
    throw ConfigError("unknown experiment kind: " + config.kind);
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace {

std::string aligned_table(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %6s %8s %8s %8s %-19s %8s %8s %8s %8s %12s\n",
                  "method", "n", "acc", "f1", "auc", "auc 95% ci", "spe", "sens", "ppv", "npv",
                  "param bytes");
    os << line;
    for (const auto& r : rows) {
        std::string ci = "(" + format_fixed(r.metrics.auc_ci.lo, 4) + " - " +
                         format_fixed(r.metrics.auc_ci.hi, 4) + ")";
        std::snprintf(line, sizeof(line),
                      "%-18s %6zu %8.4f %8.4f %8.4f %-19s %8.4f %8.4f %8.4f %8.4f %12zu\n",
                      r.name.c_str(), r.metrics.n, r.metrics.acc, r.metrics.f1, r.metrics.auc,
                      ci.c_str(), r.metrics.spe, r.metrics.sens, r.metrics.ppv, r.metrics.npv,
                      r.param_bytes);
        os << line;
    }
    return os.str();
}

json row_to_json(const ReportRow& r) {
    return json{{"name", r.name},
                {"param_bytes", r.param_bytes},
                {"metrics", json::parse(metrics::to_json_string(r.metrics))}};
}

json manifest_to_json(const ExperimentReport::Manifest& m) {
    return json{{"config", json::parse(m.config_json)},
                {"cohort_hash", hex64(m.cohort_hash)},
                {"split_hash", hex64(m.split_hash)},
                {"oracle_auc", m.oracle_auc},
                {"artifacts", m.artifact_hashes}};
}

}  // namespace

std::string ExperimentReport::body_text() const {
    std::string out = "experiment: " + kind + "\n";
    out += aligned_table(rows);
    return out;
}

std::string ExperimentReport::body_json() const {
    json j;
    j["kind"] = kind;
    json jrows = json::array();
    for (const auto& r : rows) jrows.push_back(row_to_json(r));
    j["rows"] = std::move(jrows);
    j["manifest"] = manifest_to_json(manifest);
    return j.dump(2);
}

std::string ExperimentReport::timing_json() const {
    json j = json::object();
    for (const auto& r : rows) j[r.name] = r.runtime_seconds;
    return json{{"runtime_seconds", j}}.dump(2);
}

void write_report(const ExperimentReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    cohort::write_file(out_dir + "/report.txt", report.body_text());
    cohort::write_file(out_dir + "/report.json", report.body_json());
    cohort::write_file(out_dir + "/manifest.json", manifest_to_json(report.manifest).dump(2));
    cohort::write_file(out_dir + "/timing.json", report.timing_json());
    for (const auto& r : report.rows) {
        if (r.roc.fpr.empty()) continue;
        std::string name = r.name;
        for (auto& c : name)
            if (c == '/' || c == '@') c = '_';
        cohort::write_file(out_dir + "/roc_" + name + ".csv", metrics::roc_to_csv(r.roc));
    }
}

ExperimentConfig config_from_manifest_file(const std::string& manifest_path) {
    json j = json::parse(cohort::read_file(manifest_path));
    if (j.contains("manifest")) j = j["manifest"];  // accept report.json too
    return config_from_json_string(j.at("config").dump());
}

std::string render_report_json(const std::string& report_json) {
    json j = json::parse(report_json);
    std::vector<ReportRow> rows;
    for (const auto& rj : j.at("rows")) {
        ReportRow r;
        r.name = rj.at("name").get<std::string>();
        r.param_bytes = rj.value("param_bytes", size_t{0});
        r.metrics = metrics::report_from_json_string(rj.at("metrics").dump());
        rows.push_back(std::move(r));
    }
    std::string out = "experiment: " + j.value("kind", std::string("?")) + "\n";
    out += aligned_table(rows);
    return out;
}

}  // namespace mddlm::exp
