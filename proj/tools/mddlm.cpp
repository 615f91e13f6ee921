// Command-line entry point for the cohort -> corpus -> fine-tune ->
// classify -> evaluate pipeline and the scripted experiments.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "mddlm/backends/local.hpp"
#include "mddlm/backends/remote.hpp"
#include "mddlm/baselines/baselines.hpp"
#include "mddlm/cohort/io.hpp"
#include "mddlm/cohort/stats.hpp"
#include "mddlm/cohort/splits.hpp"
#include "mddlm/cohort/synth.hpp"
#include "mddlm/experiments/experiments.hpp"
#include "mddlm/lm/checkpoint.hpp"
#include "mddlm/metrics/metrics.hpp"
#include "mddlm/promptgen/promptgen.hpp"

namespace {

using namespace mddlm;

struct GlobalOpts {
    uint64_t seed = 0;
    int threads = 1;
};

cohort::Schema resolve_schema(const std::string& schema_name, const std::string& schema_file) {
    if (!schema_file.empty()) return cohort::load_schema(schema_file);
    return cohort::builtin::by_name(schema_name);
}

std::vector<std::string> ids_for_split(const cohort::Cohort& cohort, const std::string& split,
                                       uint64_t seed) {
    if (split == "all") {
        std::vector<std::string> ids;
        for (const auto& r : cohort.records)
            if (r.label != cohort::Label::Unlabeled) ids.push_back(r.patient_id);
        return ids;
    }
    auto plan = cohort::make_splits(cohort, derive_seed(seed, "split"));
    if (split == "train") return plan.train_ids;
    if (split == "test") return plan.test_ids;
    throw ConfigError("unknown split: " + split + " (use train|test|all)");
}

void log_manifest(const std::string& command, uint64_t seed, const std::string& detail) {
    std::cerr << "[mddlm] " << command << " seed=" << seed;
    if (!detail.empty()) std::cerr << " " << detail;
    std::cerr << "\n";
}

metrics::ScoredSet load_scores_csv(const std::string& path) {
    std::string text = cohort::read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("scores file empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = cohort::split_csv_line(line);
    int score_col = -1, label_col = -1, id_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "score") score_col = static_cast<int>(i);
        if (header[i] == "label") label_col = static_cast<int>(i);
        if (header[i] == "patient_id") id_col = static_cast<int>(i);
    }
    if (score_col < 0 || label_col < 0)
        throw DataError("scores file needs 'score' and 'label' columns");
    metrics::ScoredSet set;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = cohort::split_csv_line(line);
        double score;
        if (!parse_double(cells.at(static_cast<size_t>(score_col)), score))
            throw DataError("scores row " + std::to_string(row) + ": bad score");
        int label = cells.at(static_cast<size_t>(label_col)) == "1" ? 1 : 0;
        std::string id = id_col >= 0 ? cells.at(static_cast<size_t>(id_col)) : "";
        set.push(score, label, id);
    }
    return set;
}

int run(int argc, char** argv) {
    CLI::App app{"desk-scale LLM pipeline for tabular MDD risk classification"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOpts global;
    app.add_option("--seed", global.seed, "global random seed");
    app.add_option("--threads", global.threads,
                   "worker cap; all current code paths run sequentially, so any value "
                   "reproduces the --threads 1 outputs");

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort csv");
    struct {
        size_t n = 1000;
        std::string preset = "strong-signal";
        std::string config_path;
        std::string out;
    } synth_opts;
    synth->add_option("--n", synth_opts.n, "number of records");
    synth->add_option("--preset", synth_opts.preset, "strong-signal | paper-analog | null");
    synth->add_option("--config", synth_opts.config_path, "generator config json");
    synth->add_option("--out", synth_opts.out, "output csv path")->required();

    // --- ingest ---
    auto* ingest = app.add_subcommand("ingest", "validate a cohort csv and re-emit it");
    struct {
        std::string in, out, schema_name = "uk16", schema_file, baseline, label_col = "mdd";
    } ingest_opts;
    ingest->add_option("--in", ingest_opts.in)->required();
    ingest->add_option("--out", ingest_opts.out, "re-emission path");
    ingest->add_option("--schema-name", ingest_opts.schema_name, "builtin schema name");
    ingest->add_option("--schema", ingest_opts.schema_file, "schema config file");
    ingest->add_option("--label-column", ingest_opts.label_col);
    ingest->add_option("--baseline", ingest_opts.baseline,
                       "write a baseline-characteristics csv here");

    // --- schema export (helper for the documented schema grammar) ---
    auto* schema_cmd = app.add_subcommand("schema", "export a builtin schema config");
    struct {
        std::string name = "uk16", out;
    } schema_opts;
    schema_cmd->add_option("--name", schema_opts.name);
    schema_cmd->add_option("--out", schema_opts.out)->required();

    // --- corpus ---
    auto* corpus = app.add_subcommand("corpus", "emit an instruction corpus (json lines)");
    struct {
        std::string in, out, schema_name = "uk16", schema_file, tpl = "text", split = "all";
        bool balance = false;
    } corpus_opts;
    corpus->add_option("--in", corpus_opts.in)->required();
    corpus->add_option("--out", corpus_opts.out)->required();
    corpus->add_option("--schema-name", corpus_opts.schema_name);
    corpus->add_option("--schema", corpus_opts.schema_file);
    corpus->add_option("--template", corpus_opts.tpl, "list | text | narrative");
    corpus->add_option("--split", corpus_opts.split, "train | test | all");
    corpus->add_flag("--balance", corpus_opts.balance, "oversample the minority class to 1:1");
    std::string corpus_remote_endpoint, corpus_remote_model, corpus_cache_dir;
    corpus->add_option("--remote-endpoint", corpus_remote_endpoint,
                       "narrative template: use this chat endpoint instead of the builtin "
                       "fallback");
    corpus->add_option("--remote-model", corpus_remote_model);
    corpus->add_option("--cache-dir", corpus_cache_dir, "narrative paraphrase cache directory");

    // --- train ---
    auto* train = app.add_subcommand("train", "fine-tune adapters on a corpus");
    struct {
        std::string corpus, out;
        int layers = 2, heads = 4, dim = 64, mlp = 128, context = 384;
        int rank = 8;
        double alpha = 16.0;
        std::vector<std::string> targets{"wq", "wv", "wout"};
        int epochs = 5, batch = 16;
        double lr = 3e-4;
        bool quantize = false;
    } train_opts;
    train->add_option("--corpus", train_opts.corpus)->required();
    train->add_option("--out", train_opts.out, "output directory")->required();
    train->add_option("--layers", train_opts.layers);
    train->add_option("--heads", train_opts.heads);
    train->add_option("--dim", train_opts.dim);
    train->add_option("--mlp", train_opts.mlp);
    train->add_option("--context", train_opts.context);
    train->add_option("--rank", train_opts.rank);
    train->add_option("--alpha", train_opts.alpha);
    train->add_option("--targets", train_opts.targets, "lora targets");
    train->add_option("--epochs", train_opts.epochs);
    train->add_option("--batch", train_opts.batch);
    train->add_option("--lr", train_opts.lr);
    train->add_flag("--quantize", train_opts.quantize, "store the base in 4-bit form");

    // --- classify ---
    auto* classify = app.add_subcommand("classify", "score records with a trained model");
    struct {
        std::string model_dir, in, out, schema_name = "uk16", schema_file, tpl = "text";
        std::string split = "all";
        std::string remote_endpoint, remote_model, cache_dir;
        bool base_only = false;
    } cls_opts;
    classify->add_option("--model", cls_opts.model_dir, "directory written by train");
    classify->add_option("--in", cls_opts.in)->required();
    classify->add_option("--out", cls_opts.out, "scores csv")->required();
    classify->add_option("--schema-name", cls_opts.schema_name);
    classify->add_option("--schema", cls_opts.schema_file);
    classify->add_option("--template", cls_opts.tpl);
    classify->add_option("--split", cls_opts.split);
    classify->add_flag("--base-only", cls_opts.base_only, "ignore the adapter");
    classify->add_option("--remote-endpoint", cls_opts.remote_endpoint,
                         "completions endpoint url (uses the remote backend)");
    classify->add_option("--remote-model", cls_opts.remote_model);
    classify->add_option("--cache-dir", cls_opts.cache_dir, "remote request cache directory");
    std::string cls_auth_env = "MDDLLM_API_KEY";
    std::string cls_rationale_out;
    classify->add_option("--auth-env", cls_auth_env,
                         "environment variable holding the bearer token");
    classify->add_option("--rationale-out", cls_rationale_out,
                         "also request free-text explanations; written as json lines here");

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "metric report from a scores csv");
    struct {
        std::string scores, out;
        double threshold = 0.5;
        int resamples = 1000;
        double level = 0.95;
    } eval_opts;
    eval->add_option("--scores", eval_opts.scores)->required();
    eval->add_option("--out", eval_opts.out, "output prefix")->required();
    eval->add_option("--threshold", eval_opts.threshold);
    eval->add_option("--bootstrap", eval_opts.resamples);
    eval->add_option("--level", eval_opts.level);

    // --- experiment ---
    auto* experiment = app.add_subcommand("experiment", "run a scripted study");
    struct {
        std::string kind = "main", out, config_path, from_manifest;
        size_t n = 0;
        std::string preset;
        std::vector<uint64_t> seeds;
        int epochs = -1;
    } exp_opts;
    experiment->add_option("--kind", exp_opts.kind, "main | templates | finetune | missing");
    experiment->add_option("--out", exp_opts.out, "output directory")->required();
    experiment->add_option("--config", exp_opts.config_path, "experiment config json");
    experiment->add_option("--from-manifest", exp_opts.from_manifest,
                           "re-run from a manifest.json (or report.json)");
    experiment->add_option("--n", exp_opts.n, "cohort size override");
    experiment->add_option("--preset", exp_opts.preset, "synthetic preset override");
    experiment->add_option("--seeds", exp_opts.seeds, "seed list override");
    experiment->add_option("--epochs", exp_opts.epochs, "training epochs override");
    bool exp_mask_at_train = false;
    experiment->add_flag("--mask-at-train", exp_mask_at_train,
                         "missing study: mask the training records instead of the eval inputs");

    // --- export-features ---
    auto* exportf = app.add_subcommand("export-features",
                                       "emit the baseline feature matrix for external tools");
    struct {
        std::string in, out, schema_name = "uk16", schema_file, split = "all";
        std::string fit_split = "train";
    } exf_opts;
    exportf->add_option("--in", exf_opts.in)->required();
    exportf->add_option("--out", exf_opts.out)->required();
    exportf->add_option("--schema-name", exf_opts.schema_name);
    exportf->add_option("--schema", exf_opts.schema_file);
    exportf->add_option("--split", exf_opts.split, "rows to emit: train | test | all");
    exportf->add_option("--fit-split", exf_opts.fit_split,
                        "rows the featurizer statistics come from");

    // --- report ---
    auto* report = app.add_subcommand("report", "render a report.json as an aligned table");
    struct {
        std::string in, out;
    } rep_opts;
    report->add_option("--in", rep_opts.in)->required();
    report->add_option("--out", rep_opts.out, "write here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints the usage message
        return code == 0 ? 0 : 2;
    }

    if (synth->parsed()) {
        auto config = synth_opts.config_path.empty()
                          ? cohort::synth_preset(synth_opts.preset)
                          : cohort::generator_from_json_string(
                                cohort::read_file(synth_opts.config_path));
        config.n = synth_opts.n;
        auto c = cohort::synth_cohort(config, global.seed);
        cohort::save_cohort(c, synth_opts.out);
        log_manifest("synth", global.seed,
                     "preset=" + config.name + " n=" + std::to_string(c.records.size()));
        return 0;
    }

    if (ingest->parsed()) {
        auto schema = resolve_schema(ingest_opts.schema_name, ingest_opts.schema_file);
        cohort::LoadOptions opts;
        opts.label_column = ingest_opts.label_col;
        auto c = cohort::load_cohort(ingest_opts.in, schema, opts);
        if (!ingest_opts.out.empty()) cohort::save_cohort(c, ingest_opts.out, opts);
        if (!ingest_opts.baseline.empty())
            cohort::write_file(ingest_opts.baseline,
                               cohort::baseline_to_csv(cohort::baseline_table(c)));
        log_manifest("ingest", global.seed, "records=" + std::to_string(c.records.size()));
        return 0;
    }

    if (schema_cmd->parsed()) {
        cohort::save_schema(cohort::builtin::by_name(schema_opts.name), schema_opts.out);
        return 0;
    }

    if (corpus->parsed()) {
        auto schema = resolve_schema(corpus_opts.schema_name, corpus_opts.schema_file);
        auto c = cohort::load_cohort(corpus_opts.in, schema);
        auto ids = ids_for_split(c, corpus_opts.split, global.seed);
        auto kind = prompt::template_from_string(corpus_opts.tpl);

        std::shared_ptr<backends::RemoteBackend> remote;
        std::unique_ptr<backends::RemoteNarrativeClient> client;
        std::unique_ptr<prompt::NarrativeCache> narrative_cache;
        if (!corpus_remote_endpoint.empty()) {
            backends::RemoteConfig rc;
            rc.endpoint = corpus_remote_endpoint;
            rc.model = corpus_remote_model;
            remote = std::make_shared<backends::RemoteBackend>(
                rc, std::shared_ptr<backends::HttpTransport>(backends::make_httplib_transport()));
            client = std::make_unique<backends::RemoteNarrativeClient>(remote,
                                                                       corpus_remote_model);
            if (!corpus_cache_dir.empty())
                narrative_cache = std::make_unique<prompt::NarrativeCache>(corpus_cache_dir);
        }
        auto sfts = prompt::build_corpus(c, ids, kind, corpus_opts.balance, client.get(),
                                         narrative_cache.get());
        std::string blob;
        for (const auto& sft : sfts) blob += prompt::sft_to_json_line(sft) + "\n";
        cohort::write_file(corpus_opts.out, blob);
        std::cout << sfts.size() << " records written\n";
        log_manifest("corpus", global.seed, "template=" + corpus_opts.tpl);
        return 0;
    }

    if (train->parsed()) {
        auto corpus_records = prompt::load_corpus(train_opts.corpus);
        if (corpus_records.empty()) throw DataError("train: empty corpus");
        std::vector<std::string> texts;
        for (const auto& sft : corpus_records)
            texts.push_back(prompt::assemble_prompt(sft.instruction, sft.input) + " " +
                            sft.output);
        auto tokenizer = lm::Tokenizer::build(texts);
        lm::ModelConfig mc{train_opts.layers, train_opts.heads,   train_opts.dim,
                           train_opts.mlp,    train_opts.context, static_cast<int>(tokenizer.vocab_size())};
        auto base = lm::init_params<float>(mc, derive_seed(global.seed, "base-init"));
        size_t base_bytes = base.byte_size();
        std::filesystem::create_directories(train_opts.out);
        if (train_opts.quantize) {
            auto q = lm::quantize_base(base);
            base_bytes = q.byte_size();
            lm::save_quantized(q, train_opts.out + "/base_q4.ckpt");
            base = q.dequantize_all();
        } else {
            lm::save_params(base, train_opts.out + "/base.ckpt");
        }
        lm::TrainConfig tc;
        tc.peak_lr = train_opts.lr;
        tc.batch_size = train_opts.batch;
        tc.epochs = train_opts.epochs;
        tc.seed = derive_seed(global.seed, "train");
        lm::LoraConfig lc{train_opts.rank, train_opts.alpha, train_opts.targets};
        auto examples = lm::make_examples(tokenizer, corpus_records);
        auto [adapter, history] = lm::train_sft(base, examples, tc, lc);
        lm::save_adapter(adapter, mc, train_opts.out + "/adapter.ckpt");
        tokenizer.save(train_opts.out + "/vocab.txt");
        cohort::write_file(train_opts.out + "/history.csv", history.to_csv());
        nlohmann::json manifest{{"seed", global.seed},
                                {"corpus", train_opts.corpus},
                                {"quantized_base", train_opts.quantize},
                                {"base_bytes", base_bytes},
                                {"adapter_bytes", adapter.byte_size()},
                                {"final_loss", history.steps.empty()
                                                   ? 0.0
                                                   : history.steps.back().loss}};
        cohort::write_file(train_opts.out + "/train_manifest.json", manifest.dump(2));
        std::cout << "final loss " << (history.steps.empty() ? 0.0 : history.steps.back().loss)
                  << "\n";
        log_manifest("train", global.seed, "out=" + train_opts.out);
        return 0;
    }

    if (classify->parsed()) {
        auto schema = resolve_schema(cls_opts.schema_name, cls_opts.schema_file);
        auto c = cohort::load_cohort(cls_opts.in, schema);
        auto ids = ids_for_split(c, cls_opts.split, global.seed);
        auto kind = prompt::template_from_string(cls_opts.tpl);

        std::unique_ptr<backends::Backend> backend;
        lm::ModelParams<float> base;
        lm::LoraAdapter<float> adapter;
        lm::Tokenizer tokenizer;
        bool use_adapter = false;
        if (!cls_opts.remote_endpoint.empty()) {
            backends::RemoteConfig rc;
            rc.endpoint = cls_opts.remote_endpoint;
            rc.model = cls_opts.remote_model;
            rc.cache_dir = cls_opts.cache_dir;
            rc.auth_env = cls_auth_env;
            backend = std::make_unique<backends::RemoteBackend>(
                rc, std::shared_ptr<backends::HttpTransport>(backends::make_httplib_transport()));
        } else {
            if (cls_opts.model_dir.empty())
                throw ConfigError("classify: need --model or --remote-endpoint");
            std::string base_path = cls_opts.model_dir + "/base.ckpt";
            if (std::filesystem::exists(base_path)) {
                base = lm::load_params<float>(base_path);
            } else {
                base = lm::load_quantized<float>(cls_opts.model_dir + "/base_q4.ckpt")
                           .dequantize_all();
            }
            tokenizer = lm::Tokenizer::load(cls_opts.model_dir + "/vocab.txt");
            if (!cls_opts.base_only &&
                std::filesystem::exists(cls_opts.model_dir + "/adapter.ckpt")) {
                adapter = lm::load_adapter<float>(cls_opts.model_dir + "/adapter.ckpt");
                use_adapter = true;
            }
            backend = std::make_unique<backends::LocalBackend<float>>(
                base, use_adapter ? &adapter : nullptr, tokenizer);
        }

        std::string out = "patient_id,score,label\n";
        std::string rationales;
        for (const auto& id : ids) {
            const cohort::Record* rec = nullptr;
            for (const auto& r : c.records)
                if (r.patient_id == id) rec = &r;
            if (!rec || rec->label == cohort::Label::Unlabeled) continue;
            std::string input = prompt::render(*rec, schema, kind);
            std::string p = prompt::assemble_prompt(prompt::kInstruction, input);
            if (cls_rationale_out.empty()) {
                auto score = backends::classify(*backend, p);
                out += id + "," + format_shortest(score.p_yes) + "," +
                       (rec->label == cohort::Label::MDD ? "1" : "0") + "\n";
            } else {
                auto res = backends::classify_with_rationale(*backend, p);
                out += id + "," + format_shortest(res.score.p_yes) + "," +
                       (rec->label == cohort::Label::MDD ? "1" : "0") + "\n";
                nlohmann::json rj{{"patient_id", id},
                                  {"prediction", res.rationale.prediction},
                                  {"free_text", res.rationale.free_text},
                                  {"warnings", res.warnings}};
                if (res.rationale.parsed_probability)
                    rj["parsed_probability"] = *res.rationale.parsed_probability;
                rationales += rj.dump() + "\n";
            }
        }
        cohort::write_file(cls_opts.out, out);
        if (!cls_rationale_out.empty()) cohort::write_file(cls_rationale_out, rationales);
        log_manifest("classify", global.seed, "out=" + cls_opts.out);
        return 0;
    }

    if (eval->parsed()) {
        auto set = load_scores_csv(eval_opts.scores);
        auto report_out = metrics::evaluate(set, eval_opts.threshold, eval_opts.resamples,
                                            eval_opts.level, derive_seed(global.seed, "bootstrap"));
        cohort::write_file(eval_opts.out + ".txt", metrics::to_text(report_out));
        cohort::write_file(eval_opts.out + ".json", metrics::to_json_string(report_out));
        cohort::write_file(eval_opts.out + "_roc.csv",
                           metrics::roc_to_csv(metrics::roc_auc(set).first));
        std::cout << metrics::to_text(report_out);
        log_manifest("eval", global.seed, "n=" + std::to_string(set.size()));
        return 0;
    }

    if (experiment->parsed()) {
        exp::ExperimentConfig config;
        if (!exp_opts.from_manifest.empty()) {
            config = exp::config_from_manifest_file(exp_opts.from_manifest);
        } else if (!exp_opts.config_path.empty()) {
            config = exp::config_from_json_string(cohort::read_file(exp_opts.config_path));
        }
        if (exp_opts.from_manifest.empty()) config.kind = exp_opts.kind;
        if (exp_opts.n > 0) config.n = exp_opts.n;
        if (!exp_opts.preset.empty()) config.preset = exp_opts.preset;
        if (!exp_opts.seeds.empty()) config.seeds = exp_opts.seeds;
        if (exp_opts.epochs > 0) config.train.epochs = exp_opts.epochs;
        if (exp_mask_at_train) config.mask_at_train = true;
        config.out_dir = exp_opts.out;
        auto rep = exp::run_experiment(config);
        exp::write_report(rep, exp_opts.out);
        std::cout << rep.body_text();
        log_manifest("experiment", config.seeds.front(), "kind=" + config.kind);
        return 0;
    }

    if (exportf->parsed()) {
        auto schema = resolve_schema(exf_opts.schema_name, exf_opts.schema_file);
        auto c = cohort::load_cohort(exf_opts.in, schema);
        auto fit_ids = ids_for_split(c, exf_opts.fit_split, global.seed);
        auto emit_ids = ids_for_split(c, exf_opts.split, global.seed);
        auto featurizer = baselines::Featurizer::fit(c, fit_ids);
        cohort::write_file(exf_opts.out, baselines::export_matrix_csv(featurizer, c, emit_ids));
        log_manifest("export-features", global.seed, "rows=" + std::to_string(emit_ids.size()));
        return 0;
    }

    if (report->parsed()) {
        std::string content = cohort::read_file(rep_opts.in);
        auto parsed = nlohmann::json::parse(content);
        std::string table = parsed.contains("rows")
                                ? exp::render_report_json(content)
                                : metrics::to_text(metrics::report_from_json_string(content));
        if (rep_opts.out.empty())
            std::cout << table;
        else
            cohort::write_file(rep_opts.out, table);
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const mddlm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
