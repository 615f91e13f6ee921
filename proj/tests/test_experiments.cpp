#include <doctest.h>

#include "mddlm/experiments/experiments.hpp"

using namespace mddlm;
using namespace mddlm::exp;

namespace {

/// Small enough to keep every experiment kind under a few seconds.
ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.preset = "strong-signal";
    c.n = 200;
    c.train.epochs = 1;
    c.train.batch_size = 16;
    c.bootstrap_resamples = 50;
    c.seeds = {1, 2};
    c.retain_ratios = {0.4, 1.0};
    return c;
}

const ReportRow& row_named(const ExperimentReport& rep, const std::string& name) {
    for (const auto& r : rep.rows)
        if (r.name == name) return r;
    throw std::runtime_error("missing row " + name);
}

}  // namespace

TEST_CASE("config json round trip preserves every field") {
    auto c = tiny_config();
    c.kind = "missing";
    c.mask_at_train = true;
    c.lora.targets = {"wq", "wv"};
    c.model.embed_dim = 32;
    auto back = config_from_json_string(config_to_json_string(c));
    CHECK(back.kind == c.kind);
    CHECK(back.n == c.n);
    CHECK(back.seeds == c.seeds);
    CHECK(back.retain_ratios == c.retain_ratios);
    CHECK(back.mask_at_train == c.mask_at_train);
    CHECK(back.lora.targets == c.lora.targets);
    CHECK(back.model.embed_dim == 32);
    CHECK(back.train.epochs == c.train.epochs);
    CHECK(back.bootstrap_resamples == c.bootstrap_resamples);
}

TEST_CASE("exp_main produces exactly four method rows with full metrics") {
    auto rep = exp_main(tiny_config());
    REQUIRE(rep.rows.size() == 4);
    for (const char* name : {"llm_finetuned", "llm_base", "logreg", "mlp"}) {
        const auto& row = row_named(rep, name);
        CHECK(row.metrics.n > 0);
        CHECK(row.metrics.auc >= 0.0);
        CHECK(row.metrics.auc <= 1.0);
        CHECK(row.metrics.auc_ci.hi >= row.metrics.auc_ci.lo);
        CHECK(row.param_bytes > 0);
    }
    CHECK(rep.manifest.oracle_auc > 0.5);
    CHECK(rep.manifest.cohort_hash != 0);
    CHECK(rep.manifest.artifact_hashes.count("corpus") == 1);
}

TEST_CASE("exp_main is deterministic: identical bodies on identical config") {
    auto a = exp_main(tiny_config());
    auto b = exp_main(tiny_config());
    CHECK(a.body_text() == b.body_text());
    CHECK(a.body_json() == b.body_json());
}

TEST_CASE("exp_templates runs one row per template over one shared cohort") {
    auto config = tiny_config();
    config.kind = "templates";
    auto rep = exp_templates(config);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].name == "list");
    CHECK(rep.rows[1].name == "text");
    CHECK(rep.rows[2].name == "narrative");
    // controlled variable: a single cohort/split hash for every row, with
    // per-template corpus hashes recorded
    CHECK(rep.manifest.cohort_hash != 0);
    for (const char* t : {"list", "text", "narrative"})
        CHECK(rep.manifest.artifact_hashes.count(std::string("corpus/") + t) == 1);
    CHECK(rep.manifest.artifact_hashes.at("corpus/list") !=
          rep.manifest.artifact_hashes.at("corpus/text"));
}

TEST_CASE("exp_finetune compares dense and 4-bit bases") {
    auto config = tiny_config();
    config.kind = "finetune";
    auto rep = exp_finetune(config);
    REQUIRE(rep.rows.size() == 2);
    const auto& lora = row_named(rep, "lora");
    const auto& qlora = row_named(rep, "qlora");
    CHECK(static_cast<double>(qlora.param_bytes) <= 0.3 * static_cast<double>(lora.param_bytes));
    CHECK(lora.metrics.auc > 0.0);
    CHECK(qlora.metrics.auc > 0.0);
    CHECK(lora.runtime_seconds > 0.0);
    CHECK(qlora.runtime_seconds > 0.0);
}

TEST_CASE("exp_missing retain-1.0 row matches exp_main under the same seed") {
    auto config = tiny_config();
    auto main_rep = exp_main(config);
    config.kind = "missing";
    auto missing_rep = exp_missing(config);
    // 2 ratios x 3 methods
    CHECK(missing_rep.rows.size() == 6);
    const auto& llm_full = row_named(missing_rep, "llm@1.0");
    const auto& main_llm = row_named(main_rep, "llm_finetuned");
    CHECK(llm_full.metrics.auc == doctest::Approx(main_llm.metrics.auc).epsilon(1e-12));
    CHECK(llm_full.metrics.acc == doctest::Approx(main_llm.metrics.acc).epsilon(1e-12));
    CHECK(llm_full.metrics.f1 == doctest::Approx(main_llm.metrics.f1).epsilon(1e-12));
    // shared cohort across the two experiments
    CHECK(missing_rep.manifest.cohort_hash == main_rep.manifest.cohort_hash);
}

TEST_CASE("exp_missing train-time masking mode retrains per ratio") {
    auto config = tiny_config();
    config.kind = "missing";
    config.mask_at_train = true;
    config.retain_ratios = {0.4, 1.0};
    auto rep = exp_missing(config);
    CHECK(rep.rows.size() == 6);
    // the 1.0 rows must match the eval-mode 1.0 rows (no masking either way)
    config.mask_at_train = false;
    auto eval_rep = exp_missing(config);
    CHECK(row_named(rep, "llm@1.0").metrics.auc ==
          doctest::Approx(row_named(eval_rep, "llm@1.0").metrics.auc));
}

TEST_CASE("manifest re-run reproduces the report body bit-exactly") {
    auto config = tiny_config();
    auto rep = exp_main(config);
    auto config_back = config_from_json_string(rep.manifest.config_json);
    auto rerun = run_experiment(config_back);
    CHECK(rerun.body_text() == rep.body_text());
    CHECK(rerun.body_json() == rep.body_json());
}

TEST_CASE("report json renders back to the aligned table") {
    auto rep = exp_main(tiny_config());
    std::string rendered = render_report_json(rep.body_json());
    CHECK(rendered == rep.body_text());
}
