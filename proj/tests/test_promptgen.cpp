#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <map>
#include <set>

#include "mddlm/cohort/synth.hpp"
#include "mddlm/promptgen/promptgen.hpp"

using namespace mddlm;
using namespace mddlm::prompt;
using cohort::Label;
using cohort::Record;
using cohort::Value;

namespace {

// Target strings for the worked example and both figure3 panels, verbatim
// (including the figure's "Dring" label, missing space after the age
// fragment, and trailing-period differences).
const std::string kWorkedInput =
    "Age is 60, sex is female, body mass index (BMI) is 24.5018 kg/m², sometimes "
    "sleeplessness, sleep time is 6 hours, drink alcohol three times a week, never self-harmed, "
    "the employment status is in paid employment, the income is 45000 pound, work 38 hours per "
    "week, the education is o levels, not has long-standing illness, the hdl cholesterol is "
    "2.075 mmol/l, the clinical ldl cholesterol is 2.6077 mmol/l, the triglycerides is 1.334 "
    "mmol/l, the total cholesterol is 4.7848 mmol/l";

const std::string kFigure3Text =
    "Age is 47,sex is male, body mass index (bmi) is 29.7973 kg/m², sometimes "
    "sleeplessness, sleep time is 9 hours, drink alcohol three or four times a week, never "
    "self-harmed, the employment status is in paid employment or self-employed, the income is "
    "less than 18,000 dollar, work 17 hours per week, the education is a levels/as levels or "
    "equivalent, not has long-standing illness, the hdl cholesterol is 1.507 mmol/l, the "
    "clinical ldl cholesterol is 2.3299 mmol/l, the triglycerides is 1.038 mmol/l, the total "
    "cholesterol is 4.7086 mmol/l.";

const std::string kFigure3List =
    "Age: 47, Sex: male, Sleepless: sometime, Sleep Times: 9 hours, Dring: 4 / week, "
    "Self-harmed: never, Employment: paid, Work Times: 17 h / week, Education: A level, "
    "Income: 18,000, HDLC: 1.507, CLDLC: 2.3299, TG: 1.038, TC: 4.7086.";

struct TempDir {
    std::string path;
    TempDir() {
        path = (std::filesystem::temp_directory_path() /
                ("mddlm-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(reinterpret_cast<uintptr_t>(this))))
                   .string();
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("render_text reproduces the worked example input byte-exactly") {
    auto schema = cohort::builtin::worked_example();
    auto record = cohort::fixtures::worked_example_record();
    CHECK(render_text(record, schema) == kWorkedInput);
}

TEST_CASE("render_text reproduces the figure3 text panel byte-exactly") {
    auto schema = cohort::builtin::figure3();
    auto record = cohort::fixtures::figure3_record();
    CHECK(render_text(record, schema) == kFigure3Text);
}

TEST_CASE("render_list reproduces the figure3 list panel byte-exactly") {
    auto schema = cohort::builtin::figure3();
    auto record = cohort::fixtures::figure3_record();
    CHECK(render_list(record, schema) == kFigure3List);
}

TEST_CASE("corrected schema fixes the figure's typos and nothing else") {
    auto schema = cohort::builtin::figure3_corrected();
    auto record = cohort::fixtures::figure3_record();
    std::string list = render_list(record, schema);
    CHECK(list.find("Dring") == std::string::npos);
    CHECK(list.find("Drink: 4 / week") != std::string::npos);
    CHECK(list.find("Sleepless: sometimes") != std::string::npos);
    CHECK(render_text(record, schema) == kFigure3Text);
}

TEST_CASE("render_list single feature and all-missing") {
    auto schema = cohort::builtin::worked_example();
    Record r;
    r.patient_id = "x";
    r.set("age", Value::numeric(60, "60"));
    CHECK(render_list(r, schema) == "Age: 60.");

    Record empty;
    empty.patient_id = "y";
    auto out = render_list_full(empty, schema);
    CHECK(out.text.empty());
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("all features missing") != std::string::npos);
}

TEST_CASE("render_text single feature echoes the record's precision") {
    auto schema = cohort::builtin::worked_example();
    Record r;
    r.patient_id = "x";
    r.set("bmi", Value::numeric(24.5, "24.5"));
    CHECK(render_text(r, schema) == "body mass index (BMI) is 24.5 kg/m²");
}

TEST_CASE("value preservation in list and text renders") {
    auto gen = cohort::synth_preset("strong-signal");
    gen.n = 50;
    auto c = cohort::synth_cohort(gen, 12);
    for (const auto& r : c.records) {
        std::string text = render_text(r, c.schema);
        std::string list = render_list(r, c.schema);
        for (const auto& f : c.schema.features) {
            const Value& v = r.get(f.name);
            if (v.is_missing() || !f.is_numeric()) continue;
            CHECK(text.find(v.numeric_literal()) != std::string::npos);
            CHECK(list.find(v.numeric_literal()) != std::string::npos);
        }
    }
}

TEST_CASE("rendered output is independent of record map insertion order") {
    auto schema = cohort::builtin::worked_example();
    auto record = cohort::fixtures::worked_example_record();
    Record reversed;
    reversed.patient_id = record.patient_id;
    reversed.label = record.label;
    for (auto it = schema.features.rbegin(); it != schema.features.rend(); ++it)
        reversed.set(it->name, record.get(it->name));
    CHECK(render_text(reversed, schema) == render_text(record, schema));
    CHECK(render_list(reversed, schema) == render_list(record, schema));
}

TEST_CASE("build_sft assembles the canonical triple") {
    auto schema = cohort::builtin::worked_example();
    auto record = cohort::fixtures::worked_example_record();
    auto sft = build_sft(record, schema, TemplateKind::Text);
    CHECK(sft.instruction == kInstruction);
    CHECK(sft.input == kWorkedInput);
    CHECK(sft.output == "Yes");
    CHECK(sft.patient_id == record.patient_id);

    Record hc = record;
    hc.label = Label::HC;
    CHECK(build_sft(hc, schema, TemplateKind::Text).output == "No");

    Record unlabeled = record;
    unlabeled.label = Label::Unlabeled;
    CHECK_THROWS_AS(build_sft(unlabeled, schema, TemplateKind::Text), DataError);
}

// ---------------------------------------------------------------------------
// Narrative template
// ---------------------------------------------------------------------------

TEST_CASE("fallback narrative is deterministic and preserves values verbatim") {
    auto schema = cohort::builtin::figure3();
    auto record = cohort::fixtures::figure3_record();
    std::string a = render_narrative(record, schema);
    std::string b = render_narrative(record, schema);
    CHECK(a == b);
    for (const char* v : {"47", "1.507", "2.3299", "1.038", "4.7086"})
        CHECK(a.find(v) != std::string::npos);
    CHECK(a.find(". ") != std::string::npos);  // multi-sentence
}

namespace {
class CannedClient : public NarrativeClient {
public:
    std::string response;
    int calls = 0;
    std::string complete(const std::string&) override {
        ++calls;
        return response;
    }
    std::string model_name() const override { return "canned-model"; }
};
}  // namespace

TEST_CASE("remote narrative caches by content and flags missing values") {
    auto schema = cohort::builtin::worked_example();
    auto record = cohort::fixtures::worked_example_record();
    TempDir dir;
    NarrativeCache cache(dir.path);
    CannedClient client;
    client.response = render_text(record, schema);  // everything preserved

    auto first = render_narrative_full(record, schema, &client, &cache);
    CHECK(first.warnings.empty());
    CHECK(client.calls == 1);
    auto second = render_narrative_full(record, schema, &client, &cache);
    CHECK(second.text == first.text);
    CHECK(client.calls == 1);  // warm cache, zero client calls

    // A response that drops the BMI value warns naming the feature.
    CannedClient lossy;
    std::string no_bmi = render_text(record, schema);
    size_t at = no_bmi.find("24.5018");
    no_bmi.erase(at, 7);
    lossy.response = no_bmi;
    auto lossy_out = render_narrative_full(record, schema, &lossy, nullptr);
    REQUIRE(lossy_out.warnings.size() == 1);
    CHECK(lossy_out.warnings[0].find("BMI") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

TEST_CASE("mask_features ratio bounds and edge cases") {
    auto schema = cohort::builtin::uk16();
    auto gen = cohort::synth_preset("null");
    gen.n = 3;
    auto c = cohort::synth_cohort(gen, 1);
    const auto& r = c.records[0];
    CHECK_THROWS_AS(mask_features(r, schema, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(mask_features(r, schema, 1.2, 1), ConfigError);

    // ratio 1.0 keeps the record unchanged
    auto full = mask_features(r, schema, 1.0, 1);
    CHECK(canonical_record_string(full, schema) == canonical_record_string(r, schema));

    // ratio 0.2 on a 16-feature schema keeps exactly ceil(3.2) = 4
    auto masked = mask_features(r, schema, 0.2, 1);
    size_t present = 0;
    for (const auto& f : schema.features) present += !masked.get(f.name).is_missing();
    CHECK(present <= 4);  // fewer if an original value was already missing
    auto plan = make_mask_plan(c, 0.2, 1);
    CHECK(plan.kept.at(r.patient_id).size() == 4);
    CHECK(masked.label == r.label);
}

TEST_CASE("mask is deterministic per (seed, patient_id) and varies across both") {
    auto schema = cohort::builtin::uk16();
    auto gen = cohort::synth_preset("null");
    gen.n = 40;
    auto c = cohort::synth_cohort(gen, 2);
    auto plan_a = make_mask_plan(c, 0.4, 9);
    auto plan_b = make_mask_plan(c, 0.4, 9);
    CHECK(plan_a.kept == plan_b.kept);
    auto plan_c = make_mask_plan(c, 0.4, 10);
    CHECK(plan_a.kept != plan_c.kept);
    // different patients get different sets (not a constant mask)
    std::set<std::vector<std::string>> distinct;
    for (const auto& [id, kept] : plan_a.kept) distinct.insert(kept);
    CHECK(distinct.size() > 1);
}

TEST_CASE("masking marginals: per-feature retention within 3 points of the ratio") {
    auto schema = cohort::builtin::uk16();
    auto gen = cohort::synth_preset("null");
    gen.n = 5000;
    auto c = cohort::synth_cohort(gen, 6);
    double ratio = 0.5;
    auto plan = make_mask_plan(c, ratio, 77);
    std::map<std::string, size_t> kept_count;
    for (const auto& [id, kept] : plan.kept)
        for (const auto& name : kept) ++kept_count[name];
    for (const auto& f : schema.features) {
        double freq = static_cast<double>(kept_count[f.name]) / 5000.0;
        CHECK(std::abs(freq - ratio) <= 0.03);
    }
}

// ---------------------------------------------------------------------------
// Corpus emission
// ---------------------------------------------------------------------------

TEST_CASE("emit_corpus writes one json line per id and round-trips") {
    auto gen = cohort::synth_preset("strong-signal");
    gen.n = 100;
    auto c = cohort::synth_cohort(gen, 3);
    std::vector<std::string> ids;
    for (const auto& r : c.records) ids.push_back(r.patient_id);

    TempDir dir;
    std::string path = dir.path + "/corpus.jsonl";
    size_t count = emit_corpus(c, ids, TemplateKind::Text, path);
    CHECK(count == 100);
    auto corpus = load_corpus(path);
    REQUIRE(corpus.size() == 100);
    CHECK(corpus[0].instruction == kInstruction);
    CHECK(corpus[0].template_kind == TemplateKind::Text);

    // empty id set -> 0 lines, empty file
    std::string empty_path = dir.path + "/empty.jsonl";
    CHECK(emit_corpus(c, {}, TemplateKind::Text, empty_path) == 0);
    CHECK(std::filesystem::file_size(empty_path) == 0);

    // unwritable path
    CHECK_THROWS_AS(emit_corpus(c, ids, TemplateKind::Text, dir.path + "/nope/corpus.jsonl"),
                    IoError);
}

TEST_CASE("emitted line for the worked example parses back to an equal SftRecord") {
    auto schema = cohort::builtin::worked_example();
    auto record = cohort::fixtures::worked_example_record();
    auto sft = build_sft(record, schema, TemplateKind::Text);
    auto back = sft_from_json_line(sft_to_json_line(sft));
    CHECK(back == sft);
}

TEST_CASE("balanced corpus oversamples the minority class to parity") {
    auto gen = cohort::synth_preset("paper-analog");
    gen.n = 400;
    auto c = cohort::synth_cohort(gen, 5);
    std::vector<std::string> ids;
    for (const auto& r : c.records)
        if (r.label != Label::Unlabeled) ids.push_back(r.patient_id);
    auto corpus = build_corpus(c, ids, TemplateKind::Text, /*balance=*/true);
    size_t yes = 0, no = 0;
    for (const auto& s : corpus) (s.output == "Yes" ? yes : no)++;
    CHECK(yes == no);
}
