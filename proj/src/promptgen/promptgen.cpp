#include "mddlm/promptgen/promptgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mddlm/cohort/io.hpp"

namespace mddlm::prompt {

using cohort::FeatureSpec;
using cohort::Label;
using cohort::Value;

const char* const kInstruction =
    "Predict if a patient has the major depressive disorder? Yes or no? Please answer with "
    "only yes or no and do not give any extra information.";

const char* const kNarrativeMetaPrompt =
    "Rewrite the following patient profile as a single natural-language paragraph. Keep every "
    "numeric value exactly as written and mention every stated fact once.\n\n";

const char* const kNarrativeFallbackVersion = "narrative-fallback/v1";

std::string to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::List: return "list";
        case TemplateKind::Text: return "text";
        case TemplateKind::Narrative: return "narrative";
    }
    return "text";
}

TemplateKind template_from_string(const std::string& s) {
    if (s == "list") return TemplateKind::List;
    if (s == "text") return TemplateKind::Text;
    if (s == "narrative") return TemplateKind::Narrative;
    throw ConfigError("unknown template kind: " + s);
}

namespace {

std::string display_name(const FeatureSpec& f) {
    return f.list_label.empty() ? f.name : f.list_label;
}

/// Canonical value surface: the ingested numeric literal, or the category's
/// list text.
std::string value_surface(const FeatureSpec& f, const Value& v) {
    if (f.is_numeric()) return v.numeric_literal();
    const auto* c = f.find_category(v.text);
    return c ? c->list() : v.text;
}

std::string substitute_value(const std::string& phrase, const std::string& value) {
    std::string out = phrase;
    size_t at = out.find("{v}");
    if (at != std::string::npos) out.replace(at, 3, value);
    return out;
}

}  // namespace

RenderResult render_list_full(const Record& record, const Schema& schema) {
    record.validate(schema);
    std::vector<const FeatureSpec*> order;
    if (schema.list_order.empty()) {
        for (const auto& f : schema.features)
            if (!f.list_label.empty()) order.push_back(&f);
    } else {
        for (const auto& name : schema.list_order) order.push_back(schema.find(name));
    }
    RenderResult out;
    for (const FeatureSpec* f : order) {
        const Value& v = record.get(f->name);
        if (v.is_missing()) continue;
        if (!out.text.empty()) out.text += ", ";
        out.text += display_name(*f);
        out.text += ": ";
        out.text += value_surface(*f, v);
        if (f->is_numeric()) out.text += f->list_suffix;
    }
    if (out.text.empty()) {
        out.warnings.push_back("empty input: all features missing");
    } else {
        out.text += ".";
    }
    return out;
}

RenderResult render_text_full(const Record& record, const Schema& schema) {
    record.validate(schema);
    RenderResult out;
    for (const auto& f : schema.features) {
        const Value& v = record.get(f.name);
        if (v.is_missing()) continue;
        std::string fragment;
        if (f.is_numeric()) {
            fragment = substitute_value(f.phrase.empty() ? f.name + " is {v}" : f.phrase,
                                        v.numeric_literal());
        } else {
            const auto* c = f.find_category(v.text);
            fragment = (c && !c->text_fragment.empty())
                           ? c->text_fragment
                           : f.name + " is " + value_surface(f, v);
        }
        if (!out.text.empty()) out.text += f.text_sep.empty() ? ", " : f.text_sep;
        out.text += fragment;
    }
    if (out.text.empty())
        out.warnings.push_back("empty input: all features missing");
    else
        out.text += schema.text_suffix;
    return out;
}

std::string canonical_record_string(const Record& record, const Schema& schema) {
    std::string out;
    for (const auto& f : schema.features) {
        const Value& v = record.get(f.name);
        if (v.is_missing()) continue;
        out += f.name;
        out += " = ";
        out += f.is_numeric() ? v.numeric_literal() : v.text;
        out += "\n";
    }
    return out;
}

namespace {

std::string fallback_narrative(const Record& record, const Schema& schema) {
    // Frozen deterministic paraphrase (kNarrativeFallbackVersion). Every
    // present value appears verbatim via value_surface.
    std::string out = "This is a descriptive summary of one individual.";
    for (const auto& f : schema.features) {
        const Value& v = record.get(f.name);
        if (v.is_missing()) continue;
        out += " The ";
        std::string label = display_name(f);
        std::transform(label.begin(), label.end(), label.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        out += label;
        if (f.is_numeric()) {
            out += " value is ";
            out += v.numeric_literal();
            if (!f.unit.empty()) {
                out += " ";
                out += f.unit;
            }
        } else {
            out += " is reported as ";
            out += value_surface(f, v);
        }
        out += ".";
    }
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Numeric values must appear as their exact literal; categorical values
/// count as covered by any of their surfaces (fragment, list text, or code),
/// case-insensitively.
std::vector<std::string> missing_values_in(const std::string& text, const Record& record,
                                           const Schema& schema) {
    std::string haystack = lower(text);
    std::vector<std::string> absent;
    for (const auto& f : schema.features) {
        const Value& v = record.get(f.name);
        if (v.is_missing()) continue;
        bool covered = false;
        if (f.is_numeric()) {
            covered = text.find(v.numeric_literal()) != std::string::npos;
        } else {
            const auto* c = f.find_category(v.text);
            std::vector<std::string> surfaces{v.text};
            if (c) {
                surfaces.push_back(c->list());
                if (!c->text_fragment.empty()) surfaces.push_back(c->text_fragment);
            }
            for (const auto& s : surfaces)
                covered |= haystack.find(lower(s)) != std::string::npos;
        }
        if (!covered) absent.push_back(display_name(f));
    }
    return absent;
}

}  // namespace

uint64_t narrative_cache_key(const Record& record, const Schema& schema,
                             const std::string& model_name) {
    uint64_t h = fnv1a64(canonical_record_string(record, schema));
    h = fnv1a64(kNarrativeMetaPrompt, h);
    h = fnv1a64(model_name, h);
    return h;
}

NarrativeCache::NarrativeCache(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

namespace {
std::string key_path(const std::string& dir, uint64_t key) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx.json", static_cast<unsigned long long>(key));
    return dir + "/" + buf;
}
}  // namespace

std::optional<RenderResult> NarrativeCache::get(uint64_t key) const {
    std::string path = key_path(dir_, key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    nlohmann::json j = nlohmann::json::parse(cohort::read_file(path));
    RenderResult r;
    r.text = j.at("text").get<std::string>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
}

void NarrativeCache::put(uint64_t key, const RenderResult& result) const {
    nlohmann::json j{{"text", result.text}, {"warnings", result.warnings}};
    cohort::write_file(key_path(dir_, key), j.dump(2));
}

RenderResult render_narrative_full(const Record& record, const Schema& schema,
                                   NarrativeClient* client, const NarrativeCache* cache) {
    record.validate(schema);
    if (!client) {
        RenderResult out;
        out.text = fallback_narrative(record, schema);
        if (out.text.empty()) out.warnings.push_back("empty input: all features missing");
        return out;
    }
    uint64_t key = narrative_cache_key(record, schema, client->model_name());
    if (cache) {
        if (auto hit = cache->get(key)) return *hit;
    }
    RenderResult out;
    out.text = client->complete(kNarrativeMetaPrompt + render_text(record, schema));
    for (const auto& feature : missing_values_in(out.text, record, schema))
        out.warnings.push_back("paraphrase omits value of " + feature);
    if (cache) cache->put(key, out);
    return out;
}

std::string render_list(const Record& record, const Schema& schema) {
    return render_list_full(record, schema).text;
}

std::string render_text(const Record& record, const Schema& schema) {
    return render_text_full(record, schema).text;
}

std::string render_narrative(const Record& record, const Schema& schema, NarrativeClient* client,
                             const NarrativeCache* cache) {
    return render_narrative_full(record, schema, client, cache).text;
}

std::string render(const Record& record, const Schema& schema, TemplateKind kind,
                   NarrativeClient* client, const NarrativeCache* cache) {
    switch (kind) {
        case TemplateKind::List: return render_list(record, schema);
        case TemplateKind::Text: return render_text(record, schema);
        case TemplateKind::Narrative: return render_narrative(record, schema, client, cache);
    }
    return {};
}

SftRecord build_sft(const Record& record, const Schema& schema, TemplateKind kind,
                    NarrativeClient* client, const NarrativeCache* cache,
                    std::vector<std::string>* warnings) {
    if (record.label == Label::Unlabeled)
        throw DataError("build_sft: record " + record.patient_id + " is unlabeled");
    RenderResult rendered;
    switch (kind) {
        case TemplateKind::List: rendered = render_list_full(record, schema); break;
        case TemplateKind::Text: rendered = render_text_full(record, schema); break;
        case TemplateKind::Narrative:
            rendered = render_narrative_full(record, schema, client, cache);
            break;
    }
    if (warnings)
        warnings->insert(warnings->end(), rendered.warnings.begin(), rendered.warnings.end());
    SftRecord sft;
    sft.instruction = kInstruction;
    sft.input = std::move(rendered.text);
    sft.output = record.label == Label::MDD ? "Yes" : "No";
    sft.patient_id = record.patient_id;
    sft.template_kind = kind;
    return sft;
}

std::string assemble_prompt(const std::string& instruction, const std::string& input) {
    return instruction + "\n" + input + "\nAnswer:";
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

namespace {

/// Retained feature indices for one record: ceil(retain_ratio * k) indices
/// sampled without replacement, seeded by (seed, patient_id).
std::vector<bool> retained_set(size_t k, double retain_ratio, uint64_t seed,
                               const std::string& patient_id) {
    if (retain_ratio <= 0.0 || retain_ratio > 1.0)
        throw ConfigError("mask_features: retain_ratio outside (0,1]");
    size_t keep = static_cast<size_t>(std::ceil(retain_ratio * static_cast<double>(k)));
    std::vector<bool> kept(k, keep >= k);
    if (keep >= k) return kept;

    Rng rng(derive_seed(derive_seed(seed, "mask"), fnv1a64(patient_id)));
    std::vector<size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `keep` entries are the retained set.
    for (size_t i = 0; i < keep; ++i) {
        size_t j = i + static_cast<size_t>(rng.uniform_int(k - i));
        std::swap(idx[i], idx[j]);
        kept[idx[i]] = true;
    }
    return kept;
}

}  // namespace

Record mask_features(const Record& record, const Schema& schema, double retain_ratio,
                     uint64_t seed) {
    size_t k = schema.features.size();
    auto kept = retained_set(k, retain_ratio, seed, record.patient_id);
    Record out = record;
    for (size_t i = 0; i < k; ++i)
        if (!kept[i]) out.set(schema.features[i].name, Value::missing());
    return out;
}

MaskPlan make_mask_plan(const Cohort& cohort, double retain_ratio, uint64_t seed) {
    MaskPlan plan;
    plan.retain_ratio = retain_ratio;
    plan.seed = seed;
    size_t k = cohort.schema.features.size();
    for (const auto& r : cohort.records) {
        auto kept = retained_set(k, retain_ratio, seed, r.patient_id);
        std::vector<std::string> names;
        for (size_t i = 0; i < k; ++i)
            if (kept[i]) names.push_back(cohort.schema.features[i].name);
        plan.kept[r.patient_id] = std::move(names);
    }
    return plan;
}

Cohort apply_mask(const Cohort& cohort, double retain_ratio, uint64_t seed) {
    Cohort out = cohort;
    for (auto& r : out.records) r = mask_features(r, cohort.schema, retain_ratio, seed);
    out.oracle_scores.clear();
    return out;
}

// ---------------------------------------------------------------------------
// Corpus I/O
// ---------------------------------------------------------------------------

std::string sft_to_json_line(const SftRecord& record) {
    nlohmann::json j{{"instruction", record.instruction},
                     {"input", record.input},
                     {"output", record.output},
                     {"patient_id", record.patient_id},
                     {"template", to_string(record.template_kind)}};
    return j.dump();
}

SftRecord sft_from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    SftRecord r;
    r.instruction = j.at("instruction").get<std::string>();
    r.input = j.at("input").get<std::string>();
    r.output = j.at("output").get<std::string>();
    r.patient_id = j.at("patient_id").get<std::string>();
    r.template_kind = template_from_string(j.at("template").get<std::string>());
    return r;
}

std::vector<SftRecord> build_corpus(const Cohort& cohort, const std::vector<std::string>& ids,
                                    TemplateKind kind, bool balance, NarrativeClient* client,
                                    const NarrativeCache* cache) {
    std::map<std::string, const Record*> by_id;
    for (const auto& r : cohort.records) by_id[r.patient_id] = &r;

    std::vector<SftRecord> corpus;
    size_t n_yes = 0, n_no = 0;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("corpus id not in cohort: " + id);
        corpus.push_back(build_sft(*it->second, cohort.schema, kind, client, cache));
        (corpus.back().output == "Yes" ? n_yes : n_no)++;
    }
    if (balance && n_yes > 0 && n_no > 0 && n_yes != n_no) {
        bool minority_yes = n_yes < n_no;
        size_t have = minority_yes ? n_yes : n_no;
        size_t want = minority_yes ? n_no : n_yes;
        std::vector<const SftRecord*> minority;
        for (const auto& r : corpus)
            if ((r.output == "Yes") == minority_yes) minority.push_back(&r);
        std::vector<SftRecord> extra;
        for (size_t i = 0; have + extra.size() < want; ++i)
            extra.push_back(*minority[i % minority.size()]);
        corpus.insert(corpus.end(), extra.begin(), extra.end());
    }
    return corpus;
}

size_t emit_corpus(const Cohort& cohort, const std::vector<std::string>& ids, TemplateKind kind,
                   const std::string& path, NarrativeClient* client,
                   const NarrativeCache* cache) {
    auto corpus = build_corpus(cohort, ids, kind, /*balance=*/false, client, cache);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file " + path);
    for (const auto& r : corpus) out << sft_to_json_line(r) << "\n";
    if (!out) throw IoError("corpus write failed for " + path);
    return corpus.size();
}

std::vector<SftRecord> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file " + path);
    std::vector<SftRecord> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        corpus.push_back(sft_from_json_line(line));
    }
    return corpus;
}

}  // namespace mddlm::prompt
