#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::prompt {

using cohort::Cohort;
using cohort::Record;
using cohort::Schema;

enum class TemplateKind { List, Text, Narrative };

std::string to_string(TemplateKind kind);
TemplateKind template_from_string(const std::string& s);

/// The fixed system prompt every fine-tuning triple carries.
extern const char* const kInstruction;

/// Meta-prompt prefix for remote narrative generation; the rendered Text
/// Template is appended.
extern const char* const kNarrativeMetaPrompt;

/// Version tag of the built-in deterministic narrative template.
extern const char* const kNarrativeFallbackVersion;

struct SftRecord {
    std::string instruction;
    std::string input;
    std::string output;  // "Yes" | "No"
    std::string patient_id;
    TemplateKind template_kind = TemplateKind::Text;

    bool operator==(const SftRecord&) const = default;
};

struct RenderResult {
    std::string text;
    std::vector<std::string> warnings;
};

/// Chat backend seam for the Narrative template. Implementations live in the
/// backends module; tests inject canned responses.
class NarrativeClient {
public:
    virtual ~NarrativeClient() = default;
    virtual std::string complete(const std::string& meta_prompt) = 0;
    virtual std::string model_name() const = 0;
};

/// Content-addressed on-disk cache for narrative paraphrases. Key covers the
/// record's canonical form, the meta-prompt, and the model name.
class NarrativeCache {
public:
    explicit NarrativeCache(std::string dir);
    std::optional<RenderResult> get(uint64_t key) const;
    void put(uint64_t key, const RenderResult& result) const;

private:
    std::string dir_;
};

uint64_t narrative_cache_key(const Record& record, const Schema& schema,
                             const std::string& model_name);

/// Schema-ordered "name = value" lines for the present features; the stable
/// form hashed by caches.
std::string canonical_record_string(const Record& record, const Schema& schema);

// The three template renderers. All are deterministic given their inputs;
// Missing features are omitted.
RenderResult render_list_full(const Record& record, const Schema& schema);
RenderResult render_text_full(const Record& record, const Schema& schema);
RenderResult render_narrative_full(const Record& record, const Schema& schema,
                                   NarrativeClient* client = nullptr,
                                   const NarrativeCache* cache = nullptr);

std::string render_list(const Record& record, const Schema& schema);
std::string render_text(const Record& record, const Schema& schema);
std::string render_narrative(const Record& record, const Schema& schema,
                             NarrativeClient* client = nullptr,
                             const NarrativeCache* cache = nullptr);

std::string render(const Record& record, const Schema& schema, TemplateKind kind,
                   NarrativeClient* client = nullptr, const NarrativeCache* cache = nullptr);

/// instruction/input/output triple for a labeled record.
SftRecord build_sft(const Record& record, const Schema& schema, TemplateKind kind,
                    NarrativeClient* client = nullptr, const NarrativeCache* cache = nullptr,
                    std::vector<std::string>* warnings = nullptr);

/// Prompt layout used for training sequences and classification:
/// instruction, input, and a trailing answer cue.
std::string assemble_prompt(const std::string& instruction, const std::string& input);

// ---------------------------------------------------------------------------
// Feature-retention masking
// ---------------------------------------------------------------------------

struct MaskPlan {
    double retain_ratio = 1.0;
    uint64_t seed = 0;
    std::map<std::string, std::vector<std::string>> kept;  // patient_id -> feature names
};

/// Keeps ceil(retain_ratio * k) uniformly sampled features (seeded by
/// (seed, patient_id)); the rest become Missing. Label untouched.
Record mask_features(const Record& record, const Schema& schema, double retain_ratio,
                     uint64_t seed);

MaskPlan make_mask_plan(const Cohort& cohort, double retain_ratio, uint64_t seed);
Cohort apply_mask(const Cohort& cohort, double retain_ratio, uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus files: UTF-8 JSON lines with keys instruction/input/output/
// patient_id/template.
// ---------------------------------------------------------------------------

std::string sft_to_json_line(const SftRecord& record);
SftRecord sft_from_json_line(const std::string& line);

/// Writes one line per id (in the given order); returns the count written.
size_t emit_corpus(const Cohort& cohort, const std::vector<std::string>& ids, TemplateKind kind,
                   const std::string& path, NarrativeClient* client = nullptr,
                   const NarrativeCache* cache = nullptr);

std::vector<SftRecord> load_corpus(const std::string& path);

/// Build in-memory corpus for the given ids; optionally oversamples the
/// minority class to a 1:1 ratio by repeating records (deterministic order).
std::vector<SftRecord> build_corpus(const Cohort& cohort, const std::vector<std::string>& ids,
                                    TemplateKind kind, bool balance = false,
                                    NarrativeClient* client = nullptr,
                                    const NarrativeCache* cache = nullptr);

}  // namespace mddlm::prompt
