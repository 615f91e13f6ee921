#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mddlm/common.hpp"

namespace mddlm::backends {

/// Normalized class probability from the two verbalization log-likelihoods.
struct ClassScore {
    double p_yes = 0.5;
    double p_no = 0.5;
    double loglik_yes = 0;
    double loglik_no = 0;
    std::string source;
};

struct Rationale {
    std::string prediction;  // "Yes" | "No"
    std::string free_text;
    std::optional<double> parsed_probability;
};

struct Capabilities {
    bool token_logprobs = false;
    bool free_text = false;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual Capabilities capabilities() const = 0;
    /// Sum over continuation tokens of log p(token | prefix), teacher forced.
    virtual double sequence_loglik(const std::string& prompt,
                                   const std::string& continuation) = 0;
    /// Free-text continuation; throws when the backend cannot generate.
    virtual std::string generate(const std::string& prompt, int max_new) = 0;
};

struct Verbalizer {
    std::string yes = "Yes";
    std::string no = "No";
};

/// Log-space normalization across the two classes: invariant to any common
/// shift of the log-likelihoods.
ClassScore classify_from_logliks(double ll_yes, double ll_no, const std::string& source);

ClassScore classify(Backend& backend, const std::string& prompt, const Verbalizer& verbalizer = {});

struct RationaleResult {
    ClassScore score;
    Rationale rationale;
    std::vector<std::string> warnings;
};

/// classify, then a follow-up instruction requesting an explanation. The
/// likelihood-based score is never overridden by the verbalized probability.
RationaleResult classify_with_rationale(Backend& backend, const std::string& prompt,
                                        const Verbalizer& verbalizer = {}, int max_new = 64);

/// Extracts the first "NN%" or "0.NN" literal, if any.
std::optional<double> parse_probability_literal(const std::string& text);

extern const char* const kRationaleInstruction;

}  // namespace mddlm::backends
