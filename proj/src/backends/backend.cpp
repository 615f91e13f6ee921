#include "mddlm/backends/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace mddlm::backends {

const char* const kRationaleInstruction =
    "Explain the reasoning behind this prediction and provide the probability of that "
    "determination.";

ClassScore classify_from_logliks(double ll_yes, double ll_no, const std::string& source) {
    if (!std::isfinite(ll_yes) || !std::isfinite(ll_no))
        throw DataError("classify: non-finite log-likelihood");
    ClassScore s;
    s.loglik_yes = ll_yes;
    s.loglik_no = ll_no;
    s.source = source;
    double m = std::max(ll_yes, ll_no);
    double ey = std::exp(ll_yes - m);
    double en = std::exp(ll_no - m);
    s.p_yes = ey / (ey + en);
    s.p_no = en / (ey + en);
    return s;
}

ClassScore classify(Backend& backend, const std::string& prompt, const Verbalizer& verbalizer) {
    if (!backend.capabilities().token_logprobs)
        throw ConfigError("backend " + backend.id() +
                          " lacks token-logprob support; cannot classify");
    double ll_yes = backend.sequence_loglik(prompt, verbalizer.yes);
    double ll_no = backend.sequence_loglik(prompt, verbalizer.no);
    return classify_from_logliks(ll_yes, ll_no, backend.id());
}

std::optional<double> parse_probability_literal(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        // "0.NN" style
        if (text[i] == '0' && i + 2 < text.size() && text[i + 1] == '.' &&
            std::isdigit(static_cast<unsigned char>(text[i + 2]))) {
            size_t end = i + 2;
            while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end])))
                ++end;
            double v;
            if (parse_double(text.substr(i, end - i), v) && v >= 0.0 && v <= 1.0) return v;
            i = end;
            continue;
        }
        // "NN%" style (integer or decimal percentage)
        size_t end = i;
        while (end < text.size() && (std::isdigit(static_cast<unsigned char>(text[end])) ||
                                     text[end] == '.'))
            ++end;
        size_t after = end;
        while (after < text.size() && text[after] == ' ') ++after;
        if (after < text.size() && text[after] == '%') {
            double v;
            if (parse_double(text.substr(i, end - i), v) && v >= 0.0 && v <= 100.0)
                return v / 100.0;
        }
        i = end;
    }
    return std::nullopt;
}

RationaleResult classify_with_rationale(Backend& backend, const std::string& prompt,
                                        const Verbalizer& verbalizer, int max_new) {
    if (!backend.capabilities().free_text)
        throw ConfigError("backend " + backend.id() + " does not support free-text generation");
    RationaleResult out;
    out.score = classify(backend, prompt, verbalizer);
    out.rationale.prediction = out.score.p_yes >= 0.5 ? verbalizer.yes : verbalizer.no;
    std::string follow_up =
        prompt + " " + out.rationale.prediction + "\n" + kRationaleInstruction + "\n";
    try {
        out.rationale.free_text = backend.generate(follow_up, max_new);
        out.rationale.parsed_probability = parse_probability_literal(out.rationale.free_text);
    } catch (const std::exception& e) {
        out.warnings.push_back(std::string("rationale generation failed: ") + e.what());
        out.rationale.free_text.clear();
        out.rationale.parsed_probability = std::nullopt;
    }
    return out;
}

}  // namespace mddlm::backends
