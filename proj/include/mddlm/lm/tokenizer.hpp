#pragma once

#include <map>
#include <string>
#include <vector>

#include "mddlm/common.hpp"

namespace mddlm::lm {

/// Word-level tokenizer: ASCII-lowercased input split on whitespace; letter
/// runs form word tokens, digits tokenize per character, anything else is a
/// single-codepoint token. detokenize joins tokens with single spaces, so
/// detokenize(tokenize(s)) equals s up to that normalization (and is a fixed
/// point of it).
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    /// Normalization + splitting, shared by vocab building and encoding.
    static std::vector<std::string> split_tokens(const std::string& text);

    /// Frequency-ordered vocab over the given texts (specials first, then by
    /// descending count, ties lexicographic). Tokens below min_count drop.
    static Tokenizer build(const std::vector<std::string>& texts, size_t min_count = 1);

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    size_t vocab_size() const { return id_to_token_.size(); }
    int id_of(const std::string& token) const;
    const std::string& token_of(int id) const;

    /// One token per line; id = line number.
    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);

private:
    std::map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    void add_token(const std::string& token);
};

}  // namespace mddlm::lm
