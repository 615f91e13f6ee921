#include "mddlm/lm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace mddlm::lm {

namespace {
const char* kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_ascii_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
}  // namespace

std::vector<std::string> Tokenizer::split_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
        } else if (is_ascii_letter(c)) {
            std::string word;
            while (i < text.size() && is_ascii_letter(static_cast<unsigned char>(text[i]))) {
                word += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
                ++i;
            }
            tokens.push_back(std::move(word));
        } else if (is_ascii_digit(c)) {
            tokens.push_back(std::string(1, static_cast<char>(c)));
            ++i;
        } else if (c < 0x80) {
            tokens.push_back(std::string(1, static_cast<char>(c)));
            ++i;
        } else {
            // One UTF-8 codepoint: lead byte plus continuation bytes.
            std::string cp(1, static_cast<char>(c));
            ++i;
            while (i < text.size() && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) {
                cp += text[i];
                ++i;
            }
            tokens.push_back(std::move(cp));
        }
    }
    return tokens;
}

void Tokenizer::add_token(const std::string& token) {
    if (token_to_id_.count(token)) throw ConfigError("duplicate vocab token: " + token);
    token_to_id_[token] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, size_t min_count) {
    std::map<std::string, size_t> counts;
    for (const auto& t : texts)
        for (auto& token : split_tokens(t)) ++counts[token];
    if (counts.empty()) throw DataError("Tokenizer::build: empty corpus");

    std::vector<std::pair<std::string, size_t>> ordered(counts.begin(), counts.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Tokenizer tok;
    for (const char* s : kSpecialNames) tok.add_token(s);
    for (const auto& [token, count] : ordered)
        if (count >= min_count) tok.add_token(token);
    return tok;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    if (id_to_token_.empty()) throw ConfigError("Tokenizer: empty vocab");
    std::vector<int> ids;
    for (const auto& token : split_tokens(text)) {
        auto it = token_to_id_.find(token);
        ids.push_back(it == token_to_id_.end() ? kUnk : it->second);
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty()) out += ' ';
        out += token_of(id);
    }
    return out;
}

int Tokenizer::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Tokenizer::token_of(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size())
        throw DataError("token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<size_t>(id)];
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab file " + path);
    for (const auto& t : id_to_token_) out << t << "\n";
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file " + path);
    Tokenizer tok;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tok.add_token(line);
    }
    if (tok.vocab_size() < 4) throw DataError("vocab file too small: " + path);
    return tok;
}

}  // namespace mddlm::lm
