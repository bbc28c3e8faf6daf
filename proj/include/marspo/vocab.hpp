#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace marspo {

// Token space of the desk-scale policy. Reserved symbols always occupy the
// first three slots: begin, end, unknown.
struct TokenVocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;

    static constexpr int kBegin = 0;
    static constexpr int kEnd = 1;
    static constexpr int kUnk = 2;

    int size() const { return static_cast<int>(tokens.size()); }

    // Builds a vocab from the non-reserved tokens, prepending the reserved
    // symbols. Duplicate or reserved-colliding tokens raise.
    static TokenVocab build(const std::vector<std::string>& words);
};

// Whitespace/character hybrid tokenizer: whole words when known, per-character
// fallback otherwise, and the unknown symbol as a last resort. Training data
// must never contain unknowns, so callers pass allow_unknown=false there.
std::vector<int> tokenize(const TokenVocab& vocab, const std::string& text, bool allow_unknown);

// Joins tokens with single spaces; reserved symbols are skipped.
std::string detokenize(const TokenVocab& vocab, const std::vector<int>& ids);

// Vocabulary for the synthetic modular-sum task: number tokens "0".."97",
// the question/answer scaffold words, and filler tokens for sloppy styles.
TokenVocab mod97_vocab();

// Replaces every "{question}" placeholder.
std::string render_prompt(const std::string& template_text, const std::string& question);

}  // namespace marspo
