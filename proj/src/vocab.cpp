#include "marspo/vocab.hpp"

#include <cctype>
#include <stdexcept>

namespace marspo {

TokenVocab TokenVocab::build(const std::vector<std::string>& words) {
    TokenVocab v;
    v.tokens = {"<s>", "</s>", "<unk>"};
    for (const auto& w : words) v.tokens.push_back(w);
    for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
        if (!v.index.emplace(v.tokens[i], i).second) {
            throw std::runtime_error("duplicate token in vocab: " + v.tokens[i]);
        }
    }
    return v;
}

std::vector<int> tokenize(const TokenVocab& vocab, const std::string& text, bool allow_unknown) {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        const std::string word = text.substr(i, j - i);
        i = j;

        auto it = vocab.index.find(word);
        if (it != vocab.index.end()) {
            out.push_back(it->second);
            continue;
        }
        // Character fallback: only if every character is itself a token.
        bool all_chars_known = true;
        std::vector<int> chars;
        for (char c : word) {
            auto cit = vocab.index.find(std::string(1, c));
            if (cit == vocab.index.end()) {
                all_chars_known = false;
                break;
            }
            chars.push_back(cit->second);
        }
        if (all_chars_known) {
            out.insert(out.end(), chars.begin(), chars.end());
        } else if (allow_unknown) {
            out.push_back(TokenVocab::kUnk);
        } else {
            throw std::runtime_error("out-of-vocab token in training text: " + word);
        }
    }
    return out;
}

std::string detokenize(const TokenVocab& vocab, const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (id == TokenVocab::kBegin || id == TokenVocab::kEnd || id == TokenVocab::kUnk) continue;
        if (id < 0 || id >= vocab.size()) throw std::runtime_error("token id out of range");
        if (!out.empty()) out.push_back(' ');
        out += vocab.tokens[static_cast<std::size_t>(id)];
    }
    return out;
}

TokenVocab mod97_vocab() {
    std::vector<std::string> words;
    for (int i = 0; i <= 97; ++i) words.push_back(std::to_string(i));
    for (const char* w : {"compute", "what", "is", "the", "sum", "mod", ":", "Answer:",
                          "hmm", "uh", "so", "well", "then"}) {
        words.push_back(w);
    }
    return TokenVocab::build(words);
}

std::string render_prompt(const std::string& template_text, const std::string& question) {
    static const std::string kHole = "{question}";
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto at = template_text.find(kHole, pos);
        if (at == std::string::npos) {
            out += template_text.substr(pos);
            break;
        }
        out += template_text.substr(pos, at - pos);
        out += question;
        pos = at + kHole.size();
    }
    return out;
}

}  // namespace marspo
