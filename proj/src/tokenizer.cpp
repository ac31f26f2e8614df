#include "camo/tokenizer.hpp"

#include <sstream>

namespace camo {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        check_input(!v.tokens_[i].empty(), "vocabulary: empty token at position " + std::to_string(i));
        check_input(v.tokens_[i].find_first_of(" \t\n\r") == std::string::npos,
                    "vocabulary: token contains whitespace: '" + v.tokens_[i] + "'");
        auto [it, inserted] = v.ids_.emplace(v.tokens_[i], static_cast<int>(i));
        check_input(inserted, "vocabulary: duplicate token '" + v.tokens_[i] + "'");
    }
    return v;
}

int Vocabulary::id(const std::string& tok) const {
    auto it = ids_.find(tok);
    check_input(it != ids_.end(), "vocabulary: unknown token '" + tok + "'");
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    check_input(id >= 0 && id < size(), "vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
}

std::vector<int> Vocabulary::encode_text(const std::string& text) const {
    return encode(split_words(text));
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

std::string Vocabulary::decode_text(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::string body;
    for (const auto& t : tokens_) {
        body += t;
        body += '\n';
    }
    write_text_file(path, body);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    const std::string body = read_text_file(path);
    std::vector<std::string> tokens;
    std::string line;
    std::istringstream is(body);
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

std::uint64_t Vocabulary::content_hash() const {
    Hasher h;
    for (const auto& t : tokens_) {
        h.update(t);
        h.update("\n");
    }
    return h.value();
}

}  // namespace camo
