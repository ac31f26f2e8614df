#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "camo/common.hpp"

namespace camo {

// Word-level vocabulary: token ids are positions in the token list.
// Whitespace is the only delimiter; there is no unknown-token fallback, so
// encode() rejects words outside the vocabulary.
class Vocabulary {
public:
    Vocabulary() = default;
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
    int id(const std::string& tok) const;
    const std::string& token(int id) const;

    std::vector<int> encode(const std::vector<std::string>& words) const;
    std::vector<int> encode_text(const std::string& text) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;
    std::string decode_text(const std::vector<int>& ids) const;

    void save(const std::filesystem::path& path) const;  // one token per line
    static Vocabulary load(const std::filesystem::path& path);

    std::uint64_t content_hash() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_words(const std::string& text);

}  // namespace camo
