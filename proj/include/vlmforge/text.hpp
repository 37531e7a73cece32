#pragma once

// Tokenization, vocabulary management and n-gram extraction, shared by the
// caption decoder and every text metric. The tokenizer is deliberately plain:
// lowercase, whitespace split, with . , ? ! detached as standalone tokens.

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlmforge/tensor.hpp"

namespace vlmforge::text {

using core::contract_error;

// Reserved ids, fixed for every vocabulary.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kImg = 4;
inline constexpr int kNumReserved = 5;

std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Contiguous n-grams with multiplicity. Keys are the joined tokens with a
// '\x1f' separator so the map stays order-deterministic.
std::map<std::string, int> ngrams(const std::vector<std::string>& tokens, int n);
std::string ngram_key(const std::vector<std::string>& tokens, int start, int n);

class Vocab {
  public:
    Vocab();  // reserved entries only

    // Deterministic ordering: frequency descending, then lexicographic.
    static Vocab build(const std::vector<std::vector<std::string>>& corpus);

    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    // One token per line, line number == id.
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);
    std::string fingerprint() const;  // fnv-1a over the serialized form

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    void push(const std::string& tok);
};

// 64-bit FNV-1a, used for vocab/config/parameter fingerprints.
unsigned long long fnv1a(const void* data, size_t len, unsigned long long seed = 1469598103934665603ull);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace vlmforge::text
