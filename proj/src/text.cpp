#include "vlmforge/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vlmforge::text {

namespace {
bool is_detached_punct(char c) { return c == '.' || c == ',' || c == '?' || c == '!'; }
const char* kReservedTokens[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>", "<img>"};
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_detached_punct(c)) {
            flush();
            out.push_back(std::string(1, c));
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::string ngram_key(const std::vector<std::string>& tokens, int start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) key.push_back('\x1f');
        key += tokens[static_cast<size_t>(start + i)];
    }
    return key;
}

std::map<std::string, int> ngrams(const std::vector<std::string>& tokens, int n) {
    if (n <= 0) throw contract_error("ngrams: n must be >= 1, got " + std::to_string(n));
    std::map<std::string, int> out;
    const int len = static_cast<int>(tokens.size());
    for (int i = 0; i + n <= len; ++i) ++out[ngram_key(tokens, i, n)];
    return out;
}

Vocab::Vocab() {
    for (const char* t : kReservedTokens) push(t);
}

void Vocab::push(const std::string& tok) {
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(tok);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus) {
    if (corpus.empty()) throw contract_error("build_vocab: empty corpus");
    std::map<std::string, long> freq;
    for (const auto& sent : corpus)
        for (const auto& tok : sent) ++freq[tok];
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : items) {
        (void)n;
        if (!v.contains(tok)) v.push(tok);
    }
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int i) const {
    if (i < 0 || i >= size())
        throw core::index_error("vocab: id " + std::to_string(i) + " out of range [0, " +
                                std::to_string(size()) + ")");
    return id_to_token_[static_cast<size_t>(i)];
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("vocab: cannot write " + path);
    for (const auto& t : id_to_token_) f << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("vocab: cannot read " + path);
    Vocab v;
    std::string line;
    int idx = 0;
    while (std::getline(f, line)) {
        if (idx < kNumReserved) {
            if (line != kReservedTokens[idx])
                throw std::runtime_error("vocab: reserved slot " + std::to_string(idx) +
                                         " holds '" + line + "'");
        } else {
            v.push(line);
        }
        ++idx;
    }
    if (idx < kNumReserved) throw std::runtime_error("vocab: file too short: " + path);
    return v;
}

std::string Vocab::fingerprint() const {
    std::string blob;
    for (const auto& t : id_to_token_) {
        blob += t;
        blob.push_back('\n');
    }
    return fnv1a_hex(blob);
}

unsigned long long fnv1a(const void* data, size_t len, unsigned long long seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    unsigned long long h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string fnv1a_hex(const std::string& bytes) {
    unsigned long long h = fnv1a(bytes.data(), bytes.size());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace vlmforge::text
