#include "vlmforge/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace vlmforge::metrics {

void Box::validate() const {
    if (x0 > x1 || y0 > y1)
        throw contract_error("box: inverted corners (" + std::to_string(x0) + "," +
                             std::to_string(y0) + "," + std::to_string(x1) + "," +
                             std::to_string(y1) + ")");
}

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n) {
    if (references.empty()) throw contract_error("bleu: empty reference set");
    const long c_len = static_cast<long>(candidate.size());
    if (c_len == 0) return 0.0;

    // closest reference length, ties to the shorter reference
    long r_len = static_cast<long>(references[0].size());
    for (const auto& r : references) {
        const long rl = static_cast<long>(r.size());
        const long d_new = std::labs(rl - c_len), d_old = std::labs(r_len - c_len);
        if (d_new < d_old || (d_new == d_old && rl < r_len)) r_len = rl;
    }

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cand = text::ngrams(candidate, n);
        long total = 0, clipped = 0;
        for (const auto& [key, cnt] : cand) total += cnt;
        if (total == 0) return 0.0;  // candidate shorter than n
        std::map<std::string, int> max_ref;
        for (const auto& r : references)
            for (const auto& [key, cnt] : text::ngrams(r, n))
                max_ref[key] = std::max(max_ref[key], cnt);
        for (const auto& [key, cnt] : cand) {
            auto it = max_ref.find(key);
            if (it != max_ref.end()) clipped += std::min(cnt, it->second);
        }
        if (clipped == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }
    const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / c_len);
    return bp * std::exp(log_sum / max_n);
}

namespace {

long lcs_length(const Tokens& a, const Tokens& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<long> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[m];
}

}  // namespace

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
    if (references.empty()) throw contract_error("rouge_l: empty reference set");
    double best = 0.0;
    for (const auto& ref : references) {
        if (candidate.empty() || ref.empty()) continue;
        const double lcs = static_cast<double>(lcs_length(candidate, ref));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(candidate.size());
        const double r = lcs / static_cast<double>(ref.size());
        best = std::max(best, 2.0 * p * r / (p + r));
    }
    return best;
}

CiderIdf CiderIdf::build(const std::vector<Tokens>& reference_corpus, int max_n) {
    CiderIdf idf;
    idf.num_docs = static_cast<long>(reference_corpus.size());
    for (const auto& doc : reference_corpus)
        for (int n = 1; n <= max_n; ++n)
            for (const auto& [key, cnt] : text::ngrams(doc, n)) {
                (void)cnt;
                ++idf.df[n - 1][key];
            }
    return idf;
}

namespace {

std::map<std::string, double> tfidf_vector(const Tokens& tokens, int n, const CiderIdf& idf) {
    std::map<std::string, double> vec;
    for (const auto& [key, cnt] : text::ngrams(tokens, n)) {
        auto it = idf.df[n - 1].find(key);
        const long df = it == idf.df[n - 1].end() ? 0 : it->second;
        const double w = df > 0 ? std::log(static_cast<double>(idf.num_docs) / df) : 0.0;
        vec[key] = cnt * w;
    }
    return vec;
}

double cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [k, v] : a) {
        na += v * v;
        auto it = b.find(k);
        if (it != b.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : b) {
        (void)k;
        nb += v * v;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cider(const Tokens& candidate, const std::vector<Tokens>& references,
             const CiderIdf& idf, int max_n) {
    if (references.empty()) throw contract_error("cider: empty reference set");
    if (idf.num_docs == 0) throw contract_error("cider: empty IDF corpus");
    const double wn = 1.0 / max_n;
    double total = 0.0;
    for (const auto& ref : references) {
        for (int n = 1; n <= max_n; ++n) {
            const auto gc = tfidf_vector(candidate, n, idf);
            const auto gr = tfidf_vector(ref, n, idf);
            total += wn * cosine(gc, gr);
        }
    }
    return total / static_cast<double>(references.size());
}

RetrievalResult recall_at_k(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<int>>& gold_sets, int k) {
    if (k < 1) throw contract_error("recall_at_k: K must be >= 1");
    if (scores.size() != gold_sets.size())
        throw contract_error("recall_at_k: query/gold count mismatch");
    RetrievalResult res;
    for (size_t q = 0; q < scores.size(); ++q) {
        const auto& row = scores[q];
        const auto& gold = gold_sets[q];
        if (gold.empty())
            throw contract_error("recall_at_k: query " + std::to_string(q) + " has empty gold set");
        const int g = static_cast<int>(row.size());
        for (int idx : gold)
            if (idx < 0 || idx >= g)
                throw index_error("recall_at_k: gold index " + std::to_string(idx) +
                                  " out of range [0, " + std::to_string(g) + ")");
        // rank of item j = 1 + #{i : score_i > score_j or (==, i < j)}
        int best_rank = g + 1;
        for (int j : gold) {
            int rank = 1;
            for (int i = 0; i < g; ++i) {
                if (i == j) continue;
                if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(j)] ||
                    (row[static_cast<size_t>(i)] == row[static_cast<size_t>(j)] && i < j))
                    ++rank;
            }
            best_rank = std::min(best_rank, rank);
        }
        res.ranks.push_back(best_rank);
    }
    long hits = 0;
    for (int r : res.ranks)
        if (r <= k) ++hits;
    res.recall = static_cast<double>(hits) / static_cast<double>(res.ranks.size());
    std::vector<int> sorted = res.ranks;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    res.median_rank = n % 2 == 1 ? sorted[n / 2]
                                 : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return res;
}

std::string normalize_answer(const std::string& answer) {
    std::string out;
    bool pending_space = false;
    for (char raw : answer) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else if (std::ispunct(static_cast<unsigned char>(c))) {
            continue;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

double vqa_soft_accuracy(const std::string& prediction,
                         const std::vector<std::string>& human_answers) {
    if (human_answers.size() != 10)
        throw contract_error("vqa_soft_accuracy: expected 10 human answers, got " +
                             std::to_string(human_answers.size()));
    const std::string pred = normalize_answer(prediction);
    int matches = 0;
    for (const auto& a : human_answers)
        if (normalize_answer(a) == pred) ++matches;
    return std::min(matches / 3.0, 1.0);
}

double iou(const Box& a, const Box& b) {
    a.validate();
    b.validate();
    const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double localization_accuracy(const std::vector<std::vector<Box>>& predictions,
                             const std::vector<Box>& golds, double tau) {
    if (predictions.size() != golds.size())
        throw contract_error("localization_accuracy: prediction/gold count mismatch");
    if (golds.empty()) return 0.0;
    long hits = 0;
    for (size_t i = 0; i < golds.size(); ++i) {
        for (const auto& p : predictions[i]) {
            if (iou(p, golds[i]) >= tau) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

ChairResult chair(const std::vector<CaptionEvalRecord>& records) {
    long mentioned = 0, hallucinated = 0, captions_with_hall = 0;
    for (const auto& rec : records) {
        long hall = 0;
        for (const auto& obj : rec.mentioned_objects)
            if (!rec.gold_objects.count(obj)) ++hall;
        mentioned += static_cast<long>(rec.mentioned_objects.size());
        hallucinated += hall;
        if (hall > 0) ++captions_with_hall;
    }
    ChairResult out;
    out.chair_i = mentioned > 0 ? static_cast<double>(hallucinated) / mentioned : 0.0;
    out.chair_s = records.empty() ? 0.0
                                  : static_cast<double>(captions_with_hall) /
                                        static_cast<double>(records.size());
    return out;
}

void ObjectLexicon::add(const std::string& category, const std::vector<std::string>& surfaces) {
    for (const auto& s : surfaces) surface_to_category[s] = category;
}

std::set<std::string> extract_object_mentions(const Tokens& caption,
                                              const ObjectLexicon& lexicon) {
    std::set<std::string> out;
    for (const auto& tok : caption) {
        auto it = lexicon.surface_to_category.find(tok);
        if (it != lexicon.surface_to_category.end()) out.insert(it->second);
    }
    return out;
}

namespace {

PopeScores score_subset(const std::vector<PopeRecord>& records,
                        const std::optional<PopeTag>& tag) {
    long tp = 0, fp = 0, tn = 0, fn = 0, yes = 0, n = 0;
    for (const auto& r : records) {
        if (tag && r.tag != *tag) continue;
        ++n;
        if (r.answered_yes) ++yes;
        if (r.present && r.answered_yes) ++tp;
        else if (!r.present && r.answered_yes) ++fp;
        else if (!r.present && !r.answered_yes) ++tn;
        else ++fn;
    }
    PopeScores s;
    s.count = n;
    if (n == 0) return s;
    s.accuracy = static_cast<double>(tp + tn) / n;
    s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    s.yes_rate = static_cast<double>(yes) / n;
    return s;
}

}  // namespace

PopeReport pope_scores(const std::vector<PopeRecord>& records) {
    if (records.empty()) throw contract_error("pope_scores: no records");
    PopeReport rep;
    rep.overall = score_subset(records, std::nullopt);
    rep.random_tag = score_subset(records, PopeTag::random);
    rep.popular_tag = score_subset(records, PopeTag::popular);
    return rep;
}

}  // namespace vlmforge::metrics
