#pragma once

// Brute-force reference implementations used to cross-check the metric suite.
// Deliberately written along different routes than the library: product-form
// BLEU with rescan counting, memoized recursive LCS, explicit dense TF-IDF
// vectors, a full sort for retrieval ranks, and integer micro-cell IoU.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "vlmforge/metrics.hpp"

namespace oracles {

using Tokens = std::vector<std::string>;

inline std::vector<Tokens> windows(const Tokens& t, int n) {
    std::vector<Tokens> out;
    for (int i = 0; i + n <= static_cast<int>(t.size()); ++i)
        out.emplace_back(t.begin() + i, t.begin() + i + n);
    return out;
}

inline int count_window(const std::vector<Tokens>& ws, const Tokens& key) {
    int c = 0;
    for (const auto& w : ws)
        if (w == key) ++c;
    return c;
}

inline double bleu_oracle(const Tokens& cand, const std::vector<Tokens>& refs, int max_n = 4) {
    if (cand.empty()) return 0.0;
    double product = 1.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cws = windows(cand, n);
        if (cws.empty()) return 0.0;
        double clipped = 0.0;
        std::set<Tokens> distinct(cws.begin(), cws.end());
        for (const auto& key : distinct) {
            int best_ref = 0;
            for (const auto& r : refs) best_ref = std::max(best_ref, count_window(windows(r, n), key));
            clipped += std::min(count_window(cws, key), best_ref);
        }
        if (clipped == 0.0) return 0.0;
        product *= std::pow(clipped / static_cast<double>(cws.size()), 1.0 / max_n);
    }
    long c = static_cast<long>(cand.size());
    long r = static_cast<long>(refs[0].size());
    for (const auto& ref : refs) {
        const long rl = static_cast<long>(ref.size());
        if (std::labs(rl - c) < std::labs(r - c) || (std::labs(rl - c) == std::labs(r - c) && rl < r))
            r = rl;
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
    return bp * product;
}

inline long lcs_recursive(const Tokens& a, const Tokens& b, size_t i, size_t j,
                          std::map<std::pair<size_t, size_t>, long>& memo) {
    if (i == 0 || j == 0) return 0;
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    long r;
    if (a[i - 1] == b[j - 1])
        r = 1 + lcs_recursive(a, b, i - 1, j - 1, memo);
    else
        r = std::max(lcs_recursive(a, b, i - 1, j, memo), lcs_recursive(a, b, i, j - 1, memo));
    memo[key] = r;
    return r;
}

inline double rouge_l_oracle(const Tokens& cand, const std::vector<Tokens>& refs) {
    double best = 0.0;
    for (const auto& ref : refs) {
        if (cand.empty() || ref.empty()) continue;
        std::map<std::pair<size_t, size_t>, long> memo;
        const double lcs =
            static_cast<double>(lcs_recursive(cand, ref, cand.size(), ref.size(), memo));
        if (lcs == 0) continue;
        const double p = lcs / static_cast<double>(cand.size());
        const double r = lcs / static_cast<double>(ref.size());
        best = std::max(best, 2 * p * r / (p + r));
    }
    return best;
}

// documents: each reference caption of the evaluation split
inline double cider_oracle(const Tokens& cand, const std::vector<Tokens>& refs,
                           const std::vector<Tokens>& docs, int max_n = 4) {
    double total = 0.0;
    for (const auto& ref : refs) {
        for (int n = 1; n <= max_n; ++n) {
            // union of n-gram keys from both sides, dense vectors over them
            std::vector<Tokens> keys;
            for (const auto& w : windows(cand, n))
                if (std::find(keys.begin(), keys.end(), w) == keys.end()) keys.push_back(w);
            for (const auto& w : windows(ref, n))
                if (std::find(keys.begin(), keys.end(), w) == keys.end()) keys.push_back(w);
            std::vector<double> vc, vr;
            for (const auto& key : keys) {
                long df = 0;
                for (const auto& doc : docs)
                    if (count_window(windows(doc, n), key) > 0) ++df;
                const double idf =
                    df > 0 ? std::log(static_cast<double>(docs.size()) / static_cast<double>(df))
                           : 0.0;
                vc.push_back(count_window(windows(cand, n), key) * idf);
                vr.push_back(count_window(windows(ref, n), key) * idf);
            }
            double dot = 0, nc = 0, nr = 0;
            for (size_t i = 0; i < vc.size(); ++i) {
                dot += vc[i] * vr[i];
                nc += vc[i] * vc[i];
                nr += vr[i] * vr[i];
            }
            if (nc > 0 && nr > 0) total += 0.25 * dot / (std::sqrt(nc) * std::sqrt(nr));
        }
    }
    return total / static_cast<double>(refs.size());
}

struct RankOracle {
    double recall;
    double median_rank;
};

inline RankOracle recall_oracle(const std::vector<std::vector<double>>& scores,
                                const std::vector<std::vector<int>>& gold, int k) {
    std::vector<int> ranks;
    for (size_t q = 0; q < scores.size(); ++q) {
        std::vector<int> idx(scores[q].size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            if (scores[q][static_cast<size_t>(a)] != scores[q][static_cast<size_t>(b)])
                return scores[q][static_cast<size_t>(a)] > scores[q][static_cast<size_t>(b)];
            return a < b;
        });
        int best = static_cast<int>(idx.size()) + 1;
        for (size_t pos = 0; pos < idx.size(); ++pos)
            if (std::find(gold[q].begin(), gold[q].end(), idx[pos]) != gold[q].end()) {
                best = static_cast<int>(pos) + 1;
                break;
            }
        ranks.push_back(best);
    }
    long hits = 0;
    for (int r : ranks)
        if (r <= k) ++hits;
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    return {static_cast<double>(hits) / static_cast<double>(n),
            n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                       : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2])};
}

// boxes with coordinates on a 1/8 grid: count micro cells exactly
inline double iou_cell_oracle(const vlmforge::metrics::Box& a, const vlmforge::metrics::Box& b) {
    auto cells = [](const vlmforge::metrics::Box& box, long& x0, long& y0, long& x1, long& y1) {
        x0 = std::lround(box.x0 * 8);
        y0 = std::lround(box.y0 * 8);
        x1 = std::lround(box.x1 * 8);
        y1 = std::lround(box.y1 * 8);
    };
    long ax0, ay0, ax1, ay1, bx0, by0, bx1, by1;
    cells(a, ax0, ay0, ax1, ay1);
    cells(b, bx0, by0, bx1, by1);
    long inter = 0, only_a = 0, only_b = 0;
    const long x0 = std::min(ax0, bx0), x1 = std::max(ax1, bx1);
    const long y0 = std::min(ay0, by0), y1 = std::max(ay1, by1);
    for (long y = y0; y < y1; ++y)
        for (long x = x0; x < x1; ++x) {
            const bool in_a = x >= ax0 && x < ax1 && y >= ay0 && y < ay1;
            const bool in_b = x >= bx0 && x < bx1 && y >= by0 && y < by1;
            if (in_a && in_b) ++inter;
            else if (in_a) ++only_a;
            else if (in_b) ++only_b;
        }
    const long uni = inter + only_a + only_b;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct ChairOracle {
    double chair_i;
    double chair_s;
};

inline ChairOracle chair_oracle(const std::vector<vlmforge::metrics::CaptionEvalRecord>& recs) {
    long cap_total = 0, hall_total = 0, sent_hall = 0;
    for (const auto& r : recs) {
        std::vector<std::string> hall;
        std::set_difference(r.mentioned_objects.begin(), r.mentioned_objects.end(),
                            r.gold_objects.begin(), r.gold_objects.end(),
                            std::back_inserter(hall));
        cap_total += static_cast<long>(r.mentioned_objects.size());
        hall_total += static_cast<long>(hall.size());
        if (!hall.empty()) ++sent_hall;
    }
    return {cap_total ? static_cast<double>(hall_total) / cap_total : 0.0,
            recs.empty() ? 0.0 : static_cast<double>(sent_hall) / recs.size()};
}

struct PopeOracle {
    double accuracy, precision, recall, f1, yes_rate;
};

inline PopeOracle pope_oracle(const std::vector<vlmforge::metrics::PopeRecord>& recs) {
    double tp = 0, fp = 0, fn = 0, correct = 0, yes = 0;
    for (const auto& r : recs) {
        if (r.answered_yes) ++yes;
        if (r.answered_yes == r.present) ++correct;
        if (r.answered_yes && r.present) ++tp;
        if (r.answered_yes && !r.present) ++fp;
        if (!r.answered_yes && r.present) ++fn;
    }
    const double n = static_cast<double>(recs.size());
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    return {correct / n, prec, rec, f1, yes / n};
}

}  // namespace oracles
