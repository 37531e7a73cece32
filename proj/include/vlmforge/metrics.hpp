#pragma once

// Closed-form caption/retrieval/grounding/hallucination metrics.
// Everything here is a pure function of its inputs.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vlmforge/text.hpp"

namespace vlmforge::metrics {

using core::contract_error;
using core::index_error;
using Tokens = std::vector<std::string>;

struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double area() const { return (x1 - x0) * (y1 - y0); }
    void validate() const;
};

// Brevity-penalized geometric mean of clipped n-gram precisions.
// No smoothing: any p_n == 0 (including a candidate shorter than n)
// zeroes the score. Empty candidate scores 0.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n = 4);

// LCS-based F1, maximized over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references);

// IDF document frequencies: one document per reference caption.
struct CiderIdf {
    std::map<std::string, int> df[4];  // df[n-1][ngram]
    long num_docs = 0;
    static CiderIdf build(const std::vector<Tokens>& reference_corpus, int max_n = 4);
};

// Average over references and n-gram orders (w_n = 1/4 each) of the cosine
// between TF-IDF n-gram vectors; in [0, 1] by construction.
double cider(const Tokens& candidate, const std::vector<Tokens>& references,
             const CiderIdf& idf, int max_n = 4);

struct RetrievalResult {
    double recall = 0;       // fraction of queries with best-gold rank <= K
    double median_rank = 0;  // median over queries of the best-gold rank
    std::vector<int> ranks;  // per-query 1-based rank of the best gold item
};

// scores: Q rows of G gallery scores. Descending score, ties broken by
// ascending gallery index; the best-ranked gold item defines the rank.
RetrievalResult recall_at_k(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<int>>& gold_sets, int k);

// VQA v2 style consensus accuracy: min(#matches / 3, 1) over exactly 10
// normalized human answers.
double vqa_soft_accuracy(const std::string& prediction,
                         const std::vector<std::string>& human_answers);
std::string normalize_answer(const std::string& answer);

double iou(const Box& a, const Box& b);
// Fraction of examples where at least one predicted box reaches IoU >= tau.
double localization_accuracy(const std::vector<std::vector<Box>>& predictions,
                             const std::vector<Box>& golds, double tau = 0.5);

struct CaptionEvalRecord {
    Tokens candidate;
    std::vector<Tokens> references;
    std::set<std::string> gold_objects;     // O_img
    std::set<std::string> mentioned_objects;  // O_cap
};

struct ChairResult {
    double chair_i = 0;  // sum |O_hall| / sum |O_cap| over the corpus
    double chair_s = 0;  // fraction of captions with a nonempty O_hall
};

ChairResult chair(const std::vector<CaptionEvalRecord>& records);

// Closed category vocabulary with surface forms (singular/plural) mapping to
// canonical category names.
struct ObjectLexicon {
    std::map<std::string, std::string> surface_to_category;
    void add(const std::string& category, const std::vector<std::string>& surfaces);
};

std::set<std::string> extract_object_mentions(const Tokens& caption,
                                              const ObjectLexicon& lexicon);

enum class PopeTag { random, popular };

struct PopeRecord {
    std::string object;
    bool present = false;    // ground truth
    bool answered_yes = false;
    PopeTag tag = PopeTag::random;
};

struct PopeScores {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, yes_rate = 0;
    long count = 0;
};

struct PopeReport {
    PopeScores overall;
    PopeScores random_tag;
    PopeScores popular_tag;
};

PopeReport pope_scores(const std::vector<PopeRecord>& records);

}  // namespace vlmforge::metrics
