#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vlmforge/metrics.hpp"
#include "vlmforge/rng.hpp"

using namespace vlmforge;
using namespace vlmforge::metrics;

namespace {

Tokens toks(const char* s) { return text::tokenize(s); }

std::vector<Tokens> random_sentences(Rng& rng, int count, int min_len, int max_len) {
    static const std::vector<std::string> words = {"a",    "the",  "red",   "blue", "cube",
                                                   "bar",  "disk", "sphere", "left", "of",
                                                   "on",   "gray", "image",  "."};
    std::vector<Tokens> out;
    for (int i = 0; i < count; ++i) {
        Tokens t;
        const int len = min_len + rng.uniform_int(max_len - min_len + 1);
        for (int j = 0; j < len; ++j)
            t.push_back(words[static_cast<size_t>(rng.uniform_int(static_cast<int>(words.size())))]);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("bleu: perfect match, clipping, boundaries") {
    const auto ref = toks("a red cube on a gray background .");
    CHECK(bleu(ref, {ref}) == doctest::Approx(1.0).epsilon(1e-12));

    // clipped unigram precision: "the the the the" vs "the cat"
    CHECK(bleu(toks("the the the the"), {toks("the cat")}) == 0.0);
    // and the clipped p1 itself is 1/4 when only unigrams count
    CHECK(bleu(toks("the the the the"), {toks("the cat")}, 1) ==
          doctest::Approx(0.25).epsilon(1e-12));

    CHECK(bleu({}, {ref}) == 0.0);
    CHECK_THROWS_AS((void)bleu(ref, {}), contract_error);
    // candidate shorter than n zeroes the score (no smoothing)
    CHECK(bleu(toks("a red"), {toks("a red")}) == 0.0);
}

TEST_CASE("bleu: brevity penalty uses the closest reference length") {
    const auto cand = toks("a b c d");
    // closest reference has length 8 -> BP = exp(1 - 8/4)
    const double got = bleu(cand, {toks("a b c d x y z w"), toks("a b c d x y z w q e t u")});
    CHECK(got == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-9));
}

TEST_CASE("bleu: matches the oracle on randomized cases") {
    Rng rng(21);
    for (int t = 0; t < 120; ++t) {
        const auto cand = random_sentences(rng, 1, 1, 10)[0];
        const auto refs = random_sentences(rng, 1 + rng.uniform_int(3), 1, 10);
        CHECK(std::abs(bleu(cand, refs) - oracles::bleu_oracle(cand, refs)) < 1e-9);
    }
}

TEST_CASE("rouge_l: identities and DP-vs-recursive oracle") {
    const auto ref = toks("a red cube .");
    CHECK(rouge_l(ref, {ref}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rouge_l(toks("x y z"), {toks("p q r")}) == 0.0);
    // "a b c d" vs "a c d": LCS 3, P 3/4, R 1 -> 6/7
    CHECK(rouge_l(toks("a b c d"), {toks("a c d")}) ==
          doctest::Approx(2.0 * 0.75 * 1.0 / 1.75).epsilon(1e-9));
    CHECK_THROWS_AS((void)rouge_l(ref, {}), contract_error);

    Rng rng(22);
    for (int t = 0; t < 120; ++t) {
        const auto cand = random_sentences(rng, 1, 0, 9)[0];
        const auto refs = random_sentences(rng, 1 + rng.uniform_int(3), 1, 9);
        CHECK(std::abs(rouge_l(cand, refs) - oracles::rouge_l_oracle(cand, refs)) < 1e-9);
    }
}

TEST_CASE("cider: identity, disjoint, toy-corpus oracle") {
    std::vector<Tokens> docs = {toks("a red cube on a table ."),
                                toks("a blue sphere near a bar ."),
                                toks("the green disk ."),
                                toks("two bars on gray ."),
                                toks("a yellow cube left of a disk .")};
    const auto idf = CiderIdf::build(docs);
    // candidate == sole reference with some nonzero-IDF n-gram
    CHECK(cider(docs[0], {docs[0]}, idf) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cider(toks("zz qq ww ee"), {docs[1]}, idf) == 0.0);
    // empty candidate scores 0, not an error
    CHECK(cider({}, {docs[0]}, idf) == 0.0);

    Rng rng(23);
    for (int t = 0; t < 100; ++t) {
        const auto corpus = random_sentences(rng, 5, 2, 8);
        const auto idf2 = CiderIdf::build(corpus);
        const auto cand = random_sentences(rng, 1, 1, 8)[0];
        const auto refs = std::vector<Tokens>(corpus.begin(), corpus.begin() + 1 + rng.uniform_int(4));
        CHECK(std::abs(cider(cand, refs, idf2) - oracles::cider_oracle(cand, refs, corpus)) < 1e-9);
    }
}

TEST_CASE("recall_at_k: trivial layouts and the full-sort oracle") {
    // gold strictly best for every query
    std::vector<std::vector<double>> s1 = {{5, 1, 2}, {0, 9, 3}};
    std::vector<std::vector<int>> g1 = {{0}, {1}};
    auto r1 = recall_at_k(s1, g1, 1);
    CHECK(r1.recall == 1.0);
    CHECK(r1.median_rank == 1.0);

    // gold strictly worst among 10
    std::vector<std::vector<double>> s2(1, std::vector<double>{9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
    std::vector<std::vector<int>> g2 = {{9}};
    auto r2 = recall_at_k(s2, g2, 5);
    CHECK(r2.recall == 0.0);
    CHECK(r2.ranks[0] == 10);

    CHECK_THROWS_AS((void)recall_at_k(s1, {{0}, {}}, 1), contract_error);
    CHECK_THROWS_AS((void)recall_at_k(s1, g1, 0), contract_error);

    Rng rng(24);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::vector<double>> scores(5, std::vector<double>(8));
        std::vector<std::vector<int>> gold(5);
        for (auto& row : scores)
            for (auto& v : row) v = rng.uniform_int(4);  // force ties
        for (auto& g : gold) {
            g.push_back(rng.uniform_int(8));
            if (rng.uniform() < 0.5) g.push_back(rng.uniform_int(8));
        }
        for (int k = 1; k <= 8; ++k) {
            const auto mine = recall_at_k(scores, gold, k);
            const auto ref = oracles::recall_oracle(scores, gold, k);
            CHECK(mine.recall == ref.recall);
            CHECK(mine.median_rank == ref.median_rank);
        }
        // monotone nondecreasing in K, R@G == 1
        double prev = 0;
        for (int k = 1; k <= 8; ++k) {
            const double r = recall_at_k(scores, gold, k).recall;
            CHECK(r >= prev);
            prev = r;
        }
        CHECK(recall_at_k(scores, gold, 8).recall == 1.0);
    }
}

TEST_CASE("vqa_soft_accuracy: the min(matches/3, 1) law") {
    std::vector<std::string> answers = {"yes", "yes", "yes", "no", "no", "no", "no", "no", "no", "no"};
    CHECK(vqa_soft_accuracy("yes", answers) == doctest::Approx(1.0));
    answers = {"yes", "no", "no", "no", "no", "no", "no", "no", "no", "no"};
    CHECK(vqa_soft_accuracy("yes", answers) == doctest::Approx(1.0 / 3));
    CHECK(vqa_soft_accuracy("maybe", answers) == 0.0);
    answers = {"Yes!", "YES", "no", "no", "no", "no", "no", "no", "no", "no"};
    CHECK(vqa_soft_accuracy("yes", answers) == doctest::Approx(2.0 / 3));
    CHECK_THROWS_AS((void)vqa_soft_accuracy("yes", {"yes"}), contract_error);
    CHECK(normalize_answer("  Red   Cube! ") == "red cube");
}

TEST_CASE("iou: identities, arithmetic case, symmetry, cell oracle") {
    Box a{0, 0, 2, 2}, b{1, 1, 3, 3}, c{5, 5, 6, 6};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, c) == 0.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 7).epsilon(1e-12));
    CHECK_THROWS_AS((void)iou(Box{2, 0, 1, 2}, a), contract_error);
    // degenerate zero-area union
    CHECK(iou(Box{1, 1, 1, 1}, Box{1, 1, 1, 1}) == 0.0);

    Rng rng(25);
    for (int t = 0; t < 150; ++t) {
        auto mk = [&] {
            const double x0 = rng.uniform_int(32) / 8.0, y0 = rng.uniform_int(32) / 8.0;
            return Box{x0, y0, x0 + (1 + rng.uniform_int(24)) / 8.0,
                       y0 + (1 + rng.uniform_int(24)) / 8.0};
        };
        const Box p = mk(), q = mk();
        CHECK(iou(p, q) == iou(q, p));
        CHECK(std::abs(iou(p, q) - oracles::iou_cell_oracle(p, q)) < 1e-9);
        CHECK(iou(p, q) >= 0.0);
        CHECK(iou(p, q) <= 1.0);
    }

    // localization accuracy: at least one predicted box over the threshold
    std::vector<std::vector<Box>> preds = {{a}, {c, b}};
    std::vector<Box> golds = {a, b};
    CHECK(localization_accuracy(preds, golds, 0.5) == 1.0);
    CHECK(localization_accuracy({{c}, {c, c}}, golds, 0.5) == 0.0);
}

TEST_CASE("chair: trivial cases and the set-difference oracle") {
    CaptionEvalRecord faithful;
    faithful.gold_objects = {"cube", "bar"};
    faithful.mentioned_objects = {"cube"};
    CHECK(chair({faithful, faithful}).chair_i == 0.0);
    CHECK(chair({faithful, faithful}).chair_s == 0.0);

    CaptionEvalRecord dog;
    dog.gold_objects = {"cat"};
    dog.mentioned_objects = {"dog"};
    auto r = chair({dog});
    CHECK(r.chair_i == 1.0);
    CHECK(r.chair_s == 1.0);

    Rng rng(26);
    const std::vector<std::string> cats = {"cube", "sphere", "disk", "bar"};
    std::vector<CaptionEvalRecord> recs;
    for (int i = 0; i < 10; ++i) {
        CaptionEvalRecord rec;
        for (const auto& c : cats) {
            if (rng.uniform() < 0.5) rec.gold_objects.insert(c);
            if (rng.uniform() < 0.5) rec.mentioned_objects.insert(c);
        }
        recs.push_back(rec);
    }
    const auto mine = chair(recs);
    const auto ref = oracles::chair_oracle(recs);
    CHECK(mine.chair_i == ref.chair_i);
    CHECK(mine.chair_s == ref.chair_s);
}

TEST_CASE("extract_object_mentions: closed-vocabulary scan") {
    ObjectLexicon lex;
    lex.add("cube", {"cube", "cubes"});
    lex.add("sphere", {"sphere", "spheres"});
    lex.add("disk", {"disk", "disks"});
    auto got = extract_object_mentions(toks("a red cube near a sphere"), lex);
    CHECK(got == std::set<std::string>{"cube", "sphere"});
    CHECK(extract_object_mentions(toks("nothing to see here"), lex).empty());
    CHECK(extract_object_mentions(toks("two cubes"), lex) == std::set<std::string>{"cube"});

    // agreement with a direct scan oracle on random token streams
    Rng rng(27);
    const std::vector<std::string> words = {"cube",  "cubes",  "sphere", "a", "red",
                                            "disks", "circle", "the",    ".", "bar"};
    ObjectLexicon lex2 = lex;
    lex2.add("bar", {"bar", "bars"});
    for (int t = 0; t < 100; ++t) {
        Tokens sent;
        for (int j = 0; j < rng.uniform_int(12); ++j)
            sent.push_back(words[static_cast<size_t>(rng.uniform_int(static_cast<int>(words.size())))]);
        std::set<std::string> expect;
        for (const auto& w : sent) {
            auto it = lex2.surface_to_category.find(w);
            if (it != lex2.surface_to_category.end()) expect.insert(it->second);
        }
        CHECK(extract_object_mentions(sent, lex2) == expect);
    }
}

TEST_CASE("pope_scores: confusion identities and the counting oracle") {
    // always-yes model
    std::vector<PopeRecord> recs;
    for (int i = 0; i < 10; ++i)
        recs.push_back({"cube", i < 4, true, PopeTag::random});  // prevalence 0.4
    auto rep = pope_scores(recs);
    CHECK(rep.overall.recall == 1.0);
    CHECK(rep.overall.yes_rate == 1.0);
    CHECK(rep.overall.precision == doctest::Approx(0.4));

    // perfect model
    recs.clear();
    for (int i = 0; i < 10; ++i)
        recs.push_back({"bar", i < 4, i < 4, i % 2 ? PopeTag::random : PopeTag::popular});
    rep = pope_scores(recs);
    CHECK(rep.overall.accuracy == 1.0);
    CHECK(rep.overall.precision == 1.0);
    CHECK(rep.overall.recall == 1.0);
    CHECK(rep.overall.f1 == 1.0);
    CHECK(rep.overall.yes_rate == doctest::Approx(0.4));
    CHECK(rep.random_tag.count == 5);
    CHECK(rep.popular_tag.count == 5);

    CHECK_THROWS_AS((void)pope_scores({}), contract_error);

    Rng rng(28);
    for (int t = 0; t < 100; ++t) {
        recs.clear();
        const int n = 2 + rng.uniform_int(30);
        for (int i = 0; i < n; ++i)
            recs.push_back({"x", rng.uniform() < 0.5, rng.uniform() < 0.5,
                            rng.uniform() < 0.5 ? PopeTag::random : PopeTag::popular});
        const auto mine = pope_scores(recs).overall;
        const auto ref = oracles::pope_oracle(recs);
        CHECK(mine.accuracy == ref.accuracy);
        CHECK(mine.precision == ref.precision);
        CHECK(mine.recall == ref.recall);
        CHECK(mine.f1 == ref.f1);
        CHECK(mine.yes_rate == ref.yes_rate);
    }
}
