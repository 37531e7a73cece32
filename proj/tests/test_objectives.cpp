#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vlmforge/objectives.hpp"

using namespace vlmforge;
using namespace vlmforge::core;
using namespace vlmforge::objectives;

namespace {

Tensor random_rows(int n, int d, Rng& rng, bool rg = false) {
    std::vector<double> v(static_cast<size_t>(n) * d);
    for (double& x : v) x = rng.normal(0, 1.0);
    return Tensor::from_data({n, d}, std::move(v), rg);
}

}  // namespace

TEST_CASE("contrastive: uniform similarity gives ln N exactly") {
    // identical rows: S constant, softmax uniform
    std::vector<double> row = {0.3, -0.7, 0.2, 0.9};
    std::vector<double> all;
    for (int i = 0; i < 4; ++i) all.insert(all.end(), row.begin(), row.end());
    EmbeddingBatch batch{Tensor::from_data({4, 4}, all), Tensor::from_data({4, 4}, all)};
    auto cfg = ContrastiveConfig::init(1.0);
    auto res = contrastive_loss(batch, cfg);
    CHECK(res.loss.value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(res.similarity.rows() == 4);
}

TEST_CASE("contrastive: orthonormal N=2 case evaluates in closed form") {
    EmbeddingBatch batch{Tensor::from_data({2, 2}, {1, 0, 0, 1}),
                         Tensor::from_data({2, 2}, {1, 0, 0, 1})};
    auto cfg = ContrastiveConfig::init(1.0);
    auto res = contrastive_loss(batch, cfg);
    CHECK(res.similarity.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.similarity.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(res.loss.value() == doctest::Approx(expect).epsilon(1e-9));
    CHECK(res.loss.value() == doctest::Approx(0.3132616875).epsilon(1e-9));
}

TEST_CASE("contrastive: contracts and degenerate embeddings") {
    auto cfg = ContrastiveConfig::init(1.0);
    Rng rng(61);
    EmbeddingBatch one{random_rows(1, 4, rng), random_rows(1, 4, rng)};
    CHECK_THROWS_AS((void)contrastive_loss(one, cfg), contract_error);
    EmbeddingBatch zero{Tensor::from_data({2, 2}, {0, 0, 1, 0}),
                        Tensor::from_data({2, 2}, {1, 0, 0, 1})};
    CHECK_THROWS_AS((void)contrastive_loss(zero, cfg), contract_error);
}

TEST_CASE("contrastive: joint permutation invariance") {
    Rng rng(62);
    Tensor v = random_rows(5, 6, rng);
    Tensor u = random_rows(5, 6, rng);
    auto cfg = ContrastiveConfig::init(0.7);
    const double base = contrastive_loss({v, u}, cfg).loss.value();
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    const double permuted =
        contrastive_loss({embedding_rows(v, perm), embedding_rows(u, perm)}, cfg).loss.value();
    CHECK(std::abs(base - permuted) < 1e-12);
}

TEST_CASE("contrastive similarity-level laws: shift invariance and monotonicity") {
    Rng rng(63);
    Tensor s = random_rows(4, 4, rng);
    const double base = contrastive_loss_from_similarity(s).value();
    CHECK(base >= -1e-12);

    // adding a constant to every entry changes nothing
    Tensor shifted = add(s, Tensor::full({4, 4}, 3.7));
    CHECK(std::abs(contrastive_loss_from_similarity(shifted).value() - base) < 1e-12);

    // raising one diagonal entry with the rest fixed lowers the loss
    auto bumped_data = std::vector<double>(s.data().begin(), s.data().end());
    bumped_data[5] += 0.5;  // S_11
    const double bumped =
        contrastive_loss_from_similarity(Tensor::from_data({4, 4}, bumped_data)).value();
    CHECK(bumped < base);
}

TEST_CASE("contrastive: gradients flow through embeddings and temperature") {
    Rng rng(64);
    Tensor v = random_rows(3, 4, rng, true);
    Tensor u = random_rows(3, 4, rng, true);
    auto cfg = ContrastiveConfig::init(0.5);
    auto loss = [&] { return contrastive_loss({v, u}, cfg).loss; };
    CHECK(gradcheck::check(loss, {v, u, cfg.log_tau}).max_rel_error < 1e-4);
}

TEST_CASE("itm_loss: closed forms, oracle, gradients") {
    CHECK(itm_loss(Tensor::zeros({4, 1}), {1, 0, 1, 0}).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(itm_loss(Tensor::from_data({1, 1}, {30.0}), {1}).value() < 1e-9);

    Rng rng(65);
    Tensor logits = random_rows(8, 1, rng, true);
    std::vector<double> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(rng.uniform() < 0.5 ? 1.0 : 0.0);
    // naive sigmoid + log oracle
    double expect = 0;
    for (int i = 0; i < 8; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        expect += -(labels[static_cast<size_t>(i)] * std::log(p) +
                    (1 - labels[static_cast<size_t>(i)]) * std::log(1 - p));
    }
    expect /= 8;
    CHECK(std::abs(itm_loss(logits, labels).value() - expect) < 1e-9);
    auto loss = [&] { return itm_loss(logits, labels); };
    CHECK(gradcheck::check(loss, {logits}).max_rel_error < 1e-4);
    CHECK_THROWS_AS((void)itm_loss(logits, {0.5, 0, 0, 0, 0, 0, 0, 0}), contract_error);
}

TEST_CASE("answer_choice_loss: closed forms and equality with cross_entropy") {
    CHECK(answer_choice_loss(Tensor::zeros({1, 2}), {0}).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Tensor peaked = Tensor::from_data({1, 3}, {30, 0, 0});
    CHECK(answer_choice_loss(peaked, {0}).value() < 1e-9);

    Rng rng(66);
    Tensor scores = random_rows(4, 5, rng);
    const std::vector<int> truth = {2, 0, 4, 1};
    CHECK(answer_choice_loss(scores, truth).value() ==
          cross_entropy(scores, truth).value());
    CHECK_THROWS_AS((void)answer_choice_loss(Tensor::zeros({1, 1}), {0}), contract_error);
    CHECK_THROWS_AS((void)answer_choice_loss(scores, {0, 1, 2, 5}), index_error);
}

TEST_CASE("region_grounding_loss: boundary cases and missing gold") {
    // one distractor at effectively -inf: the truth takes all the mass
    Tensor two = Tensor::from_data({2}, {0.0, -1e30});
    CHECK(region_grounding_loss(two, 0).value() < 1e-9);

    Tensor uniform = Tensor::zeros({7});
    CHECK(region_grounding_loss(uniform, 3).value() ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));

    Rng rng(67);
    Tensor scores = random_rows(1, 6, rng);
    CHECK(region_grounding_loss(reshape(scores, {6}), 2).value() ==
          answer_choice_loss(scores, {2}).value());

    CHECK_THROWS_AS((void)region_grounding_loss(uniform, 9), missing_gold_error);
    CHECK_THROWS_AS((void)region_grounding_loss(Tensor::zeros({1}), 0), contract_error);
}

TEST_CASE("negative_sampler: counts, self-exclusion, reproducibility, uniformity") {
    Rng rng(68);
    auto pairs = negative_sampler(2, rng);
    CHECK(pairs.size() == 4);
    int positives = 0;
    for (const auto& p : pairs) {
        if (p.label == 1) {
            CHECK(p.image_index == p.caption_index);
            ++positives;
        } else {
            CHECK(p.image_index != p.caption_index);
        }
    }
    CHECK(positives == 2);
    CHECK_THROWS_AS((void)negative_sampler(1, rng), contract_error);

    Rng a(99), b(99);
    auto pa = negative_sampler(6, a);
    auto pb = negative_sampler(6, b);
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].image_index == pb[i].image_index);
        CHECK(pa[i].caption_index == pb[i].caption_index);
    }

    // over 10k draws every foreign caption appears with frequency 1/(N-1) +- 3 sigma
    const int n = 5, draws = 10000;
    std::vector<std::vector<int>> counts(static_cast<size_t>(n), std::vector<int>(n, 0));
    Rng freq_rng(123);
    for (int t = 0; t < draws; ++t)
        for (const auto& p : negative_sampler(n, freq_rng))
            if (p.label == 0)
                ++counts[static_cast<size_t>(p.image_index)][static_cast<size_t>(p.caption_index)];
    const double p0 = 1.0 / (n - 1);
    const double sigma = std::sqrt(p0 * (1 - p0) / draws);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                CHECK(counts[static_cast<size_t>(i)][static_cast<size_t>(j)] == 0);
            } else {
                const double f =
                    counts[static_cast<size_t>(i)][static_cast<size_t>(j)] / static_cast<double>(draws);
                CHECK(std::abs(f - p0) <= 3 * sigma);
            }
        }
}

TEST_CASE("temperature: clamped exponential of the stored log") {
    auto cfg = ContrastiveConfig::init(0.25);
    CHECK(cfg.temperature().value() == doctest::Approx(0.25).epsilon(1e-12));
    cfg.log_tau.mutable_data()[0] = std::log(1e9);
    CHECK(cfg.temperature().value() == 100.0);
    cfg.log_tau.mutable_data()[0] = std::log(1e-9);
    CHECK(cfg.temperature().value() == 1e-3);
}
