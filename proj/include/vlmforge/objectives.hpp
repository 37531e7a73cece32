#pragma once

// The four alignment loss families: symmetric contrastive alignment over a
// scaled cosine similarity matrix, binary image-text matching, categorical
// answer/region classification, and (elsewhere) the conditional LM loss.

#include "vlmforge/nn.hpp"
#include "vlmforge/rng.hpp"

namespace vlmforge::objectives {

using core::Tensor;

struct EmbeddingBatch {
    Tensor image_embs;  // [N x d]
    Tensor text_embs;   // [N x d]
};

struct ContrastiveConfig {
    Tensor log_tau;       // learnable scalar, temperature stored as log
    double tau_min = 1e-3;
    double tau_max = 100.0;

    static ContrastiveConfig init(double tau = 0.5);
    Tensor temperature() const;  // exp(log_tau) clamped to [tau_min, tau_max]
};

struct ContrastiveResult {
    Tensor loss;        // scalar
    Tensor similarity;  // S [N x N], S_ij = v_i . u_j / tau with unit rows
};

// 0.5 * (I->T + T->I) with the diagonal as positives. N >= 2 required.
ContrastiveResult contrastive_loss(const EmbeddingBatch& batch, const ContrastiveConfig& cfg);

// The same loss evaluated on a ready-made similarity matrix; used directly by
// the invariance tests (shift, permutation, diagonal monotonicity).
Tensor contrastive_loss_from_similarity(const Tensor& s);

// Mean binary cross-entropy on logits, log-sum-exp stable.
Tensor itm_loss(const Tensor& logits, const std::vector<double>& labels);

// Mean -log softmax(scores)[truth]; scores [n x K], K >= 2.
Tensor answer_choice_loss(const Tensor& scores, const std::vector<int>& truth);

// Softmax cross-entropy over region proposals for one phrase. A truth index
// outside the proposal set raises missing_gold_error so corpus-level callers
// can skip and count.
Tensor region_grounding_loss(const Tensor& region_scores, int truth_index);

struct ItmPair {
    int image_index = 0;
    int caption_index = 0;
    int label = 1;
};

// One in-batch negative per positive: 2N pairs, negative captions drawn
// uniformly from the other indices.
std::vector<ItmPair> negative_sampler(int batch_size, Rng& rng);

}  // namespace vlmforge::objectives
