#include "vlmforge/objectives.hpp"

#include <cmath>

namespace vlmforge::objectives {

using namespace vlmforge::core;

ContrastiveConfig ContrastiveConfig::init(double tau) {
    ContrastiveConfig c;
    c.log_tau = Tensor::scalar(std::log(tau), true);
    return c;
}

Tensor ContrastiveConfig::temperature() const {
    return exp_clamped(log_tau, tau_min, tau_max);
}

Tensor contrastive_loss_from_similarity(const Tensor& s) {
    if (s.ndim() != 2 || s.rows() != s.cols())
        throw dimension_error("contrastive: similarity matrix must be square");
    const int n = s.rows();
    if (n < 2) throw contract_error("contrastive: need at least 2 pairs for in-batch negatives");
    std::vector<int> diag(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) diag[static_cast<size_t>(i)] = i;
    Tensor i2t = cross_entropy(s, diag, Reduction::mean);
    Tensor t2i = cross_entropy(transpose(s), diag, Reduction::mean);
    return scale(add(i2t, t2i), 0.5);
}

ContrastiveResult contrastive_loss(const EmbeddingBatch& batch, const ContrastiveConfig& cfg) {
    if (batch.image_embs.rows() != batch.text_embs.rows())
        throw contract_error("contrastive: image/text batch sizes differ");
    if (batch.image_embs.cols() != batch.text_embs.cols())
        throw dimension_error("contrastive: embedding widths differ");
    if (batch.image_embs.rows() < 2)
        throw contract_error("contrastive: need at least 2 pairs for in-batch negatives");
    Tensor v = l2_normalize_rows(batch.image_embs);
    Tensor u = l2_normalize_rows(batch.text_embs);
    Tensor s = div_by_scalar(matmul_nt(v, u), cfg.temperature());
    ContrastiveResult out;
    out.similarity = s;
    out.loss = contrastive_loss_from_similarity(s);
    return out;
}

Tensor itm_loss(const Tensor& logits, const std::vector<double>& labels) {
    for (double y : labels)
        if (y != 0.0 && y != 1.0)
            throw contract_error("itm_loss: labels must be 0 or 1");
    return bce_with_logits(logits, labels);
}

Tensor answer_choice_loss(const Tensor& scores, const std::vector<int>& truth) {
    if (scores.cols() < 2)
        throw contract_error("answer_choice_loss: need at least 2 candidates");
    return cross_entropy(scores, truth, Reduction::mean);
}

Tensor region_grounding_loss(const Tensor& region_scores, int truth_index) {
    if (region_scores.size() < 2)
        throw contract_error("region_grounding_loss: need at least 2 proposals");
    const int j = static_cast<int>(region_scores.size());
    if (truth_index < 0 || truth_index >= j)
        throw missing_gold_error("region_grounding_loss: gold region " +
                                 std::to_string(truth_index) + " not among " +
                                 std::to_string(j) + " proposals");
    Tensor row = reshape(region_scores, {1, j});
    return cross_entropy(row, {truth_index}, Reduction::mean);
}

std::vector<ItmPair> negative_sampler(int batch_size, Rng& rng) {
    if (batch_size < 2)
        throw contract_error("negative_sampler: need a batch of at least 2 aligned pairs");
    std::vector<ItmPair> out;
    out.reserve(static_cast<size_t>(batch_size) * 2);
    for (int i = 0; i < batch_size; ++i) out.push_back({i, i, 1});
    for (int i = 0; i < batch_size; ++i) {
        int j = rng.uniform_int(batch_size - 1);
        if (j >= i) ++j;  // uniform over the other indices
        out.push_back({i, j, 0});
    }
    return out;
}

}  // namespace vlmforge::objectives
