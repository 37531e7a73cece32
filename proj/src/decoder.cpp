#include "vlmforge/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace vlmforge::decoder {

using namespace vlmforge::core;

void DecoderConfig::validate() const {
    if (vocab_size < text::kNumReserved)
        throw contract_error("decoder: vocab size must cover the reserved ids");
    if (heads < 1 || width % heads != 0)
        throw dimension_error("decoder: width " + std::to_string(width) +
                              " not divisible by " + std::to_string(heads) + " heads");
    if (context < 2) throw contract_error("decoder: context must be >= 2");
    for (int l : xattn_layers)
        if (l < 0 || l >= layers)
            throw contract_error("decoder: cross-attention layer " + std::to_string(l) +
                                 " out of range");
}

bool DecoderConfig::hosts_xattn(int layer) const {
    return std::find(xattn_layers.begin(), xattn_layers.end(), layer) != xattn_layers.end();
}

Decoder Decoder::init(const DecoderConfig& cfg, Rng& rng) {
    cfg.validate();
    Decoder d;
    d.cfg = cfg;
    std::vector<double> te(static_cast<size_t>(cfg.vocab_size) * cfg.width);
    for (double& v : te) v = rng.normal(0.0, 0.02);
    d.tok_emb = Tensor::from_data({cfg.vocab_size, cfg.width}, std::move(te), true);
    std::vector<double> pe(static_cast<size_t>(cfg.context) * cfg.width);
    for (double& v : pe) v = rng.normal(0.0, 0.02);
    d.pos_emb = Tensor::from_data({cfg.context, cfg.width}, std::move(pe), true);
    for (int i = 0; i < cfg.layers; ++i)
        d.blocks.push_back(nn::TransformerBlock::init(cfg.width, cfg.heads, 4 * cfg.width, rng));
    d.out_proj = nn::Linear::init(cfg.width, cfg.vocab_size, rng);
    return d;
}

int Decoder::prefix_len(const Conditioning& cond) const {
    return cond.mode == Mode::prefix ? cond.visual.rows() : 0;
}

Tensor Decoder::forward_logits(const std::vector<int>& ids, const Conditioning& cond,
                               nn::AttnTrace* trace) const {
    if (ids.empty()) throw contract_error("decoder: empty token sequence");
    if (cond.mode != Mode::none && !cond.visual.defined())
        throw contract_error("decoder: conditioning mode given without visual tokens");
    if (cond.mode != Mode::none && cond.visual.cols() != cfg.width)
        throw dimension_error("decoder: visual width " + std::to_string(cond.visual.cols()) +
                              " does not match decoder width " + std::to_string(cfg.width));

    Tensor emb = embedding_rows(tok_emb, ids);
    Tensor rows;
    if (cond.mode == Mode::prefix) {
        if (ids.size() == 1)
            rows = concat_rows({slice_rows(emb, 0, 1), cond.visual});
        else
            rows = concat_rows({slice_rows(emb, 0, 1), cond.visual,
                                slice_rows(emb, 1, static_cast<int>(ids.size()))});
    } else {
        rows = emb;
    }
    const int total = rows.rows();
    if (total > cfg.context)
        throw capacity_error("decoder: sequence length " + std::to_string(total) +
                             " exceeds context " + std::to_string(cfg.context));
    Tensor h = add(rows, slice_rows(pos_emb, 0, total));

    int hosted = 0;
    for (int l = 0; l < cfg.layers; ++l) {
        if (cond.mode == Mode::cross_attention && cfg.hosts_xattn(l)) {
            if (!cond.gated || hosted >= static_cast<int>(cond.gated->size()))
                throw contract_error("decoder: missing gated cross-attention block for layer " +
                                     std::to_string(l));
            h = (*cond.gated)[static_cast<size_t>(hosted)].forward(h, cond.visual, trace);
            ++hosted;
        }
        h = blocks[static_cast<size_t>(l)].forward(h, /*causal=*/true, 0, trace);
    }
    return out_proj.forward(h);
}

Tensor Decoder::sequence_nll(const std::vector<int>& ids, const Conditioning& cond) const {
    if (ids.size() < 2)
        throw contract_error("sequence_nll: need BOS plus at least one target token");
    const int n = static_cast<int>(ids.size());
    Tensor logits = forward_logits(ids, cond);
    const int m = prefix_len(cond);
    // predictor rows for targets ids[1..n-1] are the contiguous block
    // [m, m + n - 1) of the combined sequence
    Tensor pred_rows = slice_rows(logits, m, m + n - 1);
    std::vector<int> targets(ids.begin() + 1, ids.end());
    return cross_entropy(pred_rows, targets, Reduction::sum);
}

std::vector<int> Decoder::generate(const std::vector<int>& prompt, const Conditioning& cond,
                                   int max_len, const GenerationStrategy& strategy) const {
    if (prompt.empty()) throw contract_error("generate: empty prompt");
    const int m = prefix_len(cond);
    if (static_cast<int>(prompt.size()) + m > cfg.context)
        throw capacity_error("generate: prompt plus prefix exceeds context");
    std::vector<int> ids = prompt;
    std::vector<int> continuation;
    Rng rng(strategy.seed);
    while (static_cast<int>(continuation.size()) < max_len &&
           static_cast<int>(ids.size()) + m < cfg.context) {
        Tensor logits = forward_logits(ids, cond);
        const int last = logits.rows() - 1;
        const int v = logits.cols();
        int next = 0;
        if (strategy.kind == GenerationStrategy::Kind::greedy) {
            double best = logits.at(last, 0);
            for (int j = 1; j < v; ++j)
                if (logits.at(last, j) > best) {
                    best = logits.at(last, j);
                    next = j;
                }
        } else {
            const double temp = strategy.temperature > 0 ? strategy.temperature : 1.0;
            std::vector<double> p(static_cast<size_t>(v));
            double mx = -1e300;
            for (int j = 0; j < v; ++j) mx = std::max(mx, logits.at(last, j) / temp);
            double sum = 0.0;
            for (int j = 0; j < v; ++j) {
                p[static_cast<size_t>(j)] = std::exp(logits.at(last, j) / temp - mx);
                sum += p[static_cast<size_t>(j)];
            }
            double r = rng.uniform() * sum;
            double acc = 0.0;
            next = v - 1;
            for (int j = 0; j < v; ++j) {
                acc += p[static_cast<size_t>(j)];
                if (r < acc) {
                    next = j;
                    break;
                }
            }
        }
        continuation.push_back(next);
        ids.push_back(next);
        if (next == text::kEos) break;
    }
    return continuation;
}

void Decoder::collect(const std::string& prefix, nn::ParamList& out) const {
    out.push_back({prefix + ".tok_emb", tok_emb});
    out.push_back({prefix + ".pos_emb", pos_emb});
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    out_proj.collect(prefix + ".out_proj", out);
}

}  // namespace vlmforge::decoder
