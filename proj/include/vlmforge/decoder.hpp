#pragma once

// Autoregressive transformer decoder: causal self-attention over the token
// sequence, optional visual conditioning through a prefix insert or through
// gated cross-attention blocks supplied by the fusion bridge.

#include <optional>

#include "vlmforge/bridges.hpp"
#include "vlmforge/nn.hpp"
#include "vlmforge/text.hpp"

namespace vlmforge::decoder {

using core::Tensor;

struct DecoderConfig {
    int vocab_size = 0;
    int width = 32;
    int layers = 2;
    int heads = 2;
    int context = 64;
    std::vector<int> xattn_layers;  // layer indices hosting gated cross-attention

    void validate() const;
    bool hosts_xattn(int layer) const;
};

enum class Mode { none, prefix, cross_attention };

struct Conditioning {
    Mode mode = Mode::none;
    Tensor visual;  // LM-width tokens; prefix rows or cross-attention memory
    const std::vector<bridges::GatedXAttnBlock>* gated = nullptr;  // one per hosted layer
};

struct GenerationStrategy {
    enum class Kind { greedy, temperature_sample };
    Kind kind = Kind::greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

struct Decoder {
    DecoderConfig cfg;
    Tensor tok_emb;  // [V x d]
    Tensor pos_emb;  // [context x d]
    std::vector<nn::TransformerBlock> blocks;
    nn::Linear out_proj;  // [d x V]

    static Decoder init(const DecoderConfig& cfg, Rng& rng);

    // Logits for every combined position; the caller maps text positions via
    // prefix_len(). Causality: position rows only see earlier rows.
    Tensor forward_logits(const std::vector<int>& ids, const Conditioning& cond,
                          nn::AttnTrace* trace = nullptr) const;

    int prefix_len(const Conditioning& cond) const;

    // -sum_i log p(ids[i] | ids[<i], visual) over i = 1..len-1. ids[0] is
    // context only (BOS); callers append EOS themselves.
    Tensor sequence_nll(const std::vector<int>& ids, const Conditioning& cond) const;

    // Greedy or seeded temperature sampling; returns the continuation
    // (EOS included when produced). Stops at EOS, max_len, or a full context.
    std::vector<int> generate(const std::vector<int>& prompt, const Conditioning& cond,
                              int max_len, const GenerationStrategy& strategy = {}) const;

    void collect(const std::string& prefix, nn::ParamList& out) const;
};

}  // namespace vlmforge::decoder
