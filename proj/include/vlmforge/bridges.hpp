#pragma once

// The three vision-to-language conditioning mechanisms: per-token MLP prefix
// projection, tanh-gated cross-attention blocks, and latent-query resampling.

#include "vlmforge/nn.hpp"
#include "vlmforge/vision.hpp"

namespace vlmforge::bridges {

using core::Tensor;

enum class BridgeKind { prefix, xattn, qformer };

// Two-layer MLP applied independently to each visual token, mapping the
// vision width into the LM embedding width.
struct PrefixProjector {
    nn::Linear fc1, fc2;

    static PrefixProjector init(int vision_width, int lm_width, Rng& rng);
    Tensor forward(const Tensor& visual_tokens) const;  // [m x dv] -> [m x dlm]
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Y'  = Y  + tanh(a_xattn) * XAttn(Y, X)
// Y'' = Y' + tanh(a_dense) * MLP(Y')
// Gates start at zero, so a fresh block is the identity map on Y.
struct GatedXAttnBlock {
    nn::CrossAttention xattn;
    nn::Mlp mlp;
    Tensor alpha_xattn;  // scalar
    Tensor alpha_dense;  // scalar

    static GatedXAttnBlock init(int lm_width, int mlp_hidden, Rng& rng);
    Tensor forward(const Tensor& text_states, const Tensor& visual_tokens,
                   nn::AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// A fixed set of learned queries cross-attends over the visual tokens;
// alternating cross-/self-attention layers refine them. Output count is
// always the query count, whatever the input length.
struct LatentQueryResampler {
    Tensor queries;  // [q x d]
    struct Layer {
        bool is_cross = true;
        nn::CrossAttention cross;          // when is_cross
        nn::MultiHeadSelfAttention self;   // when !is_cross
        nn::LayerNorm ln_attn, ln_mlp;
        nn::Mlp mlp;
    };
    std::vector<Layer> layers;

    static LatentQueryResampler init(int num_queries, int width, int layers, int heads,
                                     Rng& rng);
    Tensor forward(const Tensor& visual_tokens, nn::AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

}  // namespace vlmforge::bridges
