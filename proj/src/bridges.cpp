#include "vlmforge/bridges.hpp"

namespace vlmforge::bridges {

using namespace vlmforge::core;

PrefixProjector PrefixProjector::init(int vision_width, int lm_width, Rng& rng) {
    PrefixProjector p;
    const int hidden = std::max(vision_width, lm_width);
    p.fc1 = nn::Linear::init(vision_width, hidden, rng);
    p.fc2 = nn::Linear::init(hidden, lm_width, rng);
    return p;
}

Tensor PrefixProjector::forward(const Tensor& visual_tokens) const {
    if (visual_tokens.cols() != fc1.w.rows())
        throw dimension_error("prefix projector: visual width " +
                              std::to_string(visual_tokens.cols()) + " does not match " +
                              std::to_string(fc1.w.rows()));
    return fc2.forward(gelu(fc1.forward(visual_tokens)));
}

void PrefixProjector::collect(const std::string& prefix, nn::ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

GatedXAttnBlock GatedXAttnBlock::init(int lm_width, int mlp_hidden, Rng& rng) {
    GatedXAttnBlock b;
    b.xattn = nn::CrossAttention::init(lm_width, lm_width, rng);
    b.mlp = nn::Mlp::init(lm_width, mlp_hidden, rng);
    b.alpha_xattn = Tensor::zeros({1}, true);
    b.alpha_dense = Tensor::zeros({1}, true);
    return b;
}

Tensor GatedXAttnBlock::forward(const Tensor& text_states, const Tensor& visual_tokens,
                                nn::AttnTrace* trace) const {
    if (text_states.cols() != visual_tokens.cols())
        throw dimension_error("gated cross-attention: text width " +
                              std::to_string(text_states.cols()) + " vs visual width " +
                              std::to_string(visual_tokens.cols()));
    if (visual_tokens.rows() < 1)
        throw contract_error("gated cross-attention: no visual keys");
    Tensor y1 = gated_residual_add(text_states, xattn.forward(text_states, visual_tokens, trace),
                                   alpha_xattn);
    return gated_residual_add(y1, mlp.forward(y1), alpha_dense);
}

void GatedXAttnBlock::collect(const std::string& prefix, nn::ParamList& out) const {
    xattn.collect(prefix + ".xattn", out);
    mlp.collect(prefix + ".mlp", out);
    out.push_back({prefix + ".alpha_xattn", alpha_xattn});
    out.push_back({prefix + ".alpha_dense", alpha_dense});
}

LatentQueryResampler LatentQueryResampler::init(int num_queries, int width, int layers,
                                                int heads, Rng& rng) {
    if (num_queries < 1) throw contract_error("resampler: need at least one query");
    LatentQueryResampler r;
    std::vector<double> q(static_cast<size_t>(num_queries) * width);
    for (double& v : q) v = rng.normal(0.0, 0.02);
    r.queries = Tensor::from_data({num_queries, width}, std::move(q), true);
    for (int i = 0; i < layers; ++i) {
        Layer layer;
        layer.is_cross = i % 2 == 0;  // cross first, then self, alternating
        if (layer.is_cross)
            layer.cross = nn::CrossAttention::init(width, width, rng);
        else
            layer.self = nn::MultiHeadSelfAttention::init(width, heads, rng);
        layer.ln_attn = nn::LayerNorm::init(width);
        layer.ln_mlp = nn::LayerNorm::init(width);
        layer.mlp = nn::Mlp::init(width, 4 * width, rng);
        r.layers.push_back(std::move(layer));
    }
    return r;
}

Tensor LatentQueryResampler::forward(const Tensor& visual_tokens, nn::AttnTrace* trace) const {
    if (visual_tokens.rows() < 1)
        throw contract_error("resampler: no visual tokens to resample");
    if (visual_tokens.cols() != queries.cols())
        throw dimension_error("resampler: visual width " +
                              std::to_string(visual_tokens.cols()) + " vs query width " +
                              std::to_string(queries.cols()));
    Tensor q = queries;
    for (const auto& layer : layers) {
        Tensor attended = layer.is_cross ? layer.cross.forward(q, visual_tokens, trace)
                                         : layer.self.forward(q, false, 0, trace);
        q = layer.ln_attn.forward(add(q, attended));
        q = layer.ln_mlp.forward(add(q, layer.mlp.forward(q)));
    }
    return q;
}

void LatentQueryResampler::collect(const std::string& prefix, nn::ParamList& out) const {
    out.push_back({prefix + ".queries", queries});
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string lp = prefix + ".layer" + std::to_string(i);
        if (layers[i].is_cross)
            layers[i].cross.collect(lp + ".cross", out);
        else
            layers[i].self.collect(lp + ".self", out);
        layers[i].ln_attn.collect(lp + ".ln_attn", out);
        layers[i].ln_mlp.collect(lp + ".ln_mlp", out);
        layers[i].mlp.collect(lp + ".mlp", out);
    }
}

}  // namespace vlmforge::bridges
