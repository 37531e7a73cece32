#pragma once

// The assembled workbench model: vision encoder + one of the three bridges +
// autoregressive decoder, plus the alignment heads (contrastive projections,
// cross-modal pooler, ITM/VQA/grounding scorers). Parameters are grouped as
// vision / bridge / lm for the staged freeze schedules.

#include "vlmforge/config.hpp"
#include "vlmforge/decoder.hpp"
#include "vlmforge/objectives.hpp"
#include "vlmforge/scene.hpp"

namespace vlmforge::model {

using core::Tensor;

struct NamedParam {
    std::string name;   // group-prefixed, e.g. "lm.block0.attn.wq.w"
    Tensor tensor;
    std::string group;  // vision | bridge | lm
};

// One-layer cross-modal encoder: a learned CLS row joins the text embeddings,
// self-attention mixes them, cross-attention reads the visual tokens, and the
// CLS output is the pooled pair representation h(I, t).
struct CrossModalPooler {
    Tensor cls;  // [1 x d]
    nn::MultiHeadSelfAttention self_attn;
    nn::CrossAttention xattn;
    nn::LayerNorm ln_self, ln_cross, ln_mlp;
    nn::Mlp mlp;

    static CrossModalPooler init(int d, int visual_width, int heads, Rng& rng);
    Tensor forward(const Tensor& text_rows, const Tensor& visual_tokens) const;  // [1 x d]
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct VlmModel {
    config::RunConfig cfg;
    text::Vocab vocab;

    vision::VisionEncoder vision_enc;

    bridges::BridgeKind bridge_kind = bridges::BridgeKind::prefix;
    bridges::PrefixProjector prefix_proj;             // prefix
    bridges::LatentQueryResampler resampler;          // qformer
    nn::Linear resampler_out;                         // qformer: dv -> dlm
    nn::Linear xattn_vis_proj;                        // xattn: dv -> dlm
    std::vector<bridges::GatedXAttnBlock> gated;      // xattn, one per hosted layer

    decoder::Decoder lm;

    nn::Linear img_proj;  // dv -> embed_dim
    nn::Linear txt_proj;  // dlm -> embed_dim
    objectives::ContrastiveConfig contrastive;
    CrossModalPooler pooler;
    nn::Linear itm_head;           // dlm -> 1
    nn::Linear vqa_head;           // dlm -> 1
    nn::Linear ground_phrase_proj; // dlm -> embed_dim
    nn::Linear ground_region_proj; // dv -> embed_dim

    static VlmModel init(const config::RunConfig& cfg, const text::Vocab& vocab);

    std::vector<NamedParam> params() const;

    // ---- encoding ----
    Tensor visual_patches(const vision::Image& img) const;  // [m x dv]
    decoder::Conditioning conditioning(const Tensor& visual_patches) const;

    std::vector<int> encode_caption(const std::string& caption) const;  // BOS ... EOS
    Tensor caption_nll(const Tensor& visual_patches, const std::string& caption) const;
    std::string generate_caption(const vision::Image& img, int max_len = 24) const;

    // ---- alignment heads ----
    Tensor image_embedding(const Tensor& visual_patches) const;       // [1 x de]
    Tensor text_embedding(const std::string& caption) const;          // [1 x de]
    Tensor pooled_pair(const Tensor& visual_patches, const std::vector<int>& text_ids) const;
    Tensor itm_logit(const Tensor& visual_patches, const std::string& sentence) const;
    Tensor vqa_scores(const Tensor& visual_patches, const synth::QaItem& qa) const;  // [1 x K]
    Tensor grounding_scores(const Tensor& visual_patches, const synth::ReferringItem& ref) const;

    std::vector<int> content_ids(const std::string& sentence) const;  // no BOS/EOS
};

}  // namespace vlmforge::model
