#include "vlmforge/model.hpp"

#include <cmath>

namespace vlmforge::model {

using namespace vlmforge::core;

CrossModalPooler CrossModalPooler::init(int d, int visual_width, int heads, Rng& rng) {
    CrossModalPooler p;
    std::vector<double> clsv(static_cast<size_t>(d));
    for (double& v : clsv) v = rng.normal(0.0, 0.02);
    p.cls = Tensor::from_data({1, d}, std::move(clsv), true);
    p.self_attn = nn::MultiHeadSelfAttention::init(d, heads, rng);
    p.xattn = nn::CrossAttention::init(d, visual_width, rng);
    p.ln_self = nn::LayerNorm::init(d);
    p.ln_cross = nn::LayerNorm::init(d);
    p.ln_mlp = nn::LayerNorm::init(d);
    p.mlp = nn::Mlp::init(d, 4 * d, rng);
    return p;
}

Tensor CrossModalPooler::forward(const Tensor& text_rows, const Tensor& visual_tokens) const {
    Tensor x = concat_rows({cls, text_rows});
    x = ln_self.forward(add(x, self_attn.forward(x)));
    x = ln_cross.forward(add(x, xattn.forward(x, visual_tokens)));
    x = ln_mlp.forward(add(x, mlp.forward(x)));
    return slice_rows(x, 0, 1);
}

void CrossModalPooler::collect(const std::string& prefix, nn::ParamList& out) const {
    out.push_back({prefix + ".cls", cls});
    self_attn.collect(prefix + ".self_attn", out);
    xattn.collect(prefix + ".xattn", out);
    ln_self.collect(prefix + ".ln_self", out);
    ln_cross.collect(prefix + ".ln_cross", out);
    ln_mlp.collect(prefix + ".ln_mlp", out);
    mlp.collect(prefix + ".mlp", out);
}

VlmModel VlmModel::init(const config::RunConfig& cfg, const text::Vocab& vocab) {
    cfg.validate();
    VlmModel m;
    m.cfg = cfg;
    m.vocab = vocab;
    Rng rng(static_cast<std::uint64_t>(cfg.seed) * 6364136223846793005ull + 1442695040888963407ull);

    m.vision_enc = vision::VisionEncoder::init(cfg.image_size, cfg.image_size, 3, cfg.patch,
                                               cfg.vision_width, cfg.heads, cfg.vision_layers,
                                               rng);

    if (cfg.bridge == "prefix") m.bridge_kind = bridges::BridgeKind::prefix;
    else if (cfg.bridge == "qformer") m.bridge_kind = bridges::BridgeKind::qformer;
    else m.bridge_kind = bridges::BridgeKind::xattn;

    decoder::DecoderConfig dc;
    dc.vocab_size = vocab.size();
    dc.width = cfg.width;
    dc.layers = cfg.lm_layers;
    dc.heads = cfg.heads;
    dc.context = cfg.context;
    if (m.bridge_kind == bridges::BridgeKind::xattn)
        dc.xattn_layers = cfg.resolve_xattn_layers();

    switch (m.bridge_kind) {
        case bridges::BridgeKind::prefix:
            m.prefix_proj = bridges::PrefixProjector::init(cfg.vision_width, cfg.width, rng);
            break;
        case bridges::BridgeKind::qformer:
            m.resampler = bridges::LatentQueryResampler::init(cfg.queries, cfg.vision_width,
                                                              cfg.resampler_layers, cfg.heads,
                                                              rng);
            m.resampler_out = nn::Linear::init(cfg.vision_width, cfg.width, rng);
            break;
        case bridges::BridgeKind::xattn:
            m.xattn_vis_proj = nn::Linear::init(cfg.vision_width, cfg.width, rng);
            for (size_t i = 0; i < dc.xattn_layers.size(); ++i)
                m.gated.push_back(bridges::GatedXAttnBlock::init(cfg.width, 4 * cfg.width, rng));
            break;
    }

    m.lm = decoder::Decoder::init(dc, rng);

    m.img_proj = nn::Linear::init(cfg.vision_width, cfg.embed_dim, rng);
    m.txt_proj = nn::Linear::init(cfg.width, cfg.embed_dim, rng);
    m.contrastive = objectives::ContrastiveConfig::init(0.5);
    m.pooler = CrossModalPooler::init(cfg.width, cfg.vision_width, cfg.heads, rng);
    m.itm_head = nn::Linear::init(cfg.width, 1, rng);
    m.vqa_head = nn::Linear::init(cfg.width, 1, rng);
    m.ground_phrase_proj = nn::Linear::init(cfg.width, cfg.embed_dim, rng);
    m.ground_region_proj = nn::Linear::init(cfg.vision_width, cfg.embed_dim, rng);
    return m;
}

std::vector<NamedParam> VlmModel::params() const {
    nn::ParamList list;
    vision_enc.collect("vision", list);
    switch (bridge_kind) {
        case bridges::BridgeKind::prefix:
            prefix_proj.collect("bridge.prefix", list);
            break;
        case bridges::BridgeKind::qformer:
            resampler.collect("bridge.resampler", list);
            resampler_out.collect("bridge.resampler_out", list);
            break;
        case bridges::BridgeKind::xattn:
            xattn_vis_proj.collect("bridge.vis_proj", list);
            for (size_t i = 0; i < gated.size(); ++i)
                gated[i].collect("bridge.gated" + std::to_string(i), list);
            break;
    }
    list.push_back({"bridge.img_proj.w", img_proj.w});
    list.push_back({"bridge.img_proj.b", img_proj.b});
    list.push_back({"bridge.txt_proj.w", txt_proj.w});
    list.push_back({"bridge.txt_proj.b", txt_proj.b});
    list.push_back({"bridge.log_tau", contrastive.log_tau});
    pooler.collect("bridge.pooler", list);
    itm_head.collect("bridge.itm_head", list);
    vqa_head.collect("bridge.vqa_head", list);
    ground_phrase_proj.collect("bridge.ground_phrase", list);
    ground_region_proj.collect("bridge.ground_region", list);
    lm.collect("lm", list);

    std::vector<NamedParam> out;
    out.reserve(list.size());
    for (auto& p : list) {
        std::string group = p.name.substr(0, p.name.find('.'));
        out.push_back({p.name, p.tensor, group});
    }
    return out;
}

Tensor VlmModel::visual_patches(const vision::Image& img) const {
    return vision_enc.forward(img).patch_rows();
}

decoder::Conditioning VlmModel::conditioning(const Tensor& vis) const {
    decoder::Conditioning cond;
    switch (bridge_kind) {
        case bridges::BridgeKind::prefix:
            cond.mode = decoder::Mode::prefix;
            cond.visual = prefix_proj.forward(vis);
            break;
        case bridges::BridgeKind::qformer:
            cond.mode = decoder::Mode::prefix;
            cond.visual = resampler_out.forward(resampler.forward(vis));
            break;
        case bridges::BridgeKind::xattn:
            cond.mode = decoder::Mode::cross_attention;
            cond.visual = xattn_vis_proj.forward(vis);
            cond.gated = &gated;
            break;
    }
    return cond;
}

std::vector<int> VlmModel::encode_caption(const std::string& caption) const {
    std::vector<int> ids{text::kBos};
    for (int id : vocab.encode(text::tokenize(caption))) ids.push_back(id);
    ids.push_back(text::kEos);
    return ids;
}

std::vector<int> VlmModel::content_ids(const std::string& sentence) const {
    return vocab.encode(text::tokenize(sentence));
}

Tensor VlmModel::caption_nll(const Tensor& vis, const std::string& caption) const {
    return lm.sequence_nll(encode_caption(caption), conditioning(vis));
}

std::string VlmModel::generate_caption(const vision::Image& img, int max_len) const {
    Tensor vis = visual_patches(img);
    const auto cont = lm.generate({text::kBos}, conditioning(vis), max_len);
    std::vector<std::string> toks;
    for (int id : cont) {
        if (id == text::kEos) break;
        toks.push_back(vocab.token(id));
    }
    return text::join_tokens(toks);
}

Tensor VlmModel::image_embedding(const Tensor& vis) const {
    Tensor pooled = bridge_kind == bridges::BridgeKind::qformer
                        ? mean_rows(resampler.forward(vis))
                        : mean_rows(vis);
    return img_proj.forward(pooled);
}

Tensor VlmModel::text_embedding(const std::string& caption) const {
    const auto ids = content_ids(caption);
    if (ids.empty()) throw contract_error("text_embedding: empty caption");
    return txt_proj.forward(mean_rows(embedding_rows(lm.tok_emb, ids)));
}

Tensor VlmModel::pooled_pair(const Tensor& vis, const std::vector<int>& text_ids) const {
    if (text_ids.empty()) throw contract_error("pooled_pair: empty text");
    return pooler.forward(embedding_rows(lm.tok_emb, text_ids), vis);
}

Tensor VlmModel::itm_logit(const Tensor& vis, const std::string& sentence) const {
    return itm_head.forward(pooled_pair(vis, content_ids(sentence)));
}

Tensor VlmModel::vqa_scores(const Tensor& vis, const synth::QaItem& qa) const {
    std::vector<Tensor> scores;
    const auto q_ids = content_ids(qa.question);
    for (const auto& choice : qa.choices) {
        auto ids = q_ids;
        for (int id : content_ids(choice)) ids.push_back(id);
        scores.push_back(vqa_head.forward(pooled_pair(vis, ids)));
    }
    return concat_cols(scores);
}

Tensor VlmModel::grounding_scores(const Tensor& vis, const synth::ReferringItem& ref) const {
    const int patch = cfg.patch;
    const int gw = cfg.image_size / patch;
    const int gh = gw;
    Tensor phrase = ground_phrase_proj.forward(pooled_pair(vis, content_ids(ref.phrase)));
    std::vector<Tensor> scores;
    for (const auto& box : ref.proposals) {
        std::vector<int> inside;
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const double px0 = gx * patch, py0 = gy * patch;
                const double px1 = px0 + patch, py1 = py0 + patch;
                const double ox = std::min(px1, box.x1) - std::max(px0, box.x0);
                const double oy = std::min(py1, box.y1) - std::max(py0, box.y0);
                if (ox > 0 && oy > 0) inside.push_back(gy * gw + gx);
            }
        if (inside.empty()) {
            // degenerate box: fall back to the patch holding its top-left corner
            const int gx = std::min(gw - 1, std::max(0, static_cast<int>(box.x0) / patch));
            const int gy = std::min(gh - 1, std::max(0, static_cast<int>(box.y0) / patch));
            inside.push_back(gy * gw + gx);
        }
        Tensor region = ground_region_proj.forward(mean_rows(embedding_rows(vis, inside)));
        scores.push_back(matmul_nt(phrase, region));
    }
    return concat_cols(scores);
}

}  // namespace vlmforge::model
