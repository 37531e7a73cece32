#include "vlmforge/vision.hpp"

#include <cmath>

namespace vlmforge::vision {

using namespace vlmforge::core;

void Image::validate() const {
    if (h < 1 || w < 1 || c < 1)
        throw dimension_error("image: dimensions must be >= 1");
    if (pixels.size() != static_cast<size_t>(h) * w * c)
        throw dimension_error("image: pixel count does not match " + std::to_string(h) + "x" +
                              std::to_string(w) + "x" + std::to_string(c));
    for (double v : pixels)
        if (!(v >= 0.0 && v <= 1.0))
            throw contract_error("image: pixel value " + std::to_string(v) +
                                 " outside [0, 1]");
}

Tensor Image::to_tensor(bool requires_grad) const {
    validate();
    return Tensor::from_data({h, w, c}, pixels, requires_grad);
}

Tensor VisualTokens::patch_rows() const {
    if (!has_cls) return tokens;
    return slice_rows(tokens, 1, tokens.rows());
}

std::vector<double> flatten_patch(const Image& img, int py, int px, int patch) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(patch) * patch * img.c);
    for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                out.push_back(img.at(py * patch + y, px * patch + x, ch));
    return out;
}

PatchEmbed PatchEmbed::init(int image_h, int image_w, int channels, int patch, int width,
                            Rng& rng) {
    if (image_h % patch != 0 || image_w % patch != 0)
        throw dimension_error("patch_embed: image " + std::to_string(image_h) + "x" +
                              std::to_string(image_w) + " not divisible by patch size " +
                              std::to_string(patch));
    PatchEmbed pe;
    pe.patch = patch;
    pe.width = width;
    pe.proj = nn::Linear::init(patch * patch * channels, width, rng);
    std::vector<double> clsv(static_cast<size_t>(width));
    for (double& v : clsv) v = rng.normal(0.0, 0.02);
    pe.cls = Tensor::from_data({1, width}, std::move(clsv), true);
    const int m = (image_h / patch) * (image_w / patch);
    std::vector<double> posv(static_cast<size_t>(m + 1) * width);
    for (double& v : posv) v = rng.normal(0.0, 0.02);
    pe.pos = Tensor::from_data({m + 1, width}, std::move(posv), true);
    return pe;
}

VisualTokens PatchEmbed::forward(const Image& img) const {
    img.validate();
    if (img.h % patch != 0 || img.w % patch != 0)
        throw dimension_error("patch_embed: image " + std::to_string(img.h) + "x" +
                              std::to_string(img.w) + " not divisible by patch size " +
                              std::to_string(patch));
    const int gh = img.h / patch, gw = img.w / patch;
    const int m = gh * gw;
    if (pos.rows() != m + 1)
        throw dimension_error("patch_embed: positional table built for " +
                              std::to_string(pos.rows() - 1) + " patches, image yields " +
                              std::to_string(m));
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(m) * patch * patch * img.c);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            auto p = flatten_patch(img, gy, gx, patch);
            flat.insert(flat.end(), p.begin(), p.end());
        }
    Tensor patches = Tensor::from_data({m, patch * patch * img.c}, std::move(flat));
    Tensor projected = proj.forward(patches);
    Tensor z0 = add(concat_rows({cls, projected}), pos);
    VisualTokens vt;
    vt.tokens = z0;
    vt.layout = TokenLayout::patch_grid;
    vt.has_cls = true;
    vt.grid_h = gh;
    vt.grid_w = gw;
    return vt;
}

void PatchEmbed::collect(const std::string& prefix, nn::ParamList& out) const {
    proj.collect(prefix + ".proj", out);
    out.push_back({prefix + ".cls", cls});
    out.push_back({prefix + ".pos", pos});
}

VitEncoder VitEncoder::init(int width, int heads, int layers, int mlp_hidden, Rng& rng) {
    VitEncoder v;
    for (int i = 0; i < layers; ++i)
        v.blocks.push_back(nn::TransformerBlock::init(width, heads, mlp_hidden, rng));
    return v;
}

VisualTokens VitEncoder::forward(const VisualTokens& in, nn::AttnTrace* trace) const {
    VisualTokens out = in;
    for (const auto& b : blocks) out.tokens = b.forward(out.tokens, false, 0, trace);
    return out;
}

void VitEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

VisionEncoder VisionEncoder::init(int image_h, int image_w, int channels, int patch,
                                  int width, int heads, int layers, Rng& rng) {
    VisionEncoder ve;
    ve.embed = PatchEmbed::init(image_h, image_w, channels, patch, width, rng);
    ve.encoder = VitEncoder::init(width, heads, layers, 4 * width, rng);
    return ve;
}

VisualTokens VisionEncoder::forward(const Image& img, nn::AttnTrace* trace) const {
    return encoder.forward(embed.forward(img), trace);
}

void VisionEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
    embed.collect(prefix + ".patch_embed", out);
    encoder.collect(prefix + ".vit", out);
}

}  // namespace vlmforge::vision
