#pragma once

// Image -> visual tokens: valid-mode convolution, residual blocks, and the
// ViT patch-embedding + self-attention encoder.

#include <vector>

#include "vlmforge/nn.hpp"

namespace vlmforge::vision {

using core::Tensor;

struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> pixels;  // row-major, channel fastest, values in [0,1]

    void validate() const;
    Tensor to_tensor(bool requires_grad = false) const;  // [h x w x c]
    double at(int y, int x, int ch) const {
        return pixels[(static_cast<size_t>(y) * w + x) * c + ch];
    }
};

enum class TokenLayout { global, patch_grid, region };

struct VisualTokens {
    Tensor tokens;  // [m x d], or [m+1 x d] with a leading CLS row
    TokenLayout layout = TokenLayout::patch_grid;
    bool has_cls = false;
    int grid_h = 0, grid_w = 0;  // patch grid, when layout == patch_grid

    int count() const { return tokens.rows(); }
    // the tokens consumers see by default: patch rows without CLS
    Tensor patch_rows() const;
};

struct PatchEmbed {
    int patch = 4;
    int width = 32;
    nn::Linear proj;  // [(P*P*C) x d]
    Tensor cls;       // [1 x d]
    Tensor pos;       // [(m+1) x d] learned positional table for a fixed grid

    static PatchEmbed init(int image_h, int image_w, int channels, int patch, int width,
                           Rng& rng);
    VisualTokens forward(const Image& img) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Flattens one P x P x C patch in row-major order (y, then x, then channel);
// patches themselves are taken in row-major grid order.
std::vector<double> flatten_patch(const Image& img, int py, int px, int patch);

struct VitEncoder {
    std::vector<nn::TransformerBlock> blocks;

    static VitEncoder init(int width, int heads, int layers, int mlp_hidden, Rng& rng);
    VisualTokens forward(const VisualTokens& in, nn::AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct VisionEncoder {
    PatchEmbed embed;
    VitEncoder encoder;

    static VisionEncoder init(int image_h, int image_w, int channels, int patch, int width,
                              int heads, int layers, Rng& rng);
    VisualTokens forward(const Image& img, nn::AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

}  // namespace vlmforge::vision
