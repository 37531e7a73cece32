#pragma once

// Flat key=value run configuration with dotted keys, '#' comments, strict
// unknown-key rejection, and the built-in stage presets.

#include <string>
#include <vector>

#include "vlmforge/errors.hpp"

namespace vlmforge::config {

struct LossWeights {
    double contrastive = 1.0;
    double itm = 1.0;
    double caption = 1.0;
    double vqa = 0.0;
    double grounding = 0.0;
};

struct StageSpec {
    std::string name;
    bool vision_trainable = true;
    bool bridge_trainable = true;
    bool lm_trainable = true;
    int steps = 0;  // 0: inherit optimizer.steps
    LossWeights weights;
};

struct RunConfig {
    // model
    int width = 32;          // LM width
    int vision_width = 32;
    int embed_dim = 32;      // shared contrastive space
    int heads = 2;
    int vision_layers = 2;
    int lm_layers = 2;
    int patch = 4;
    int context = 64;
    int image_size = 16;

    // bridge
    std::string bridge = "prefix";  // prefix | xattn | qformer
    int queries = 8;
    int resampler_layers = 2;
    std::string xattn_layers = "every_other";  // or comma-separated indices

    // optimizer
    double lr = 0.2;
    double momentum = 0.9;
    int steps = 200;
    int batch = 8;
    long long seed = 1;

    LossWeights weights;
    std::string preset;  // "", "blip2-2stage", "qwen-3stage"
    std::vector<StageSpec> stages;

    std::string raw_text;  // the file contents, for the config hash

    void validate() const;
    std::vector<int> resolve_xattn_layers() const;
    // stages with presets/defaults applied
    std::vector<StageSpec> resolve_stages() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace vlmforge::config
