#include "vlmforge/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace vlmforge::config {

using core::contract_error;
using core::io_error;
using core::parse_error;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw parse_error("config: key " + key + " expects an integer, got '" + v + "'");
    }
}

long long to_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw parse_error("config: key " + key + " expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw parse_error("config: key " + key + " expects a number, got '" + v + "'");
    }
}

bool to_frozen_flag(const std::string& key, const std::string& v) {
    if (v == "frozen") return false;
    if (v == "trainable") return true;
    throw parse_error("config: key " + key + " expects frozen|trainable, got '" + v + "'");
}

bool set_loss_key(LossWeights& w, const std::string& field, double v) {
    if (field == "contrastive") w.contrastive = v;
    else if (field == "itm") w.itm = v;
    else if (field == "caption") w.caption = v;
    else if (field == "vqa") w.vqa = v;
    else if (field == "grounding") w.grounding = v;
    else return false;
    return true;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    cfg.raw_text = text;
    std::map<int, StageSpec> stage_map;
    std::map<int, bool> stage_has_weights;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw parse_error("config line " + std::to_string(line_no) + ": empty key or value");

        if (key == "model.width") cfg.width = to_int(key, val);
        else if (key == "model.vision_width") cfg.vision_width = to_int(key, val);
        else if (key == "model.embed_dim") cfg.embed_dim = to_int(key, val);
        else if (key == "model.heads") cfg.heads = to_int(key, val);
        else if (key == "model.vision_layers") cfg.vision_layers = to_int(key, val);
        else if (key == "model.lm_layers") cfg.lm_layers = to_int(key, val);
        else if (key == "model.patch") cfg.patch = to_int(key, val);
        else if (key == "model.context") cfg.context = to_int(key, val);
        else if (key == "model.image_size") cfg.image_size = to_int(key, val);
        else if (key == "bridge.kind") cfg.bridge = val;
        else if (key == "bridge.queries") cfg.queries = to_int(key, val);
        else if (key == "bridge.resampler_layers") cfg.resampler_layers = to_int(key, val);
        else if (key == "bridge.xattn_layers") cfg.xattn_layers = val;
        else if (key == "optimizer.lr") cfg.lr = to_double(key, val);
        else if (key == "optimizer.momentum") cfg.momentum = to_double(key, val);
        else if (key == "optimizer.steps") cfg.steps = to_int(key, val);
        else if (key == "optimizer.batch") cfg.batch = to_int(key, val);
        else if (key == "optimizer.seed") cfg.seed = to_long(key, val);
        else if (key == "stages.preset") cfg.preset = val;
        else if (key.rfind("loss.", 0) == 0) {
            if (!set_loss_key(cfg.weights, key.substr(5), to_double(key, val)))
                throw parse_error("config: unknown key " + key);
        } else if (key.rfind("stage.", 0) == 0) {
            const size_t dot = key.find('.', 6);
            if (dot == std::string::npos)
                throw parse_error("config: malformed stage key " + key);
            const int idx = to_int(key, key.substr(6, dot - 6));
            if (idx < 1) throw parse_error("config: stage indices start at 1: " + key);
            const std::string field = key.substr(dot + 1);
            StageSpec& st = stage_map[idx];
            if (st.name.empty()) st.name = "stage-" + std::to_string(idx);
            if (field == "name") st.name = val;
            else if (field == "vision") st.vision_trainable = to_frozen_flag(key, val);
            else if (field == "bridge") st.bridge_trainable = to_frozen_flag(key, val);
            else if (field == "lm") st.lm_trainable = to_frozen_flag(key, val);
            else if (field == "steps") st.steps = to_int(key, val);
            else if (field.rfind("loss.", 0) == 0) {
                if (!stage_has_weights[idx]) {
                    st.weights = LossWeights{};  // per-stage weights start from defaults
                    stage_has_weights[idx] = true;
                }
                if (!set_loss_key(st.weights, field.substr(5), to_double(key, val)))
                    throw parse_error("config: unknown key " + key);
            } else {
                throw parse_error("config: unknown key " + key);
            }
        } else {
            throw parse_error("config: unknown key " + key);
        }
    }

    int expected = 1;
    for (auto& [idx, st] : stage_map) {
        if (idx != expected)
            throw parse_error("config: stage indices must be contiguous from 1; missing stage." +
                              std::to_string(expected));
        ++expected;
        if (!stage_has_weights[idx]) st.weights = cfg.weights;
        cfg.stages.push_back(st);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void RunConfig::validate() const {
    auto positive = [](const char* name, long long v) {
        if (v < 1) throw contract_error(std::string("config: ") + name + " must be >= 1");
    };
    positive("model.width", width);
    positive("model.vision_width", vision_width);
    positive("model.embed_dim", embed_dim);
    positive("model.heads", heads);
    positive("model.vision_layers", vision_layers);
    positive("model.lm_layers", lm_layers);
    positive("model.patch", patch);
    positive("model.context", context);
    positive("model.image_size", image_size);
    positive("bridge.queries", queries);
    positive("bridge.resampler_layers", resampler_layers);
    positive("optimizer.steps", steps);
    positive("optimizer.batch", batch);
    if (width % heads != 0)
        throw contract_error("config: model.width must be divisible by model.heads");
    if (vision_width % heads != 0)
        throw contract_error("config: model.vision_width must be divisible by model.heads");
    if (image_size % patch != 0)
        throw contract_error("config: model.image_size must be divisible by model.patch");
    if (bridge != "prefix" && bridge != "xattn" && bridge != "qformer")
        throw contract_error("config: bridge.kind must be prefix, xattn or qformer");
    if (lr <= 0) throw contract_error("config: optimizer.lr must be positive");
    if (momentum < 0 || momentum >= 1)
        throw contract_error("config: optimizer.momentum must be in [0, 1)");
    if (!preset.empty() && preset != "blip2-2stage" && preset != "qwen-3stage")
        throw contract_error("config: unknown stages.preset " + preset);
    if (!preset.empty() && !stages.empty())
        throw contract_error("config: give either stages.preset or explicit stage.N keys");
    resolve_xattn_layers();
    for (const auto& st : resolve_stages()) {
        if (!st.vision_trainable && !st.bridge_trainable && !st.lm_trainable)
            throw contract_error("config: stage '" + st.name + "' has no trainable group");
        if (st.weights.contrastive > 0 && batch < 2)
            throw contract_error("config: contrastive loss needs optimizer.batch >= 2");
    }
}

std::vector<int> RunConfig::resolve_xattn_layers() const {
    std::vector<int> out;
    if (xattn_layers == "none") return out;
    if (xattn_layers == "every_other") {
        for (int i = 0; i < lm_layers; i += 2) out.push_back(i);
        return out;
    }
    if (xattn_layers == "all") {
        for (int i = 0; i < lm_layers; ++i) out.push_back(i);
        return out;
    }
    std::istringstream ss(xattn_layers);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const int l = to_int("bridge.xattn_layers", trim(item));
        if (l < 0 || l >= lm_layers)
            throw contract_error("config: bridge.xattn_layers index " + std::to_string(l) +
                                 " out of range for " + std::to_string(lm_layers) + " layers");
        out.push_back(l);
    }
    if (out.empty()) throw contract_error("config: bridge.xattn_layers resolved to nothing");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<StageSpec> RunConfig::resolve_stages() const {
    std::vector<StageSpec> out;
    if (!stages.empty()) {
        out = stages;
    } else if (preset == "blip2-2stage") {
        StageSpec s1;
        s1.name = "vision-bridge-pretrain";
        s1.vision_trainable = true;
        s1.bridge_trainable = true;
        s1.lm_trainable = false;
        s1.weights = LossWeights{1.0, 1.0, 1.0, 0.0, 0.0};
        StageSpec s2;
        s2.name = "frozen-lm-coupling";
        s2.vision_trainable = false;
        s2.bridge_trainable = true;
        s2.lm_trainable = false;
        s2.weights = LossWeights{0.0, 0.0, 1.0, 0.0, 0.0};
        out = {s1, s2};
    } else if (preset == "qwen-3stage") {
        StageSpec s1;
        s1.name = "vision-bridge-pretrain";
        s1.vision_trainable = true;
        s1.bridge_trainable = true;
        s1.lm_trainable = false;
        s1.weights = LossWeights{1.0, 1.0, 1.0, 0.0, 0.0};
        StageSpec s2;
        s2.name = "multitask-pretrain";
        s2.vision_trainable = true;
        s2.bridge_trainable = true;
        s2.lm_trainable = true;
        s2.weights = LossWeights{1.0, 1.0, 1.0, 1.0, 1.0};
        StageSpec s3;
        s3.name = "chat-finetune";
        s3.vision_trainable = false;
        s3.bridge_trainable = true;
        s3.lm_trainable = true;
        s3.weights = LossWeights{0.0, 0.0, 1.0, 1.0, 0.0};
        out = {s1, s2, s3};
    } else {
        StageSpec s;
        s.name = "train";
        s.weights = weights;
        out = {s};
    }
    for (auto& st : out)
        if (st.steps <= 0) st.steps = steps;
    return out;
}

}  // namespace vlmforge::config
