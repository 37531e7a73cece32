#include "vlmforge/train.hpp"

#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "vlmforge/checkpoint.hpp"

namespace vlmforge::train {

using namespace vlmforge::core;
using model::NamedParam;

namespace {

struct Sgd {
    double lr, momentum;
    std::unordered_map<TensorNode*, std::vector<double>> velocity;

    void step(const std::vector<NamedParam>& params,
              const std::map<std::string, bool>& trainable) {
        for (const auto& p : params) {
            if (!trainable.at(p.group)) continue;
            auto node = p.tensor.node();
            if (node->grad.empty()) continue;
            auto& vel = velocity[node.get()];
            if (vel.empty()) vel.assign(node->data.size(), 0.0);
            for (size_t i = 0; i < node->data.size(); ++i) {
                vel[i] = momentum * vel[i] + node->grad[i];
                node->data[i] -= lr * vel[i];
            }
        }
    }
};

// deterministic epoch shuffling of scene indices
struct BatchSampler {
    std::vector<int> order;
    size_t cursor = 0;
    Rng rng;

    BatchSampler(int n, std::uint64_t seed) : rng(seed) {
        order.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        reshuffle();
    }
    void reshuffle() {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_int(i + 1))]);
        cursor = 0;
    }
    std::vector<int> next(int batch) {
        std::vector<int> out;
        for (int i = 0; i < batch; ++i) {
            if (cursor >= order.size()) reshuffle();
            out.push_back(order[cursor++]);
        }
        return out;
    }
};

}  // namespace

TrainResult train_model(model::VlmModel& m, const std::vector<synth::SyntheticScene>& scenes,
                        std::ostream* log) {
    if (scenes.empty()) throw contract_error("train: no scenes");
    const auto& cfg = m.cfg;
    const auto stages = cfg.resolve_stages();
    const auto params = m.params();

    TrainResult result;
    BatchSampler sampler(static_cast<int>(scenes.size()),
                         static_cast<std::uint64_t>(cfg.seed) ^ 0x747261696eull);
    Rng obj_rng(static_cast<std::uint64_t>(cfg.seed) ^ 0x6f626a73ull);
    const int batch_size = std::min<int>(cfg.batch, static_cast<int>(scenes.size()));

    long global_step = 0;
    for (const auto& stage : stages) {
        StageResult sr;
        sr.name = stage.name;
        sr.steps = stage.steps;
        for (const char* g : {"vision", "bridge", "lm"})
            sr.hash_before[g] = checkpoint::group_hash(params, g);
        std::map<std::string, bool> trainable{{"vision", stage.vision_trainable},
                                              {"bridge", stage.bridge_trainable},
                                              {"lm", stage.lm_trainable}};
        Sgd opt{cfg.lr, cfg.momentum, {}};

        for (int step = 0; step < stage.steps; ++step, ++global_step) {
            const auto batch = sampler.next(batch_size);
            Tape tape;
            Tensor total = Tensor::scalar(0.0);
            double parts[5] = {0, 0, 0, 0, 0};

            // visual tokens are shared by every objective in the step
            std::vector<Tensor> vis;
            vis.reserve(batch.size());
            for (int idx : batch)
                vis.push_back(m.visual_patches(scenes[static_cast<size_t>(idx)].image));

            auto caption_of = [&](int idx) -> const std::string& {
                const auto& caps = scenes[static_cast<size_t>(idx)].captions;
                return caps[static_cast<size_t>(global_step) % caps.size()];
            };

            if (stage.weights.caption > 0) {
                Tensor sum = Tensor::scalar(0.0);
                for (size_t b = 0; b < batch.size(); ++b)
                    sum = add(sum, m.caption_nll(vis[b], caption_of(batch[b])));
                Tensor loss = scale(sum, 1.0 / static_cast<double>(batch.size()));
                parts[2] = loss.value();
                total = add(total, scale(loss, stage.weights.caption));
            }
            if (stage.weights.contrastive > 0) {
                std::vector<Tensor> img_rows, txt_rows;
                for (size_t b = 0; b < batch.size(); ++b) {
                    img_rows.push_back(m.image_embedding(vis[b]));
                    txt_rows.push_back(m.text_embedding(caption_of(batch[b])));
                }
                objectives::EmbeddingBatch eb{concat_rows(img_rows), concat_rows(txt_rows)};
                Tensor loss = objectives::contrastive_loss(eb, m.contrastive).loss;
                parts[0] = loss.value();
                total = add(total, scale(loss, stage.weights.contrastive));
            }
            if (stage.weights.itm > 0) {
                const auto pairs =
                    objectives::negative_sampler(static_cast<int>(batch.size()), obj_rng);
                std::vector<Tensor> logits;
                std::vector<double> labels;
                for (const auto& pr : pairs) {
                    logits.push_back(m.itm_logit(
                        vis[static_cast<size_t>(pr.image_index)],
                        caption_of(batch[static_cast<size_t>(pr.caption_index)])));
                    labels.push_back(pr.label);
                }
                Tensor loss = objectives::itm_loss(concat_rows(logits), labels);
                parts[1] = loss.value();
                total = add(total, scale(loss, stage.weights.itm));
            }
            if (stage.weights.vqa > 0) {
                Tensor sum = Tensor::scalar(0.0);
                int n = 0;
                for (size_t b = 0; b < batch.size(); ++b) {
                    const auto& qa_items = scenes[static_cast<size_t>(batch[b])].qa;
                    if (qa_items.empty()) continue;
                    const auto& qa =
                        qa_items[static_cast<size_t>(global_step) % qa_items.size()];
                    sum = add(sum, objectives::answer_choice_loss(m.vqa_scores(vis[b], qa),
                                                                  {qa.truth}));
                    ++n;
                }
                if (n > 0) {
                    Tensor loss = scale(sum, 1.0 / n);
                    parts[3] = loss.value();
                    total = add(total, scale(loss, stage.weights.vqa));
                }
            }
            if (stage.weights.grounding > 0) {
                Tensor sum = Tensor::scalar(0.0);
                int n = 0;
                for (size_t b = 0; b < batch.size(); ++b) {
                    const auto& refs = scenes[static_cast<size_t>(batch[b])].referring;
                    if (refs.empty()) continue;
                    const auto& ref = refs[static_cast<size_t>(global_step) % refs.size()];
                    Tensor scores = m.grounding_scores(vis[b], ref);
                    sum = add(sum, objectives::region_grounding_loss(
                                       reshape(scores, {scores.cols()}), ref.gold_index));
                    ++n;
                }
                if (n > 0) {
                    Tensor loss = scale(sum, 1.0 / n);
                    parts[4] = loss.value();
                    total = add(total, scale(loss, stage.weights.grounding));
                }
            }

            const double loss_value = total.value();
            if (!std::isfinite(loss_value))
                throw numeric_error("train: non-finite loss at stage '" + stage.name +
                                    "' step " + std::to_string(step));
            if (step == 0) sr.first_loss = loss_value;
            sr.last_loss = loss_value;
            result.loss_trajectory.push_back(loss_value);

            if (total.requires_grad()) tape.backward(total);
            opt.step(params, trainable);
            for (const auto& p : params) p.tensor.zero_grad();

            if (log) {
                nlohmann::json j{{"stage", stage.name},     {"step", global_step},
                                 {"loss", loss_value},      {"contrastive", parts[0]},
                                 {"itm", parts[1]},         {"caption", parts[2]},
                                 {"vqa", parts[3]},         {"grounding", parts[4]}};
                (*log) << j.dump() << '\n';
            }
        }

        for (const char* g : {"vision", "bridge", "lm"})
            sr.hash_after[g] = checkpoint::group_hash(params, g);
        result.stages.push_back(std::move(sr));
    }
    return result;
}

}  // namespace vlmforge::train
