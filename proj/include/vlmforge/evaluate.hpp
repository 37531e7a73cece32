#pragma once

// Inference over an evaluation split (greedy captions, multiple-choice VQA,
// grounding argmax, POPE yes/no via the ITM logit, retrieval scores) and the
// scoring path shared by `evaluate` and `score`.

#include <optional>

#include <json.hpp>

#include "vlmforge/model.hpp"

namespace vlmforge::eval {

struct ScenePrediction {
    std::int64_t seed = 0;
    std::optional<std::string> caption;
    std::optional<std::vector<int>> vqa;                 // chosen answer index per QA item
    std::optional<std::vector<metrics::Box>> boxes;      // one box per referring item
    std::optional<std::vector<std::string>> pope;        // "yes"/"no" per probe
    std::optional<std::vector<double>> ranking_scores;   // image->caption gallery scores
};

// POPE probes for a scene at evaluation time: the random-policy probes
// followed by the popular-policy probes, in generation order.
std::vector<synth::PopeProbe> evaluation_probes(const synth::SyntheticScene& scene,
                                                const std::map<std::string, long>& freq);

// Pure inference; parallel over scenes, output independent of thread count.
std::vector<ScenePrediction> predict(const model::VlmModel& m,
                                     const std::vector<synth::SyntheticScene>& scenes);

nlohmann::json prediction_to_json(const ScenePrediction& p);
ScenePrediction prediction_from_json(const nlohmann::json& j);
void write_predictions_jsonl(const std::string& path, const std::vector<ScenePrediction>& preds);
std::vector<ScenePrediction> load_predictions_jsonl(const std::string& path);

struct ScoreMetadata {
    long long seed = 0;
    std::string config_hash;
};

// Computes every metric the prediction fields allow; omitted sections are
// listed under "omitted" with a reason. Predictions are matched to reference
// scenes by seed.
nlohmann::json score(const std::vector<ScenePrediction>& preds,
                     const std::vector<synth::SyntheticScene>& refs, const ScoreMetadata& meta);

}  // namespace vlmforge::eval
