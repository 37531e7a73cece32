#pragma once

// Staged training with per-group freeze schedules. Plain gradient descent
// with optional momentum; momentum buffers reset at stage boundaries. The
// per-step loss mixture follows the stage's objective weights.

#include <functional>
#include <ostream>

#include "vlmforge/model.hpp"

namespace vlmforge::train {

struct StageResult {
    std::string name;
    int steps = 0;
    double first_loss = 0;
    double last_loss = 0;
    // group -> fnv hash of parameter bytes, taken before/after the stage
    std::map<std::string, std::string> hash_before;
    std::map<std::string, std::string> hash_after;
};

struct TrainResult {
    std::vector<StageResult> stages;
    std::vector<double> loss_trajectory;  // total loss per global step
};

// Writes one JSON object per step to `log` when given:
//   {"stage":..,"step":..,"loss":..,"contrastive":..,"itm":..,"caption":..,
//    "vqa":..,"grounding":..}
TrainResult train_model(model::VlmModel& m, const std::vector<synth::SyntheticScene>& scenes,
                        std::ostream* log = nullptr);

}  // namespace vlmforge::train
