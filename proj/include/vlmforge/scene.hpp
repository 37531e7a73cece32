#pragma once

// Deterministic procedural scenes: colored shape blocks on a gray canvas with
// gold captions, 10-answer QA, referring expressions, dialogue records and
// POPE probe generation. Everything is reproducible from the integer seed.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlmforge/metrics.hpp"
#include "vlmforge/rng.hpp"
#include "vlmforge/vision.hpp"

namespace vlmforge::synth {

inline constexpr int kCanvas = 16;
inline constexpr int kSchemaVersion = 1;

const std::vector<std::string>& categories();  // cube, sphere, disk, bar
const std::vector<std::string>& colors();      // red, green, blue, yellow
const metrics::ObjectLexicon& category_lexicon();
const metrics::ObjectLexicon& color_lexicon();

struct SceneObject {
    std::string category;
    std::string color;
    metrics::Box box;  // pixel coordinates, exclusive max corner
};

struct QaItem {
    std::string question;
    std::vector<std::string> answers;  // exactly 10 "human" answers
    std::vector<std::string> choices;
    int truth = 0;  // index into choices
};

struct ReferringItem {
    std::string phrase;
    metrics::Box gold_box;
    std::vector<metrics::Box> proposals;
    int gold_index = 0;
};

struct DialogueTurn {
    std::string role;  // "user" | "assistant"
    std::string text;
};

struct SyntheticScene {
    std::int64_t seed = 0;
    vision::Image image;
    std::vector<SceneObject> objects;
    std::vector<std::string> captions;
    std::vector<QaItem> qa;
    std::vector<ReferringItem> referring;
    std::vector<DialogueTurn> dialogue;
};

SyntheticScene generate_scene(std::int64_t seed, int canvas = kCanvas);

enum class PopePolicy { random, popular };

struct PopeProbe {
    std::string category;
    bool present = false;
    metrics::PopeTag tag = metrics::PopeTag::random;
};

// One probe per present object plus an equal number of absent-category
// probes. Absent draws are uniform under the random policy, frequency
// weighted under the popular policy (frequencies over the evaluation
// corpus). Returns fewer absent probes only when every category is present.
std::vector<PopeProbe> generate_pope_probes(const SyntheticScene& scene, PopePolicy policy,
                                            const std::map<std::string, long>& category_freq);

std::map<std::string, long> category_frequencies(const std::vector<SyntheticScene>& scenes);

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    std::int64_t seed = 0;
    int n_scenes = 0;
    int train = 0, val = 0, test = 0;
    std::string vocab_hash;
    long pope_exhausted_scenes = 0;  // scenes where every category is present
};

// Writes train/val/test JSONL (80/10/10 by scene index), vocab.txt over all
// text fields, and manifest.json (written last). Returns the manifest.
DatasetManifest emit_dataset(int n_scenes, std::int64_t seed, const std::string& dir);

nlohmann::json scene_to_json(const SyntheticScene& scene);
SyntheticScene scene_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const DatasetManifest& m);

std::vector<SyntheticScene> load_scenes_jsonl(const std::string& path);

// Independent validator: re-checks every invariant on a parsed record
// (geometry, caption soundness, QA truth consistency, pixel quantization).
// Throws contract_error with a description on the first violation.
void validate_scene(const SyntheticScene& scene);

// Tokenized text corpus of a scene set (captions, questions, answers,
// choices, phrases, dialogue) for vocabulary building.
std::vector<std::vector<std::string>> text_corpus(const std::vector<SyntheticScene>& scenes);

std::int64_t derive_scene_seed(std::int64_t dataset_seed, int index);

}  // namespace vlmforge::synth
