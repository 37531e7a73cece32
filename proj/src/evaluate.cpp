#include "vlmforge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vlmforge::eval {

using namespace vlmforge::core;
using metrics::Box;

std::vector<synth::PopeProbe> evaluation_probes(const synth::SyntheticScene& scene,
                                                const std::map<std::string, long>& freq) {
    auto probes = synth::generate_pope_probes(scene, synth::PopePolicy::random, freq);
    auto popular = synth::generate_pope_probes(scene, synth::PopePolicy::popular, freq);
    probes.insert(probes.end(), popular.begin(), popular.end());
    return probes;
}

namespace {

std::string probe_sentence(const std::string& category) {
    return "there is a " + category + " in the image .";
}

}  // namespace

std::vector<ScenePrediction> predict(const model::VlmModel& m,
                                     const std::vector<synth::SyntheticScene>& scenes) {
    const auto freq = synth::category_frequencies(scenes);
    const int n = static_cast<int>(scenes.size());

    // caption gallery embeddings (unit rows), then per-scene inference
    std::vector<std::vector<double>> text_embs;
    for (const auto& sc : scenes)
        for (const auto& cap : sc.captions) {
            core::Tensor e = l2_normalize_rows(m.text_embedding(cap));
            text_embs.emplace_back(e.data().begin(), e.data().end());
        }
    const double tau = m.contrastive.temperature().value();

    std::vector<ScenePrediction> preds(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const auto& sc = scenes[static_cast<size_t>(i)];
        ScenePrediction p;
        p.seed = sc.seed;
        core::Tensor vis = m.visual_patches(sc.image);

        p.caption = m.generate_caption(sc.image);

        std::vector<int> vqa;
        for (const auto& qa : sc.qa) {
            core::Tensor scores = m.vqa_scores(vis, qa);
            int best = 0;
            for (int k = 1; k < scores.cols(); ++k)
                if (scores.at(0, k) > scores.at(0, best)) best = k;
            vqa.push_back(best);
        }
        p.vqa = std::move(vqa);

        std::vector<Box> boxes;
        for (const auto& ref : sc.referring) {
            core::Tensor scores = m.grounding_scores(vis, ref);
            int best = 0;
            for (int k = 1; k < scores.cols(); ++k)
                if (scores.at(0, k) > scores.at(0, best)) best = k;
            boxes.push_back(ref.proposals[static_cast<size_t>(best)]);
        }
        p.boxes = std::move(boxes);

        std::vector<std::string> pope;
        for (const auto& probe : evaluation_probes(sc, freq))
            pope.push_back(m.itm_logit(vis, probe_sentence(probe.category)).value() > 0.0
                               ? "yes"
                               : "no");
        p.pope = std::move(pope);

        core::Tensor img = l2_normalize_rows(m.image_embedding(vis));
        std::vector<double> row;
        row.reserve(text_embs.size());
        for (const auto& te : text_embs) {
            double dot = 0.0;
            for (size_t k = 0; k < te.size(); ++k) dot += img[static_cast<long>(k)] * te[k];
            row.push_back(dot / tau);
        }
        p.ranking_scores = std::move(row);

        preds[static_cast<size_t>(i)] = std::move(p);
    }
    return preds;
}

nlohmann::json prediction_to_json(const ScenePrediction& p) {
    nlohmann::json j;
    j["seed"] = p.seed;
    if (p.caption) j["caption"] = *p.caption;
    if (p.vqa) j["vqa"] = *p.vqa;
    if (p.boxes) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& b : *p.boxes) arr.push_back({b.x0, b.y0, b.x1, b.y1});
        j["boxes"] = arr;
    }
    if (p.pope) j["pope"] = *p.pope;
    if (p.ranking_scores) j["ranking_scores"] = nlohmann::json::array({*p.ranking_scores});
    return j;
}

ScenePrediction prediction_from_json(const nlohmann::json& j) {
    ScenePrediction p;
    p.seed = j.at("seed").get<std::int64_t>();
    if (j.contains("caption")) p.caption = j.at("caption").get<std::string>();
    if (j.contains("vqa")) p.vqa = j.at("vqa").get<std::vector<int>>();
    if (j.contains("boxes")) {
        std::vector<Box> boxes;
        for (const auto& b : j.at("boxes")) {
            if (!b.is_array() || b.size() != 4)
                throw parse_error("prediction: box must be [x0, y0, x1, y1]");
            boxes.push_back(Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                b[3].get<double>()});
        }
        p.boxes = std::move(boxes);
    }
    if (j.contains("pope")) {
        auto answers = j.at("pope").get<std::vector<std::string>>();
        for (const auto& a : answers)
            if (a != "yes" && a != "no")
                throw parse_error("prediction: pope answers must be yes or no");
        p.pope = std::move(answers);
    }
    if (j.contains("ranking_scores")) {
        const auto& rows = j.at("ranking_scores");
        if (!rows.is_array() || rows.empty() || !rows[0].is_array())
            throw parse_error("prediction: ranking_scores must be an array of score rows");
        p.ranking_scores = rows[0].get<std::vector<double>>();
    }
    return p;
}

void write_predictions_jsonl(const std::string& path,
                             const std::vector<ScenePrediction>& preds) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write " + path);
    for (const auto& p : preds) f << prediction_to_json(p).dump() << '\n';
}

std::vector<ScenePrediction> load_predictions_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    std::vector<ScenePrediction> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(prediction_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const parse_error& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json score(const std::vector<ScenePrediction>& preds,
                     const std::vector<synth::SyntheticScene>& refs,
                     const ScoreMetadata& meta) {
    if (refs.empty()) throw contract_error("score: no reference scenes");
    std::map<std::int64_t, const ScenePrediction*> by_seed;
    for (const auto& p : preds) {
        if (by_seed.count(p.seed))
            throw parse_error("score: duplicate prediction for seed " + std::to_string(p.seed));
        by_seed[p.seed] = &p;
    }
    std::vector<const ScenePrediction*> ordered;
    for (const auto& r : refs) {
        auto it = by_seed.find(r.seed);
        if (it == by_seed.end())
            throw parse_error("score: no prediction for scene seed " + std::to_string(r.seed));
        ordered.push_back(it->second);
    }

    nlohmann::json metrics_out = nlohmann::json::object();
    nlohmann::json omitted = nlohmann::json::object();
    auto field_reason = [&](const char* field) -> std::string {
        for (size_t i = 0; i < ordered.size(); ++i) {
            const auto* p = ordered[i];
            const bool has = (std::string(field) == "caption" && p->caption) ||
                             (std::string(field) == "vqa" && p->vqa) ||
                             (std::string(field) == "boxes" && p->boxes) ||
                             (std::string(field) == "pope" && p->pope) ||
                             (std::string(field) == "ranking_scores" && p->ranking_scores);
            if (!has)
                return std::string("predictions for seed ") + std::to_string(refs[i].seed) +
                       " have no " + field + " field";
        }
        return "";
    };

    // ---- caption metrics ----
    if (const auto reason = field_reason("caption"); reason.empty()) {
        std::vector<metrics::Tokens> idf_corpus;
        for (const auto& r : refs)
            for (const auto& c : r.captions) idf_corpus.push_back(text::tokenize(c));
        const auto idf = metrics::CiderIdf::build(idf_corpus);
        double bleu_sum = 0, rouge_sum = 0, cider_sum = 0;
        std::vector<metrics::CaptionEvalRecord> chair_records;
        for (size_t i = 0; i < refs.size(); ++i) {
            const auto cand = text::tokenize(*ordered[i]->caption);
            std::vector<metrics::Tokens> rtoks;
            for (const auto& c : refs[i].captions) rtoks.push_back(text::tokenize(c));
            bleu_sum += metrics::bleu(cand, rtoks);
            rouge_sum += metrics::rouge_l(cand, rtoks);
            cider_sum += metrics::cider(cand, rtoks, idf);
            metrics::CaptionEvalRecord rec;
            rec.candidate = cand;
            rec.references = rtoks;
            for (const auto& o : refs[i].objects) rec.gold_objects.insert(o.category);
            rec.mentioned_objects =
                metrics::extract_object_mentions(cand, synth::category_lexicon());
            chair_records.push_back(std::move(rec));
        }
        const double n = static_cast<double>(refs.size());
        metrics_out["bleu"] = bleu_sum / n;
        metrics_out["rouge_l"] = rouge_sum / n;
        metrics_out["cider"] = cider_sum / n;
        const auto ch = metrics::chair(chair_records);
        metrics_out["chair_i"] = ch.chair_i;
        metrics_out["chair_s"] = ch.chair_s;
    } else {
        omitted["captions"] = reason;
    }

    // ---- retrieval ----
    long gallery_size = 0;
    for (const auto& r : refs) gallery_size += static_cast<long>(r.captions.size());
    if (const auto reason = field_reason("ranking_scores"); reason.empty()) {
        std::vector<std::vector<double>> i2t;
        std::vector<std::vector<int>> i2t_gold;
        int offset = 0;
        for (size_t i = 0; i < refs.size(); ++i) {
            if (static_cast<long>(ordered[i]->ranking_scores->size()) != gallery_size)
                throw parse_error("score: ranking row for seed " + std::to_string(refs[i].seed) +
                                  " has " + std::to_string(ordered[i]->ranking_scores->size()) +
                                  " entries, gallery holds " + std::to_string(gallery_size));
            i2t.push_back(*ordered[i]->ranking_scores);
            std::vector<int> gold;
            for (size_t c = 0; c < refs[i].captions.size(); ++c) gold.push_back(offset + static_cast<int>(c));
            i2t_gold.push_back(gold);
            offset += static_cast<int>(refs[i].captions.size());
        }
        std::vector<std::vector<double>> t2i(static_cast<size_t>(gallery_size),
                                             std::vector<double>(refs.size()));
        std::vector<std::vector<int>> t2i_gold(static_cast<size_t>(gallery_size));
        for (size_t q = 0; q < i2t.size(); ++q)
            for (long g = 0; g < gallery_size; ++g)
                t2i[static_cast<size_t>(g)][q] = i2t[q][static_cast<size_t>(g)];
        for (size_t q = 0; q < i2t_gold.size(); ++q)
            for (int g : i2t_gold[q]) t2i_gold[static_cast<size_t>(g)] = {static_cast<int>(q)};

        for (int k : {1, 5, 10}) {
            metrics_out["i2t_r@" + std::to_string(k)] = metrics::recall_at_k(i2t, i2t_gold, k).recall;
            metrics_out["t2i_r@" + std::to_string(k)] = metrics::recall_at_k(t2i, t2i_gold, k).recall;
        }
        metrics_out["i2t_median_rank"] = metrics::recall_at_k(i2t, i2t_gold, 1).median_rank;
        metrics_out["t2i_median_rank"] = metrics::recall_at_k(t2i, t2i_gold, 1).median_rank;
    } else {
        omitted["retrieval"] = reason;
    }

    // ---- VQA ----
    long qa_count = 0;
    if (const auto reason = field_reason("vqa"); reason.empty()) {
        double acc = 0;
        long n = 0;
        for (size_t i = 0; i < refs.size(); ++i) {
            const auto& qa_items = refs[i].qa;
            const auto& choices_idx = *ordered[i]->vqa;
            if (choices_idx.size() != qa_items.size())
                throw parse_error("score: vqa answer count mismatch for seed " +
                                  std::to_string(refs[i].seed));
            for (size_t q = 0; q < qa_items.size(); ++q) {
                const int idx = choices_idx[q];
                if (idx < 0 || idx >= static_cast<int>(qa_items[q].choices.size()))
                    throw parse_error("score: vqa choice index out of range for seed " +
                                      std::to_string(refs[i].seed));
                acc += metrics::vqa_soft_accuracy(qa_items[q].choices[static_cast<size_t>(idx)],
                                                  qa_items[q].answers);
                ++n;
            }
        }
        qa_count = n;
        if (n > 0) metrics_out["vqa_soft_accuracy"] = acc / static_cast<double>(n);
    } else {
        omitted["vqa"] = reason;
    }

    // ---- grounding ----
    long ref_count = 0;
    if (const auto reason = field_reason("boxes"); reason.empty()) {
        std::vector<std::vector<Box>> pred_boxes;
        std::vector<Box> gold_boxes;
        double iou_sum = 0;
        for (size_t i = 0; i < refs.size(); ++i) {
            const auto& items = refs[i].referring;
            const auto& boxes = *ordered[i]->boxes;
            if (boxes.size() != items.size())
                throw parse_error("score: box count mismatch for seed " +
                                  std::to_string(refs[i].seed));
            for (size_t r = 0; r < items.size(); ++r) {
                pred_boxes.push_back({boxes[r]});
                gold_boxes.push_back(items[r].gold_box);
                iou_sum += metrics::iou(boxes[r], items[r].gold_box);
            }
        }
        ref_count = static_cast<long>(gold_boxes.size());
        if (!gold_boxes.empty()) {
            metrics_out["iou_mean"] = iou_sum / static_cast<double>(gold_boxes.size());
            metrics_out["localization_accuracy"] =
                metrics::localization_accuracy(pred_boxes, gold_boxes, 0.5);
        }
    } else {
        omitted["grounding"] = reason;
    }

    // ---- POPE ----
    long probe_count = 0;
    if (const auto reason = field_reason("pope"); reason.empty()) {
        const auto freq = synth::category_frequencies(refs);
        std::vector<metrics::PopeRecord> records;
        for (size_t i = 0; i < refs.size(); ++i) {
            const auto probes = evaluation_probes(refs[i], freq);
            const auto& answers = *ordered[i]->pope;
            if (answers.size() != probes.size())
                throw parse_error("score: pope answer count mismatch for seed " +
                                  std::to_string(refs[i].seed) + " (expected " +
                                  std::to_string(probes.size()) + ")");
            for (size_t k = 0; k < probes.size(); ++k)
                records.push_back({probes[k].category, probes[k].present,
                                   answers[k] == "yes", probes[k].tag});
        }
        probe_count = static_cast<long>(records.size());
        const auto rep = metrics::pope_scores(records);
        auto emit = [&](const std::string& prefix, const metrics::PopeScores& s) {
            if (s.count == 0) return;
            metrics_out[prefix + "accuracy"] = s.accuracy;
            metrics_out[prefix + "precision"] = s.precision;
            metrics_out[prefix + "recall"] = s.recall;
            metrics_out[prefix + "f1"] = s.f1;
            metrics_out[prefix + "yes_rate"] = s.yes_rate;
        };
        emit("pope_", rep.overall);
        emit("pope_random_", rep.random_tag);
        emit("pope_popular_", rep.popular_tag);
    } else {
        omitted["pope"] = reason;
    }

    long referring_total = 0, qa_total = 0;
    for (const auto& r : refs) {
        referring_total += static_cast<long>(r.referring.size());
        qa_total += static_cast<long>(r.qa.size());
    }
    (void)qa_count;
    (void)ref_count;

    nlohmann::json report;
    report["metrics"] = metrics_out;
    report["omitted"] = omitted;
    report["run_metadata"] = {
        {"seed", meta.seed},
        {"config_hash", meta.config_hash},
        {"counts",
         {{"scenes", refs.size()},
          {"captions", gallery_size},
          {"qa_items", qa_total},
          {"referring_items", referring_total},
          {"pope_probes", probe_count}}}};
    return report;
}

}  // namespace vlmforge::eval
