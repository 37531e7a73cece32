// vlmforge: generate synthetic scene datasets, run staged training with
// freeze schedules, evaluate checkpoints, and score prediction files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vlmforge/checkpoint.hpp"
#include "vlmforge/evaluate.hpp"
#include "vlmforge/train.hpp"

namespace fs = std::filesystem;
using namespace vlmforge;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int resolve_threads(int cli_threads) {
    if (const char* env = std::getenv("VLMFORGE_THREADS")) {
        try {
            return std::stoi(env);
        } catch (const std::exception&) {
            throw core::contract_error("VLMFORGE_THREADS must be an integer");
        }
    }
    return cli_threads;
}

std::string file_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw core::io_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int cmd_generate(int scenes, long long seed, const std::string& out) {
    const auto manifest = synth::emit_dataset(scenes, seed, out);
    std::cout << out << "/manifest.json\n";
    (void)manifest;
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
    const auto cfg = config::load_config(config_path);
    const std::string config_hash = text::fnv1a_hex(cfg.raw_text);
    const auto scenes = synth::load_scenes_jsonl(data + "/train.jsonl");
    if (scenes.empty()) throw core::io_error("no training scenes in " + data);
    const auto vocab = text::Vocab::load(data + "/vocab.txt");

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw core::io_error("cannot create directory " + out + ": " + ec.message());

    auto m = model::VlmModel::init(cfg, vocab);
    std::ofstream log(out + "/train_log.jsonl");
    if (!log) throw core::io_error("cannot write " + out + "/train_log.jsonl");
    const auto result = train::train_model(m, scenes, &log);

    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : result.stages)
        stages.push_back({{"name", st.name},
                          {"steps", st.steps},
                          {"first_loss", st.first_loss},
                          {"last_loss", st.last_loss},
                          {"hash_before", st.hash_before},
                          {"hash_after", st.hash_after}});
    std::ofstream sf(out + "/stages.json");
    if (!sf) throw core::io_error("cannot write " + out + "/stages.json");
    sf << stages.dump(2) << '\n';

    checkpoint::save(out + "/model.ckpt", m.params(), config_hash, vocab.fingerprint());
    vocab.save(out + "/vocab.txt");
    std::ofstream cf(out + "/config.txt");
    if (!cf) throw core::io_error("cannot write " + out + "/config.txt");
    cf << cfg.raw_text;
    std::cout << out << "/model.ckpt\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& out,
                 const std::string& split) {
    const fs::path dir = fs::path(ckpt).parent_path();
    const auto cfg = config::load_config((dir / "config.txt").string());
    const auto vocab = text::Vocab::load((dir / "vocab.txt").string());
    auto m = model::VlmModel::init(cfg, vocab);
    checkpoint::apply(m, checkpoint::load(ckpt));

    const auto scenes = synth::load_scenes_jsonl(data + "/" + split + ".jsonl");
    if (scenes.empty()) throw core::io_error("no scenes in " + data + "/" + split + ".jsonl");

    const auto preds = eval::predict(m, scenes);
    eval::ScoreMetadata meta;
    meta.seed = cfg.seed;
    meta.config_hash = text::fnv1a_hex(cfg.raw_text);
    const auto report = eval::score(preds, scenes, meta);

    const fs::path out_path(out);
    const fs::path pred_path = out_path.parent_path().empty()
                                   ? fs::path("predictions.jsonl")
                                   : out_path.parent_path() / "predictions.jsonl";
    eval::write_predictions_jsonl(pred_path.string(), preds);
    std::ofstream rf(out);
    if (!rf) throw core::io_error("cannot write " + out);
    rf << report.dump(2) << '\n';
    std::cout << out << '\n';
    return 0;
}

int cmd_score(const std::string& pred, const std::string& ref, const std::string& out) {
    const auto refs = synth::load_scenes_jsonl(ref);
    if (refs.empty()) throw core::io_error("no reference records in " + ref);
    const auto preds = eval::load_predictions_jsonl(pred);
    eval::ScoreMetadata meta;
    meta.seed = 0;
    meta.config_hash = text::fnv1a_hex(file_text(pred));
    const auto report = eval::score(preds, refs, meta);
    std::ofstream rf(out);
    if (!rf) throw core::io_error("cannot write " + out);
    rf << report.dump(2) << '\n';
    std::cout << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale vision-language modeling and evaluation workbench"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "evaluation thread count (0: library default)");

    auto* gen = app.add_subcommand("generate", "emit a synthetic scene dataset");
    int scenes = 0;
    long long seed = 1;
    std::string out_dir;
    gen->add_option("--scenes", scenes, "number of scenes")->required();
    gen->add_option("--seed", seed, "dataset seed")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "run staged training");
    std::string config_path, data_dir, train_out;
    tr->add_option("--config", config_path, "run configuration file")->required();
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", train_out, "output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
    std::string ckpt, eval_data, report_out, split = "test";
    ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    ev->add_option("--data", eval_data, "dataset directory")->required();
    ev->add_option("--out", report_out, "report path")->required();
    ev->add_option("--split", split, "dataset split (default test)");

    auto* sc = app.add_subcommand("score", "score a predictions file");
    std::string pred_path, ref_path, score_out;
    sc->add_option("--pred", pred_path, "predictions JSONL")->required();
    sc->add_option("--ref", ref_path, "references JSONL")->required();
    sc->add_option("--out", score_out, "report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return kExitUsage;
    }

    try {
        kern::set_threads(resolve_threads(threads));
        if (gen->parsed()) {
            if (scenes < 1) {
                std::cerr << "generate: --scenes must be >= 1\n";
                return kExitUsage;
            }
            return cmd_generate(scenes, seed, out_dir);
        }
        if (tr->parsed()) return cmd_train(config_path, data_dir, train_out);
        if (ev->parsed()) return cmd_evaluate(ckpt, eval_data, report_out, split);
        if (sc->parsed()) return cmd_score(pred_path, ref_path, score_out);
    } catch (const core::numeric_error& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
