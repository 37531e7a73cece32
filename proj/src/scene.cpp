#include "vlmforge/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "vlmforge/text.hpp"

namespace vlmforge::synth {

using core::contract_error;
using core::io_error;
using metrics::Box;

namespace {

struct Palette {
    const char* name;
    int r, g, b;
};
constexpr Palette kPalette[] = {
    {"red", 204, 26, 26},
    {"green", 26, 204, 26},
    {"blue", 26, 26, 204},
    {"yellow", 204, 204, 26},
};
constexpr int kBackground = 128;

const char* kCategories[] = {"cube", "sphere", "disk", "bar"};
const char* kCountWords[] = {"one", "two", "three", "four"};

double q255(int v) { return v / 255.0; }

int palette_index(const std::string& color) {
    for (int i = 0; i < 4; ++i)
        if (color == kPalette[i].name) return i;
    throw contract_error("scene: unknown color " + color);
}

bool boxes_overlap(const Box& a, const Box& b) {
    return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

void paint(vision::Image& img, int x, int y, int color_idx) {
    const size_t base = (static_cast<size_t>(y) * img.w + x) * 3;
    img.pixels[base] = q255(kPalette[color_idx].r);
    img.pixels[base + 1] = q255(kPalette[color_idx].g);
    img.pixels[base + 2] = q255(kPalette[color_idx].b);
}

void render_object(vision::Image& img, const SceneObject& obj) {
    const int ci = palette_index(obj.color);
    const int x0 = static_cast<int>(obj.box.x0), y0 = static_cast<int>(obj.box.y0);
    const int x1 = static_cast<int>(obj.box.x1), y1 = static_cast<int>(obj.box.y1);
    if (obj.category == "cube" || obj.category == "bar") {
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) paint(img, x, y, ci);
        return;
    }
    const double cx = 0.5 * (obj.box.x0 + obj.box.x1);
    const double cy = 0.5 * (obj.box.y0 + obj.box.y1);
    const double r = 0.5 * (obj.box.x1 - obj.box.x0);
    const double inner = obj.category == "disk" ? 0.5 * r : -1.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= r * r && d2 > inner * inner) paint(img, x, y, ci);
        }
}

std::string count_caption(int n) {
    if (n == 1) return "there is one shape in the image .";
    return std::string("there are ") + kCountWords[n - 1] + " shapes in the image .";
}

std::vector<std::string> make_answers(const std::string& truth,
                                      const std::vector<std::string>& choices, Rng& rng) {
    const int agree = 7 + rng.uniform_int(4);  // 7..10 annotators agree
    std::vector<std::string> out(static_cast<size_t>(agree), truth);
    std::vector<std::string> others;
    for (const auto& c : choices)
        if (c != truth) others.push_back(c);
    for (int i = agree; i < 10; ++i)
        out.push_back(others[static_cast<size_t>(rng.uniform_int(static_cast<int>(others.size())))]);
    for (int i = 9; i > 0; --i) std::swap(out[static_cast<size_t>(i)],
                                          out[static_cast<size_t>(rng.uniform_int(i + 1))]);
    return out;
}

}  // namespace

const std::vector<std::string>& categories() {
    static const std::vector<std::string> c(std::begin(kCategories), std::end(kCategories));
    return c;
}

const std::vector<std::string>& colors() {
    static const std::vector<std::string> c = {"red", "green", "blue", "yellow"};
    return c;
}

const metrics::ObjectLexicon& category_lexicon() {
    static const metrics::ObjectLexicon lex = [] {
        metrics::ObjectLexicon l;
        l.add("cube", {"cube", "cubes"});
        l.add("sphere", {"sphere", "spheres"});
        l.add("disk", {"disk", "disks"});
        l.add("bar", {"bar", "bars"});
        return l;
    }();
    return lex;
}

const metrics::ObjectLexicon& color_lexicon() {
    static const metrics::ObjectLexicon lex = [] {
        metrics::ObjectLexicon l;
        for (const auto& c : colors()) l.add(c, {c});
        return l;
    }();
    return lex;
}

std::int64_t derive_scene_seed(std::int64_t dataset_seed, int index) {
    std::uint64_t z = static_cast<std::uint64_t>(dataset_seed) +
                      0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return static_cast<std::int64_t>(z & 0x7fffffffffffffffull);
}

SyntheticScene generate_scene(std::int64_t seed, int canvas) {
    SyntheticScene sc;
    sc.seed = seed;
    sc.image.h = canvas;
    sc.image.w = canvas;
    sc.image.c = 3;
    sc.image.pixels.assign(static_cast<size_t>(canvas) * canvas * 3, q255(kBackground));
    Rng rng(static_cast<std::uint64_t>(seed) * 2862933555777941757ull + 3037000493ull);

    const int target = 1 + rng.uniform_int(4);
    for (int i = 0; i < target; ++i) {
        SceneObject obj;
        obj.category = categories()[static_cast<size_t>(rng.uniform_int(4))];
        obj.color = colors()[static_cast<size_t>(rng.uniform_int(4))];
        int w = 0, h = 0;
        if (obj.category == "cube") {
            w = h = 3 + rng.uniform_int(3);
        } else if (obj.category == "sphere") {
            w = h = 4 + rng.uniform_int(3);
        } else if (obj.category == "disk") {
            w = h = 5 + rng.uniform_int(2);
        } else {  // bar: wide and thin
            w = 5 + rng.uniform_int(4);
            h = 2;
        }
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            const int x0 = rng.uniform_int(canvas - w + 1);
            const int y0 = rng.uniform_int(canvas - h + 1);
            Box b{static_cast<double>(x0), static_cast<double>(y0),
                  static_cast<double>(x0 + w), static_cast<double>(y0 + h)};
            bool clash = false;
            for (const auto& other : sc.objects)
                if (boxes_overlap(b, other.box)) {
                    clash = true;
                    break;
                }
            if (!clash) {
                obj.box = b;
                placed = true;
            }
        }
        if (placed) sc.objects.push_back(obj);
    }
    for (const auto& obj : sc.objects) render_object(sc.image, obj);

    // captions: lead object, a spatial or single-object line, and a count line
    const auto& first = sc.objects.front();
    sc.captions.push_back("a " + first.color + " " + first.category +
                          " on a gray background .");
    if (sc.objects.size() == 1) {
        sc.captions.push_back("the image shows a " + first.color + " " + first.category + " .");
    } else {
        std::vector<size_t> order(sc.objects.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            const auto& oa = sc.objects[a];
            const auto& ob = sc.objects[b];
            if (oa.box.x0 != ob.box.x0) return oa.box.x0 < ob.box.x0;
            if (oa.box.y0 != ob.box.y0) return oa.box.y0 < ob.box.y0;
            return a < b;
        });
        const auto& l = sc.objects[order.front()];
        const auto& r = sc.objects[order.back()];
        sc.captions.push_back("a " + l.color + " " + l.category + " left of a " + r.color +
                              " " + r.category + " .");
    }
    sc.captions.push_back(count_caption(static_cast<int>(sc.objects.size())));

    // QA: count, presence (yes), presence (no) when possible, unique color
    std::set<std::string> present;
    for (const auto& o : sc.objects) present.insert(o.category);
    {
        QaItem qa;
        qa.question = "how many shapes are in the image ?";
        qa.choices = {"1", "2", "3", "4"};
        qa.truth = static_cast<int>(sc.objects.size()) - 1;
        qa.answers = make_answers(qa.choices[static_cast<size_t>(qa.truth)], qa.choices, rng);
        sc.qa.push_back(std::move(qa));
    }
    {
        const auto& cat =
            sc.objects[static_cast<size_t>(rng.uniform_int(static_cast<int>(sc.objects.size())))]
                .category;
        QaItem qa;
        qa.question = "is there a " + cat + " in the image ?";
        qa.choices = {"yes", "no"};
        qa.truth = 0;
        qa.answers = make_answers("yes", qa.choices, rng);
        sc.qa.push_back(std::move(qa));
    }
    {
        std::vector<std::string> absent;
        for (const auto& c : categories())
            if (!present.count(c)) absent.push_back(c);
        if (!absent.empty()) {
            const auto& cat = absent[static_cast<size_t>(rng.uniform_int(static_cast<int>(absent.size())))];
            QaItem qa;
            qa.question = "is there a " + cat + " in the image ?";
            qa.choices = {"yes", "no"};
            qa.truth = 1;
            qa.answers = make_answers("no", qa.choices, rng);
            sc.qa.push_back(std::move(qa));
        }
    }
    for (const auto& cat : categories()) {
        std::vector<const SceneObject*> of_cat;
        for (const auto& o : sc.objects)
            if (o.category == cat) of_cat.push_back(&o);
        if (of_cat.size() == 1) {
            QaItem qa;
            qa.question = "what color is the " + cat + " ?";
            qa.choices = colors();
            qa.truth = palette_index(of_cat[0]->color);
            qa.answers = make_answers(of_cat[0]->color, qa.choices, rng);
            sc.qa.push_back(std::move(qa));
            break;
        }
    }

    // referring expressions for objects with a unique (color, category) pair
    for (size_t i = 0; i < sc.objects.size(); ++i) {
        const auto& o = sc.objects[i];
        int same = 0;
        for (const auto& other : sc.objects)
            if (other.category == o.category && other.color == o.color) ++same;
        if (same != 1) continue;
        ReferringItem ref;
        ref.phrase = "the " + o.color + " " + o.category;
        ref.gold_box = o.box;
        if (sc.objects.size() >= 2) {
            for (size_t j = 0; j < sc.objects.size(); ++j) ref.proposals.push_back(sc.objects[j].box);
            ref.gold_index = static_cast<int>(i);
        } else {
            ref.proposals.push_back(o.box);
            ref.gold_index = 0;
            const int w = static_cast<int>(o.box.x1 - o.box.x0);
            const int h = static_cast<int>(o.box.y1 - o.box.y0);
            int added = 0;
            while (added < 2) {
                const int x0 = rng.uniform_int(sc.image.w - w + 1);
                const int y0 = rng.uniform_int(sc.image.h - h + 1);
                Box b{static_cast<double>(x0), static_cast<double>(y0),
                      static_cast<double>(x0 + w), static_cast<double>(y0 + h)};
                if (metrics::iou(b, o.box) < 0.5) {
                    ref.proposals.push_back(b);
                    ++added;
                }
            }
        }
        sc.referring.push_back(std::move(ref));
    }

    sc.dialogue.push_back({"user", "describe this image ."});
    sc.dialogue.push_back({"assistant", sc.captions[0]});
    sc.dialogue.push_back({"user", sc.qa[0].question});
    sc.dialogue.push_back({"assistant", sc.qa[0].choices[static_cast<size_t>(sc.qa[0].truth)]});
    return sc;
}

std::vector<PopeProbe> generate_pope_probes(const SyntheticScene& scene, PopePolicy policy,
                                            const std::map<std::string, long>& category_freq) {
    const metrics::PopeTag tag =
        policy == PopePolicy::random ? metrics::PopeTag::random : metrics::PopeTag::popular;
    std::vector<PopeProbe> probes;
    std::set<std::string> present;
    for (const auto& o : scene.objects) {
        probes.push_back({o.category, true, tag});
        present.insert(o.category);
    }
    std::vector<std::string> absent;
    for (const auto& c : categories())
        if (!present.count(c)) absent.push_back(c);
    if (absent.empty()) return probes;  // exhausted: caller flags it in the manifest

    Rng rng(static_cast<std::uint64_t>(scene.seed) ^
            (policy == PopePolicy::random ? 0x706f7065u : 0x706f7075u));
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        std::string pick;
        if (policy == PopePolicy::random) {
            pick = absent[static_cast<size_t>(rng.uniform_int(static_cast<int>(absent.size())))];
        } else {
            double total = 0.0;
            for (const auto& c : absent) {
                auto it = category_freq.find(c);
                total += it == category_freq.end() ? 0.0 : static_cast<double>(it->second);
            }
            if (total <= 0.0) {
                pick = absent[static_cast<size_t>(rng.uniform_int(static_cast<int>(absent.size())))];
            } else {
                double r = rng.uniform() * total;
                pick = absent.back();
                for (const auto& c : absent) {
                    auto it = category_freq.find(c);
                    const double wgt = it == category_freq.end() ? 0.0 : static_cast<double>(it->second);
                    if (r < wgt) {
                        pick = c;
                        break;
                    }
                    r -= wgt;
                }
            }
        }
        probes.push_back({pick, false, tag});
    }
    return probes;
}

std::map<std::string, long> category_frequencies(const std::vector<SyntheticScene>& scenes) {
    std::map<std::string, long> freq;
    for (const auto& s : scenes)
        for (const auto& o : s.objects) ++freq[o.category];
    return freq;
}

nlohmann::json scene_to_json(const SyntheticScene& scene) {
    nlohmann::json j;
    j["seed"] = scene.seed;
    j["image"] = {{"h", scene.image.h}, {"w", scene.image.w}, {"pixels", scene.image.pixels}};
    j["objects"] = nlohmann::json::array();
    for (const auto& o : scene.objects)
        j["objects"].push_back({{"category", o.category},
                                {"color", o.color},
                                {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}}});
    j["captions"] = scene.captions;
    j["qa"] = nlohmann::json::array();
    for (const auto& q : scene.qa)
        j["qa"].push_back({{"q", q.question},
                           {"answers", q.answers},
                           {"choices", q.choices},
                           {"truth", q.truth}});
    j["referring"] = nlohmann::json::array();
    for (const auto& r : scene.referring) {
        nlohmann::json props = nlohmann::json::array();
        for (const auto& b : r.proposals) props.push_back({b.x0, b.y0, b.x1, b.y1});
        j["referring"].push_back({{"phrase", r.phrase},
                                  {"gold_box", {r.gold_box.x0, r.gold_box.y0, r.gold_box.x1, r.gold_box.y1}},
                                  {"proposals", props},
                                  {"gold_index", r.gold_index}});
    }
    j["dialogue"] = nlohmann::json::array();
    for (const auto& d : scene.dialogue)
        j["dialogue"].push_back({{"role", d.role}, {"text", d.text}});
    return j;
}

namespace {

Box box_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4)
        throw core::parse_error("scene: box must be [x0, y0, x1, y1]");
    return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

SyntheticScene scene_from_json(const nlohmann::json& j) {
    SyntheticScene sc;
    sc.seed = j.at("seed").get<std::int64_t>();
    sc.image.h = j.at("image").at("h").get<int>();
    sc.image.w = j.at("image").at("w").get<int>();
    sc.image.c = 3;
    sc.image.pixels = j.at("image").at("pixels").get<std::vector<double>>();
    for (const auto& o : j.at("objects"))
        sc.objects.push_back({o.at("category").get<std::string>(),
                              o.at("color").get<std::string>(), box_from_json(o.at("box"))});
    sc.captions = j.at("captions").get<std::vector<std::string>>();
    for (const auto& q : j.at("qa"))
        sc.qa.push_back({q.at("q").get<std::string>(),
                         q.at("answers").get<std::vector<std::string>>(),
                         q.at("choices").get<std::vector<std::string>>(),
                         q.at("truth").get<int>()});
    if (j.contains("referring"))
        for (const auto& r : j.at("referring")) {
            ReferringItem ref;
            ref.phrase = r.at("phrase").get<std::string>();
            ref.gold_box = box_from_json(r.at("gold_box"));
            for (const auto& p : r.at("proposals")) ref.proposals.push_back(box_from_json(p));
            ref.gold_index = r.at("gold_index").get<int>();
            sc.referring.push_back(std::move(ref));
        }
    if (j.contains("dialogue"))
        for (const auto& d : j.at("dialogue"))
            sc.dialogue.push_back({d.at("role").get<std::string>(), d.at("text").get<std::string>()});
    return sc;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
    return nlohmann::json{{"schema_version", m.schema_version},
                          {"seed", m.seed},
                          {"n_scenes", m.n_scenes},
                          {"splits", {{"train", m.train}, {"val", m.val}, {"test", m.test}}},
                          {"vocab_hash", m.vocab_hash},
                          {"pope_exhausted_scenes", m.pope_exhausted_scenes}};
}

std::vector<SyntheticScene> load_scenes_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    std::vector<SyntheticScene> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            out.push_back(scene_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw core::parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::vector<std::string>> text_corpus(const std::vector<SyntheticScene>& scenes) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& sc : scenes) {
        for (const auto& c : sc.captions) corpus.push_back(text::tokenize(c));
        for (const auto& q : sc.qa) {
            corpus.push_back(text::tokenize(q.question));
            for (const auto& a : q.answers) corpus.push_back(text::tokenize(a));
            for (const auto& c : q.choices) corpus.push_back(text::tokenize(c));
        }
        for (const auto& r : sc.referring) corpus.push_back(text::tokenize(r.phrase));
        for (const auto& d : sc.dialogue) corpus.push_back(text::tokenize(d.text));
    }
    return corpus;
}

DatasetManifest emit_dataset(int n_scenes, std::int64_t seed, const std::string& dir) {
    if (n_scenes < 1) throw contract_error("emit_dataset: need at least one scene");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir + ": " + ec.message());

    std::vector<SyntheticScene> scenes;
    scenes.reserve(static_cast<size_t>(n_scenes));
    for (int i = 0; i < n_scenes; ++i)
        scenes.push_back(generate_scene(derive_scene_seed(seed, i)));

    DatasetManifest m;
    m.seed = seed;
    m.n_scenes = n_scenes;
    for (const auto& sc : scenes) {
        std::set<std::string> present;
        for (const auto& o : sc.objects) present.insert(o.category);
        if (present.size() == categories().size()) ++m.pope_exhausted_scenes;
    }

    const char* names[3] = {"train.jsonl", "val.jsonl", "test.jsonl"};
    std::ofstream files[3];
    for (int s = 0; s < 3; ++s) {
        const std::string path = dir + "/" + names[s];
        files[s].open(path);
        if (!files[s]) throw io_error("cannot write " + path);
    }
    for (int i = 0; i < n_scenes; ++i) {
        const int r = i % 10;
        const int split = r < 8 ? 0 : (r == 8 ? 1 : 2);
        files[split] << scene_to_json(scenes[static_cast<size_t>(i)]).dump() << '\n';
        if (split == 0) ++m.train;
        else if (split == 1) ++m.val;
        else ++m.test;
    }
    for (auto& f : files) f.close();

    text::Vocab vocab = text::Vocab::build(text_corpus(scenes));
    vocab.save(dir + "/vocab.txt");
    m.vocab_hash = vocab.fingerprint();

    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw io_error("cannot write " + dir + "/manifest.json");
    mf << manifest_to_json(m).dump(2) << '\n';
    return m;
}

void validate_scene(const SyntheticScene& sc) {
    sc.image.validate();
    for (double v : sc.image.pixels) {
        const double scaled = v * 255.0;
        if (std::abs(scaled - std::round(scaled)) > 1e-9)
            throw contract_error("scene " + std::to_string(sc.seed) +
                                 ": pixel not quantized to 1/255 steps");
    }
    if (sc.objects.empty())
        throw contract_error("scene " + std::to_string(sc.seed) + ": no objects");
    std::set<std::string> present_cats, present_colors;
    for (const auto& o : sc.objects) {
        o.box.validate();
        if (o.box.x0 < 0 || o.box.y0 < 0 || o.box.x1 > sc.image.w || o.box.y1 > sc.image.h)
            throw contract_error("scene " + std::to_string(sc.seed) + ": box outside canvas");
        if (std::find(categories().begin(), categories().end(), o.category) == categories().end())
            throw contract_error("scene: unknown category " + o.category);
        if (std::find(colors().begin(), colors().end(), o.color) == colors().end())
            throw contract_error("scene: unknown color " + o.color);
        present_cats.insert(o.category);
        present_colors.insert(o.color);
    }
    for (size_t i = 0; i < sc.objects.size(); ++i)
        for (size_t j = i + 1; j < sc.objects.size(); ++j)
            if (boxes_overlap(sc.objects[i].box, sc.objects[j].box))
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": objects " + std::to_string(i) + " and " +
                                     std::to_string(j) + " overlap");
    if (sc.captions.size() < 2)
        throw contract_error("scene " + std::to_string(sc.seed) + ": fewer than 2 captions");
    for (const auto& c : sc.captions) {
        const auto toks = text::tokenize(c);
        for (const auto& cat : metrics::extract_object_mentions(toks, category_lexicon()))
            if (!present_cats.count(cat))
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": caption names absent category " + cat);
        for (const auto& col : metrics::extract_object_mentions(toks, color_lexicon()))
            if (!present_colors.count(col))
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": caption names absent color " + col);
    }
    for (const auto& qa : sc.qa) {
        if (qa.answers.size() != 10)
            throw contract_error("scene: QA item without 10 answers");
        if (qa.choices.size() < 2 || qa.truth < 0 ||
            qa.truth >= static_cast<int>(qa.choices.size()))
            throw contract_error("scene: QA choices/truth malformed");
        const std::string& truth = qa.choices[static_cast<size_t>(qa.truth)];
        const auto qtoks = text::tokenize(qa.question);
        if (qtoks.size() >= 2 && qtoks[0] == "how" && qtoks[1] == "many") {
            if (truth != std::to_string(sc.objects.size()))
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": count answer disagrees with object list");
        } else if (qtoks.size() >= 4 && qtoks[0] == "is" && qtoks[1] == "there") {
            const std::string& cat = qtoks[3];
            const bool should = present_cats.count(cat) != 0;
            if ((truth == "yes") != should)
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": presence answer disagrees with object list for " + cat);
        } else if (qtoks.size() >= 5 && qtoks[0] == "what" && qtoks[1] == "color") {
            const std::string& cat = qtoks[4];
            std::vector<const SceneObject*> of_cat;
            for (const auto& o : sc.objects)
                if (o.category == cat) of_cat.push_back(&o);
            if (of_cat.size() != 1 || of_cat[0]->color != truth)
                throw contract_error("scene " + std::to_string(sc.seed) +
                                     ": color answer disagrees with object list for " + cat);
        }
    }
    for (const auto& r : sc.referring) {
        if (r.proposals.size() < 2)
            throw contract_error("scene: referring item with fewer than 2 proposals");
        if (r.gold_index < 0 || r.gold_index >= static_cast<int>(r.proposals.size()))
            throw contract_error("scene: referring gold_index out of range");
        const Box& g = r.proposals[static_cast<size_t>(r.gold_index)];
        if (g.x0 != r.gold_box.x0 || g.y0 != r.gold_box.y0 || g.x1 != r.gold_box.x1 ||
            g.y1 != r.gold_box.y1)
            throw contract_error("scene: gold box not at gold_index");
        bool matches_object = false;
        for (const auto& o : sc.objects)
            if (o.box.x0 == r.gold_box.x0 && o.box.y0 == r.gold_box.y0 &&
                o.box.x1 == r.gold_box.x1 && o.box.y1 == r.gold_box.y1)
                matches_object = true;
        if (!matches_object)
            throw contract_error("scene: referring gold box matches no object");
    }
    for (const auto& d : sc.dialogue)
        if (d.role != "user" && d.role != "assistant")
            throw contract_error("scene: dialogue role must be user or assistant");
}

}  // namespace vlmforge::synth
