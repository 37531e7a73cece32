#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vlmforge/vision.hpp"

using namespace vlmforge;
using namespace vlmforge::core;
using namespace vlmforge::vision;

namespace {

Image random_image(int h, int w, int c, Rng& rng) {
    Image img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.pixels.resize(static_cast<size_t>(h) * w * c);
    for (double& v : img.pixels) v = rng.uniform(0.0, 1.0);
    return img;
}

}  // namespace

TEST_CASE("patch_embed: token count law and CLS slot") {
    Rng rng(31);
    auto pe = PatchEmbed::init(8, 8, 1, 4, 16, rng);
    auto vt = pe.forward(random_image(8, 8, 1, rng));
    CHECK(vt.count() == 5);  // 4 patches + CLS
    CHECK(vt.has_cls);
    CHECK(vt.patch_rows().rows() == 4);
    CHECK(vt.grid_h == 2);
    CHECK(vt.grid_w == 2);

    // patch count law over several accepted sizes
    for (int hw : {4, 8, 12, 16}) {
        auto pe2 = PatchEmbed::init(hw, hw, 2, 4, 8, rng);
        auto vt2 = pe2.forward(random_image(hw, hw, 2, rng));
        CHECK(vt2.count() == (hw / 4) * (hw / 4) + 1);
    }

    CHECK_THROWS_WITH_AS((void)PatchEmbed::init(9, 8, 1, 4, 16, rng),
                         doctest::Contains("patch size 4"), dimension_error);
}

TEST_CASE("patch_embed: zero image with zero bias/positional keeps CLS only") {
    Rng rng(32);
    auto pe = PatchEmbed::init(8, 8, 1, 4, 16, rng);
    std::fill(pe.proj.b.mutable_data().begin(), pe.proj.b.mutable_data().end(), 0.0);
    std::fill(pe.pos.mutable_data().begin(), pe.pos.mutable_data().end(), 0.0);
    Image img;
    img.h = img.w = 8;
    img.c = 1;
    img.pixels.assign(64, 0.0);
    auto vt = pe.forward(img);
    for (int j = 0; j < 16; ++j) CHECK(vt.tokens.at(0, j) == pe.cls.at(0, j));
    for (int i = 1; i < 5; ++i)
        for (int j = 0; j < 16; ++j) CHECK(vt.tokens.at(i, j) == 0.0);
}

TEST_CASE("patch_embed: vec() ordering matches a naive reshape oracle") {
    Rng rng(33);
    Image img = random_image(8, 12, 3, rng);
    const int p = 4;
    const int gw = img.w / p;
    for (int gy = 0; gy < img.h / p; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const auto flat = flatten_patch(img, gy, gx, p);
            // oracle: independent index arithmetic over the raw pixel array
            size_t idx = 0;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    for (int ch = 0; ch < img.c; ++ch) {
                        const size_t raw =
                            (static_cast<size_t>(gy * p + y) * img.w + (gx * p + x)) * img.c + ch;
                        CHECK(flat[idx++] == img.pixels[raw]);
                    }
        }
}

TEST_CASE("vit_encode: zero layers is the identity") {
    Rng rng(34);
    auto pe = PatchEmbed::init(8, 8, 1, 4, 16, rng);
    auto vt = pe.forward(random_image(8, 8, 1, rng));
    VitEncoder enc;  // no blocks
    auto out = enc.forward(vt);
    for (long i = 0; i < vt.tokens.size(); ++i) CHECK(out.tokens[i] == vt.tokens[i]);
}

TEST_CASE("vit_encode: permutation equivariance without positional embeddings") {
    Rng rng(35);
    auto enc = VitEncoder::init(16, 2, 2, 64, rng);
    auto pe = PatchEmbed::init(8, 8, 1, 4, 16, rng);
    std::fill(pe.pos.mutable_data().begin(), pe.pos.mutable_data().end(), 0.0);
    auto vt = pe.forward(random_image(8, 8, 1, rng));

    const std::vector<int> perm = {3, 1, 4, 2};  // rows 1..4 permuted, CLS fixed
    VisualTokens permuted = vt;
    permuted.tokens = concat_rows({slice_rows(vt.tokens, 0, 1), embedding_rows(vt.tokens, perm)});

    auto out = enc.forward(vt);
    auto out_p = enc.forward(permuted);
    for (int j = 0; j < 16; ++j)
        CHECK(std::abs(out_p.tokens.at(0, j) - out.tokens.at(0, j)) < 1e-9);
    for (size_t r = 0; r < perm.size(); ++r)
        for (int j = 0; j < 16; ++j)
            CHECK(std::abs(out_p.tokens.at(static_cast<int>(r) + 1, j) -
                           out.tokens.at(perm[r], j)) < 1e-9);
}

TEST_CASE("vit_encode: attention rows sum to one") {
    Rng rng(36);
    auto enc = VitEncoder::init(16, 2, 2, 64, rng);
    auto pe = PatchEmbed::init(8, 8, 1, 4, 16, rng);
    auto vt = pe.forward(random_image(8, 8, 1, rng));
    nn::AttnTrace trace;
    (void)enc.forward(vt, &trace);
    CHECK(trace.weights.size() == 4);  // 2 layers x 2 heads
    for (const auto& w : trace.weights)
        for (int i = 0; i < w.rows(); ++i) {
            double s = 0;
            for (int j = 0; j < w.cols(); ++j) s += w.at(i, j);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
}

TEST_CASE("residual: zero function is the identity, gradient includes the skip path") {
    Rng rng(37);
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor zero_out = nn::residual(x, [](const Tensor& t) { return scale(t, 0.0); });
    for (long i = 0; i < x.size(); ++i) CHECK(zero_out[i] == x[i]);

    CHECK_THROWS_AS((void)nn::residual(x, [](const Tensor& t) { return transpose(t); }),
                    dimension_error);

    Tensor w = Tensor::from_data({3, 3}, {0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, 0.8, -0.9}, true);
    Tensor probe = Tensor::from_data({2, 3}, {1, -1, 2, 0.5, -0.25, 1.5});
    auto loss = [&] {
        Tensor y = nn::residual(x, [&](const Tensor& t) { return tanh_t(matmul(t, w)); });
        return sum_all(mul(y, probe));
    };
    CHECK(gradcheck::check(loss, {x, w}).max_rel_error < 1e-4);
    // the identity path contributes g itself: with w == 0 the gradient is exactly probe
    Tensor x2 = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor w0 = Tensor::zeros({3, 3}, true);
    {
        Tape tape;
        Tensor y = nn::residual(x2, [&](const Tensor& t) { return tanh_t(matmul(t, w0)); });
        tape.backward(sum_all(mul(y, probe)));
    }
    for (long i = 0; i < x2.size(); ++i)
        CHECK(x2.grad()[static_cast<size_t>(i)] == doctest::Approx(probe[i]).epsilon(1e-12));
}

TEST_CASE("residual: an 8-block 1x1-conv stack trains") {
    Rng rng(38);
    const int c = 2;
    // per block: two 1x1 conv layers, the second zero-initialized
    struct Block {
        Tensor k1, b1, k2, b2;
    };
    std::vector<Block> blocks;
    std::vector<Tensor> params;
    for (int i = 0; i < 8; ++i) {
        Block b;
        std::vector<double> k1(static_cast<size_t>(c) * c);
        for (double& v : k1) v = rng.normal(0, 0.3);
        b.k1 = Tensor::from_data({c, 1, 1, c}, std::move(k1), true);
        b.b1 = Tensor::zeros({c}, true);
        b.k2 = Tensor::zeros({c, 1, 1, c}, true);
        b.b2 = Tensor::zeros({c}, true);
        params.insert(params.end(), {b.k1, b.b1, b.k2, b.b2});
        blocks.push_back(std::move(b));
    }
    Image img = random_image(5, 5, c, rng);
    Tensor target = Tensor::from_data({1}, {0.8});
    auto forward = [&] {
        Tensor h = img.to_tensor();
        for (const auto& b : blocks)
            h = nn::residual(h, [&](const Tensor& t) {
                return conv2d(conv2d(t, b.k1, b.b1, kern::Act::tanh_act), b.k2, b.b2);
            });
        Tensor diff = sub(mean_all(h), target);
        return mul(diff, diff);
    };
    double first = 0, last = 0;
    for (int step = 0; step < 200; ++step) {
        Tape tape;
        Tensor loss = forward();
        if (step == 0) first = loss.value();
        last = loss.value();
        tape.backward(loss);
        for (auto& p : params) {
            auto d = p.mutable_data();
            const auto g = p.grad();
            for (size_t i = 0; i < d.size(); ++i) d[i] -= 0.05 * g[i];
            p.zero_grad();
        }
    }
    CHECK(last < 0.1 * first);
}
