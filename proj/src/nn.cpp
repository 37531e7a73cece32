#include "vlmforge/nn.hpp"

#include <cmath>

namespace vlmforge::nn {

using namespace vlmforge::core;

namespace {

Tensor random_matrix(int rows, int cols, Rng& rng, double sd) {
    std::vector<double> d(static_cast<size_t>(rows) * cols);
    for (double& v : d) v = rng.normal(0.0, sd);
    return Tensor::from_data({rows, cols}, std::move(d), true);
}

}  // namespace

Linear Linear::init(int in, int out, Rng& rng, double sd, bool bias) {
    Linear l;
    l.w = random_matrix(in, out, rng, sd);
    l.has_bias = bias;
    if (bias) l.b = Tensor::zeros({1, out}, true);
    return l;
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, w);
    if (has_bias) y = add_bias(y, b);
    return y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    if (has_bias) out.push_back({prefix + ".b", b});
}

LayerNorm LayerNorm::init(int d) {
    LayerNorm ln;
    ln.gain = Tensor::full({d}, 1.0, true);
    ln.bias = Tensor::zeros({d}, true);
    return ln;
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return layer_norm(x, gain, bias, eps);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
}

Mlp Mlp::init(int d, int hidden, Rng& rng) {
    Mlp m;
    m.fc1 = Linear::init(d, hidden, rng);
    m.fc2 = Linear::init(hidden, d, rng);
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    return fc2.forward(gelu(fc1.forward(x)));
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

MultiHeadSelfAttention MultiHeadSelfAttention::init(int d, int heads, Rng& rng) {
    if (heads < 1 || d % heads != 0)
        throw dimension_error("attention: width " + std::to_string(d) +
                              " not divisible by " + std::to_string(heads) + " heads");
    MultiHeadSelfAttention a;
    a.heads = heads;
    a.wq = Linear::init(d, d, rng, 0.02, false);
    a.wk = Linear::init(d, d, rng, 0.02, false);
    a.wv = Linear::init(d, d, rng, 0.02, false);
    a.wo = Linear::init(d, d, rng, 0.02, false);
    return a;
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, bool causal, int offset,
                                       AttnTrace* trace) const {
    const int d = x.cols();
    const int dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = wq.forward(x);
    Tensor k = wk.forward(x);
    Tensor v = wv.forward(x);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul_nt(qh, kh), inv_scale);
        Tensor weights = causal ? softmax_rows_causal(scores, offset) : softmax_rows(scores);
        if (trace) trace->weights.push_back(weights);
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return wo.forward(merged);
}

void MultiHeadSelfAttention::collect(const std::string& prefix, ParamList& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

CrossAttention CrossAttention::init(int d, int dm, Rng& rng) {
    CrossAttention c;
    c.wq = random_matrix(d, d, rng, 0.02);
    c.wk = random_matrix(dm, d, rng, 0.02);
    c.wv = random_matrix(dm, d, rng, 0.02);
    return c;
}

Tensor CrossAttention::forward(const Tensor& y, const Tensor& memory, AttnTrace* trace) const {
    if (memory.rows() < 1) throw contract_error("cross-attention: no keys to attend to");
    const int d = wq.cols();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor q = matmul(y, wq);
    Tensor k = matmul(memory, wk);
    Tensor v = matmul(memory, wv);
    Tensor weights = softmax_rows(scale(matmul_nt(q, k), inv_scale));
    if (trace) trace->weights.push_back(weights);
    return matmul(weights, v);
}

void CrossAttention::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".wv", wv});
}

TransformerBlock TransformerBlock::init(int d, int heads, int mlp_hidden, Rng& rng) {
    TransformerBlock b;
    b.attn = MultiHeadSelfAttention::init(d, heads, rng);
    b.ln1 = LayerNorm::init(d);
    b.ln2 = LayerNorm::init(d);
    b.mlp = Mlp::init(d, mlp_hidden, rng);
    return b;
}

Tensor TransformerBlock::forward(const Tensor& x, bool causal, int offset,
                                 AttnTrace* trace) const {
    Tensor h = ln1.forward(add(x, attn.forward(x, causal, offset, trace)));
    return ln2.forward(add(h, mlp.forward(h)));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
    attn.collect(prefix + ".attn", out);
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    mlp.collect(prefix + ".mlp", out);
}

Tensor residual(const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    Tensor fx = f(x);
    if (fx.shape() != x.shape())
        throw dimension_error("residual: F changed the shape");
    return add(x, fx);
}

}  // namespace vlmforge::nn
