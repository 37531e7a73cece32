#pragma once

// Small reusable blocks: linear layers, layer norm with parameters, MLP,
// multi-head self-attention and single-head cross-attention composed from
// tensor ops so every gradient flows through checked primitives.

#include <string>
#include <vector>

#include "vlmforge/rng.hpp"
#include "vlmforge/tensor.hpp"

namespace vlmforge::nn {

using core::Tensor;

struct ParamRef {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<ParamRef>;

// Attention matrices captured during a forward pass (one entry per
// softmax application, forward order). Values only, not graph nodes.
struct AttnTrace {
    std::vector<Tensor> weights;
};

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [1 x out] when biased
    bool has_bias = true;

    static Linear init(int in, int out, Rng& rng, double sd = 0.02, bool bias = true);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
    Tensor gain;  // [d]
    Tensor bias;  // [d]
    double eps = 1e-5;

    static LayerNorm init(int d);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Mlp {
    Linear fc1, fc2;

    static Mlp init(int d, int hidden, Rng& rng);
    Tensor forward(const Tensor& x) const;  // fc2(gelu(fc1 x))
    void collect(const std::string& prefix, ParamList& out) const;
};

struct MultiHeadSelfAttention {
    int heads = 1;
    Linear wq, wk, wv, wo;  // all [d x d], no bias

    static MultiHeadSelfAttention init(int d, int heads, Rng& rng);
    // causal: row i sees keys [0, i+1+offset)
    Tensor forward(const Tensor& x, bool causal = false, int offset = 0,
                   AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Single-head cross-attention: queries from y [n x d], keys/values projected
// from memory [m x dm]. Output is the attention-weighted value sum (no output
// projection).
struct CrossAttention {
    Tensor wq;  // [d x d]
    Tensor wk;  // [dm x d]
    Tensor wv;  // [dm x d]

    static CrossAttention init(int d, int dm, Rng& rng);
    Tensor forward(const Tensor& y, const Tensor& memory, AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Post-norm transformer block: x = LN(x + Attn(x)); x = LN(x + MLP(x)).
struct TransformerBlock {
    MultiHeadSelfAttention attn;
    LayerNorm ln1, ln2;
    Mlp mlp;

    static TransformerBlock init(int d, int heads, int mlp_hidden, Rng& rng);
    Tensor forward(const Tensor& x, bool causal = false, int offset = 0,
                   AttnTrace* trace = nullptr) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// x_out = x_in + F(x_in); F must preserve shape.
Tensor residual(const Tensor& x, const std::function<Tensor(const Tensor&)>& f);

}  // namespace vlmforge::nn
