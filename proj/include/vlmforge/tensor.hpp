#pragma once

// Dense double-precision tensor with reverse-mode autodiff. A Tensor is a
// cheap handle onto a shared node; ops executed while a Tape is alive are
// recorded in creation order (which is a topological order), and
// Tape::backward sweeps that record once in reverse.
//
// Concurrency: one tape per logical thread. Forward ops run without a live
// tape record nothing and are safe to run in parallel over shared, read-only
// parameter tensors.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vlmforge/errors.hpp"
#include "vlmforge/kernels.hpp"

namespace vlmforge::core {

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // lazily sized to data on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // reads own grad, accumulates into parents
    long tape_index = -1;

    long size() const { return static_cast<long>(data.size()); }
    double* grad_buf();  // allocates zeros on demand
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor identity(int n);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int rows() const;  // first axis of a 2-D tensor
    int cols() const;  // second axis of a 2-D tensor
    long size() const { return node_->size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::span<const double> grad() const;
    double operator[](long i) const { return node_->data[static_cast<size_t>(i)]; }
    double at(int r, int c) const;
    double value() const;  // scalar tensors only

    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() const;
    void accumulate_grad(std::span<const double> g);

    std::shared_ptr<TensorNode> node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Scoped recording context. Constructing makes it current for this thread;
// destruction pops it. Nested tapes are allowed (inner wins).
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds d(loss)/d(loss)=1 and accumulates gradients into every
    // requires_grad tensor reachable from loss. Callable multiple times;
    // gradients add up until zero_grad.
    void backward(const Tensor& loss);

    long size() const { return static_cast<long>(nodes_.size()); }

    static Tape* current();
    void record(const std::shared_ptr<TensorNode>& n);

  private:
    std::vector<std::shared_ptr<TensorNode>> nodes_;
    Tape* prev_ = nullptr;
};

enum class Reduction { mean, sum };

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias broadcast over rows
Tensor gelu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor mean_rows(const Tensor& x);  // [n x d] -> [1 x d]
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T

// ---- normalization & attention pieces ----
Tensor softmax(const Tensor& x, int axis);
Tensor softmax_rows(const Tensor& x);
// Row i attends to columns [0, i + 1 + offset); used for causal attention
// where the key sequence leads the query sequence by `offset` positions.
Tensor softmax_rows_causal(const Tensor& x, int offset = 0);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& x);
Tensor div_by_scalar(const Tensor& x, const Tensor& s);
// exp(log_tau) clamped to [lo, hi]; gradient is zero outside the clamp range.
Tensor exp_clamped(const Tensor& log_v, double lo, double hi);
// y + tanh(alpha) * z, with an exact identity fast path when tanh(alpha) == 0.
Tensor gated_residual_add(const Tensor& y, const Tensor& z, const Tensor& alpha);

// ---- losses ----
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     Reduction red = Reduction::mean);
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels);

// ---- convolution (image tensors are [H x W x C], kernels [F x k x k x C]) ----
Tensor conv2d(const Tensor& image, const Tensor& kernel, const Tensor& bias,
              kern::Act act = kern::Act::identity);

bool all_finite(const Tensor& x);

}  // namespace vlmforge::core
