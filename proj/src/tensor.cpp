#include "vlmforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace vlmforge::core {

namespace {

thread_local Tape* g_tape = nullptr;

long numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
    os << "]";
    return os.str();
}

std::shared_ptr<TensorNode> new_node(std::vector<int> shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    if (numel(n->shape) != n->size())
        throw dimension_error("tensor data length does not match shape " + shape_str(n->shape));
    return n;
}

bool wants_grad(const std::vector<std::shared_ptr<TensorNode>>& parents) {
    if (!g_tape) return false;
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

Tensor finish(std::shared_ptr<TensorNode> n,
              std::vector<std::shared_ptr<TensorNode>> parents,
              const std::function<std::function<void()>(TensorNode*)>& make_bp) {
    if (wants_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = make_bp(n.get());
        g_tape->record(n);
    }
    return Tensor(std::move(n));
}

void check_2d(const Tensor& x, const char* op) {
    if (x.ndim() != 2)
        throw dimension_error(std::string(op) + ": expected 2-D tensor, got " +
                              shape_str(x.shape()));
}

}  // namespace

double* TensorNode::grad_buf() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
}

// ---- Tensor ----

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const long cnt = numel(shape);
    auto n = new_node(std::move(shape), std::vector<double>(static_cast<size_t>(cnt), 0.0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    long cnt = numel(shape);
    auto n = new_node(std::move(shape), std::vector<double>(static_cast<size_t>(cnt), v));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
    auto n = new_node(std::move(shape), std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::identity(int n) {
    std::vector<double> d(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) d[static_cast<size_t>(i) * n + i] = 1.0;
    return from_data({n, n}, std::move(d));
}

int Tensor::rows() const {
    if (ndim() != 2) throw dimension_error("rows(): tensor is " + shape_str(shape()));
    return node_->shape[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw dimension_error("cols(): tensor is " + shape_str(shape()));
    return node_->shape[1];
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
}

double Tensor::at(int r, int c) const {
    return node_->data[static_cast<size_t>(r) * cols() + c];
}

double Tensor::value() const {
    if (size() != 1) throw contract_error("value(): tensor is not scalar, shape " +
                                          shape_str(shape()));
    return node_->data[0];
}

void Tensor::zero_grad() const {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) {
    if (static_cast<long>(g.size()) != size())
        throw dimension_error("accumulate_grad: size mismatch");
    double* gb = node_->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
}

// ---- Tape ----

Tape::Tape() {
    prev_ = g_tape;
    g_tape = this;
}

Tape::~Tape() { g_tape = prev_; }

Tape* Tape::current() { return g_tape; }

void Tape::record(const std::shared_ptr<TensorNode>& n) {
    n->tape_index = static_cast<long>(nodes_.size());
    nodes_.push_back(n);
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw contract_error("backward: loss must be scalar, got shape " +
                             shape_str(loss.shape()));
    auto root = loss.node();
    if (root->tape_index < 0 || root->tape_index >= static_cast<long>(nodes_.size()) ||
        nodes_[static_cast<size_t>(root->tape_index)] != root)
        throw contract_error("backward: loss is not on this tape");
    // recorded (non-leaf) grads are per-call scratch; only leaf gradients
    // accumulate across calls
    for (auto& n : nodes_) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    root->grad_buf()[0] = 1.0;
    std::unordered_set<TensorNode*> needed;
    needed.insert(root.get());
    for (long i = root->tape_index; i >= 0; --i) {
        TensorNode* n = nodes_[static_cast<size_t>(i)].get();
        if (!needed.count(n)) continue;
        // nothing accumulated here (e.g. blocked by a zero gate): propagating
        // zeros is a no-op, skip
        if (n->grad.empty()) continue;
        for (const auto& p : n->parents) needed.insert(p.get());
        if (n->backprop) n->backprop();
    }
}

// ---- op helpers ----

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double), int mode) {
    if (a.shape() != b.shape())
        throw dimension_error(std::string(name) + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(a.size()));
    const auto ad = a.data();
    const auto bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    auto node = new_node(a.shape(), std::move(out));
    auto an = a.node();
    auto bn = b.node();
    return finish(node, {an, bn}, [an, bn, mode](TensorNode* self) {
        return [an, bn, self, mode]() {
            const double* g = self->grad.data();
            const long n = self->size();
            if (an->requires_grad) {
                double* ga = an->grad_buf();
                if (mode == 0 || mode == 1)  // add, sub
                    for (long i = 0; i < n; ++i) ga[i] += g[i];
                else  // mul
                    for (long i = 0; i < n; ++i) ga[i] += g[i] * bn->data[static_cast<size_t>(i)];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_buf();
                if (mode == 0)
                    for (long i = 0; i < n; ++i) gb[i] += g[i];
                else if (mode == 1)
                    for (long i = 0; i < n; ++i) gb[i] -= g[i];
                else
                    for (long i = 0; i < n; ++i) gb[i] += g[i] * an->data[static_cast<size_t>(i)];
            }
        };
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "add", [](double x, double y) { return x + y; }, 0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; }, 1);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; }, 2);
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v *= c;
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, c](TensorNode* self) {
        return [xn, self, c]() {
            double* gx = xn->grad_buf();
            for (long i = 0; i < self->size(); ++i) gx[i] += c * self->grad[static_cast<size_t>(i)];
        };
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    check_2d(x, "add_bias");
    const int n = x.rows(), d = x.cols();
    if (bias.size() != d)
        throw dimension_error("add_bias: bias " + shape_str(bias.shape()) +
                              " does not match row width of " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bd = bias.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] += bd[j];
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    auto bn = bias.node();
    return finish(node, {xn, bn}, [xn, bn, n, d](TensorNode* self) {
        return [xn, bn, n, d, self]() {
            const double* g = self->grad.data();
            if (xn->requires_grad) {
                double* gx = xn->grad_buf();
                for (long i = 0; i < self->size(); ++i) gx[i] += g[i];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_buf();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gb[j] += g[static_cast<size_t>(i) * d + j];
            }
        };
    });
}

namespace {

Tensor unary_act(const Tensor& x, kern::Act act) {
    std::vector<double> out(static_cast<size_t>(x.size()));
    const auto xd = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = kern::apply_act(act, xd[i]);
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, act](TensorNode* self) {
        return [xn, self, act]() {
            double* gx = xn->grad_buf();
            for (long i = 0; i < self->size(); ++i)
                gx[i] += self->grad[static_cast<size_t>(i)] *
                         kern::act_grad(act, xn->data[static_cast<size_t>(i)]);
        };
    });
}

}  // namespace

Tensor gelu(const Tensor& x) { return unary_act(x, kern::Act::gelu); }
Tensor tanh_t(const Tensor& x) { return unary_act(x, kern::Act::tanh_act); }
Tensor relu(const Tensor& x) { return unary_act(x, kern::Act::relu); }

Tensor transpose(const Tensor& x) {
    check_2d(x, "transpose");
    const int n = x.rows(), m = x.cols();
    std::vector<double> out(static_cast<size_t>(x.size()));
    const auto xd = x.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out[static_cast<size_t>(j) * n + i] = xd[static_cast<size_t>(i) * m + j];
    auto node = new_node({m, n}, std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, n, m](TensorNode* self) {
        return [xn, n, m, self]() {
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    gx[static_cast<size_t>(i) * m + j] +=
                        self->grad[static_cast<size_t>(j) * n + i];
        };
    });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (numel(shape) != x.size())
        throw dimension_error("reshape: cannot view " + shape_str(x.shape()) + " as " +
                              shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    auto node = new_node(std::move(shape), std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn](TensorNode* self) {
        return [xn, self]() {
            double* gx = xn->grad_buf();
            for (long i = 0; i < self->size(); ++i) gx[i] += self->grad[static_cast<size_t>(i)];
        };
    });
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    check_2d(x, "slice_rows");
    const int n = x.rows(), d = x.cols();
    if (r0 < 0 || r1 > n || r0 >= r1)
        throw index_error("slice_rows: range [" + std::to_string(r0) + ", " +
                          std::to_string(r1) + ") invalid for " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin() + static_cast<long>(r0) * d,
                            x.data().begin() + static_cast<long>(r1) * d);
    auto node = new_node({r1 - r0, d}, std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, r0, d](TensorNode* self) {
        return [xn, r0, d, self]() {
            double* gx = xn->grad_buf() + static_cast<long>(r0) * d;
            for (long i = 0; i < self->size(); ++i) gx[i] += self->grad[static_cast<size_t>(i)];
        };
    });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    check_2d(x, "slice_cols");
    const int n = x.rows(), d = x.cols();
    if (c0 < 0 || c1 > d || c0 >= c1)
        throw index_error("slice_cols: range [" + std::to_string(c0) + ", " +
                          std::to_string(c1) + ") invalid for " + shape_str(x.shape()));
    const int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(n) * w);
    const auto xd = x.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j)
            out[static_cast<size_t>(i) * w + j] = xd[static_cast<size_t>(i) * d + c0 + j];
    auto node = new_node({n, w}, std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, n, d, c0, w](TensorNode* self) {
        return [xn, n, d, c0, w, self]() {
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j)
                    gx[static_cast<size_t>(i) * d + c0 + j] +=
                        self->grad[static_cast<size_t>(i) * w + j];
        };
    });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw contract_error("concat_rows: empty input");
    const int d = xs[0].cols();
    int total = 0;
    for (const auto& x : xs) {
        check_2d(x, "concat_rows");
        if (x.cols() != d)
            throw dimension_error("concat_rows: width mismatch " + shape_str(x.shape()));
        total += x.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total) * d);
    for (const auto& x : xs) out.insert(out.end(), x.data().begin(), x.data().end());
    auto node = new_node({total, d}, std::move(out));
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    return finish(node, parents, [parents](TensorNode* self) {
        return [parents, self]() {
            long off = 0;
            for (const auto& p : parents) {
                if (p->requires_grad) {
                    double* gp = p->grad_buf();
                    for (long i = 0; i < p->size(); ++i)
                        gp[i] += self->grad[static_cast<size_t>(off + i)];
                }
                off += p->size();
            }
        };
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw contract_error("concat_cols: empty input");
    const int n = xs[0].rows();
    int total = 0;
    for (const auto& x : xs) {
        check_2d(x, "concat_cols");
        if (x.rows() != n)
            throw dimension_error("concat_cols: height mismatch " + shape_str(x.shape()));
        total += x.cols();
    }
    std::vector<double> out(static_cast<size_t>(n) * total);
    int coff = 0;
    for (const auto& x : xs) {
        const int w = x.cols();
        const auto xd = x.data();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w; ++j)
                out[static_cast<size_t>(i) * total + coff + j] =
                    xd[static_cast<size_t>(i) * w + j];
        coff += w;
    }
    auto node = new_node({n, total}, std::move(out));
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    return finish(node, parents, [parents, n, total](TensorNode* self) {
        return [parents, n, total, self]() {
            int coff = 0;
            for (const auto& p : parents) {
                const int w = p->shape[1];
                if (p->requires_grad) {
                    double* gp = p->grad_buf();
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < w; ++j)
                            gp[static_cast<size_t>(i) * w + j] +=
                                self->grad[static_cast<size_t>(i) * total + coff + j];
                }
                coff += w;
            }
        };
    });
}

Tensor mean_rows(const Tensor& x) {
    check_2d(x, "mean_rows");
    const int n = x.rows(), d = x.cols();
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    const auto xd = x.data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(j)] += xd[static_cast<size_t>(i) * d + j];
    for (double& v : out) v /= n;
    auto node = new_node({1, d}, std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, n, d](TensorNode* self) {
        return [xn, n, d, self]() {
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    gx[static_cast<size_t>(i) * d + j] += self->grad[static_cast<size_t>(j)] / n;
        };
    });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto node = new_node({1}, {s});
    auto xn = x.node();
    return finish(node, {xn}, [xn](TensorNode* self) {
        return [xn, self]() {
            const double g = self->grad[0];
            double* gx = xn->grad_buf();
            for (long i = 0; i < xn->size(); ++i) gx[i] += g;
        };
    });
}

Tensor mean_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    const long n = x.size();
    auto node = new_node({1}, {s / n});
    auto xn = x.node();
    return finish(node, {xn}, [xn, n](TensorNode* self) {
        return [xn, n, self]() {
            const double g = self->grad[0] / n;
            double* gx = xn->grad_buf();
            for (long i = 0; i < xn->size(); ++i) gx[i] += g;
        };
    });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    check_2d(table, "embedding_rows");
    const int v = table.rows(), d = table.cols();
    std::vector<double> out;
    out.reserve(ids.size() * static_cast<size_t>(d));
    for (int id : ids) {
        if (id < 0 || id >= v)
            throw index_error("embedding_rows: id " + std::to_string(id) +
                              " out of range [0, " + std::to_string(v) + ")");
        out.insert(out.end(), table.data().begin() + static_cast<long>(id) * d,
                   table.data().begin() + static_cast<long>(id + 1) * d);
    }
    auto node = new_node({static_cast<int>(ids.size()), d}, std::move(out));
    auto tn = table.node();
    return finish(node, {tn}, [tn, ids, d](TensorNode* self) {
        return [tn, ids, d, self]() {
            double* gt = tn->grad_buf();
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    gt[static_cast<size_t>(ids[i]) * d + j] +=
                        self->grad[i * static_cast<size_t>(d) + j];
        };
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const int n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k)
        throw dimension_error("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(n) * m);
    kern::matmul_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
    auto node = new_node({n, m}, std::move(out));
    auto an = a.node();
    auto bn = b.node();
    return finish(node, {an, bn}, [an, bn, n, k, m](TensorNode* self) {
        return [an, bn, n, k, m, self]() {
            const double* g = self->grad.data();
            if (an->requires_grad)  // da += g * b^T
                kern::matmul_nt_acc(g, bn->data.data(), an->grad_buf(), n, m, k);
            if (bn->requires_grad)  // db += a^T * g
                kern::matmul_tn_acc(an->data.data(), g, bn->grad_buf(), k, n, m);
        };
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul_nt");
    check_2d(b, "matmul_nt");
    const int n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k)
        throw dimension_error("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()) + "^T");
    std::vector<double> out(static_cast<size_t>(n) * m);
    kern::matmul_nt(a.data().data(), b.data().data(), out.data(), n, k, m);
    auto node = new_node({n, m}, std::move(out));
    auto an = a.node();
    auto bn = b.node();
    return finish(node, {an, bn}, [an, bn, n, k, m](TensorNode* self) {
        return [an, bn, n, k, m, self]() {
            const double* g = self->grad.data();
            if (an->requires_grad)  // da += g * b
                kern::matmul_nn_acc(g, bn->data.data(), an->grad_buf(), n, m, k);
            if (bn->requires_grad)  // db += g^T * a
                kern::matmul_tn_acc(g, an->data.data(), bn->grad_buf(), m, n, k);
        };
    });
}

namespace {

Tensor softmax_rows_impl(const Tensor& x, std::vector<int> limits) {
    check_2d(x, "softmax");
    const int n = x.rows(), m = x.cols();
    std::vector<double> out(static_cast<size_t>(x.size()));
    kern::softmax_rows(x.data().data(), out.data(), n, m,
                       limits.empty() ? nullptr : limits.data());
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, n, m, limits](TensorNode* self) {
        return [xn, n, m, limits, self]() {
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i) {
                const int valid = limits.empty() ? m : limits[static_cast<size_t>(i)];
                const double* y = self->data.data() + static_cast<long>(i) * m;
                const double* g = self->grad.data() + static_cast<long>(i) * m;
                double dot = 0.0;
                for (int j = 0; j < valid; ++j) dot += g[j] * y[j];
                double* gi = gx + static_cast<long>(i) * m;
                for (int j = 0; j < valid; ++j) gi[j] += (g[j] - dot) * y[j];
            }
        };
    });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_rows_impl(x, {}); }

Tensor softmax_rows_causal(const Tensor& x, int offset) {
    check_2d(x, "softmax");
    const int n = x.rows(), m = x.cols();
    std::vector<int> limits(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        limits[static_cast<size_t>(i)] = std::min(m, i + 1 + offset);
    for (int i = 0; i < n; ++i)
        if (limits[static_cast<size_t>(i)] <= 0)
            throw contract_error("softmax_rows_causal: row " + std::to_string(i) +
                                 " has no visible keys");
    return softmax_rows_impl(x, std::move(limits));
}

Tensor softmax(const Tensor& x, int axis) {
    check_2d(x, "softmax");
    if (axis == 1 || axis == -1) return softmax_rows(x);
    if (axis == 0) return transpose(softmax_rows(transpose(x)));
    throw contract_error("softmax: axis must be 0 or 1 for 2-D tensors");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_2d(x, "layer_norm");
    const int n = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d)
        throw dimension_error("layer_norm: gain/bias must have width " + std::to_string(d));
    std::vector<double> out(static_cast<size_t>(x.size()));
    auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    kern::layer_norm_rows(x.data().data(), gain.data().data(), bias.data().data(),
                          out.data(), mean->data(), istd->data(), n, d, eps);
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    return finish(node, {xn, gn, bn}, [xn, gn, bn, n, d, mean, istd](TensorNode* self) {
        return [xn, gn, bn, n, d, mean, istd, self]() {
            const double* g = self->grad.data();
            for (int i = 0; i < n; ++i) {
                const double mu = (*mean)[static_cast<size_t>(i)];
                const double is = (*istd)[static_cast<size_t>(i)];
                const double* xi = xn->data.data() + static_cast<long>(i) * d;
                const double* gi = g + static_cast<long>(i) * d;
                if (bn->requires_grad) {
                    double* gb = bn->grad_buf();
                    for (int j = 0; j < d; ++j) gb[j] += gi[j];
                }
                if (gn->requires_grad) {
                    double* gg = gn->grad_buf();
                    for (int j = 0; j < d; ++j) gg[j] += gi[j] * ((xi[j] - mu) * is);
                }
                if (xn->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxhat = gi[j] * gn->data[static_cast<size_t>(j)];
                        const double xhat = (xi[j] - mu) * is;
                        m1 += dxhat;
                        m2 += dxhat * xhat;
                    }
                    m1 /= d;
                    m2 /= d;
                    double* gx = xn->grad_buf() + static_cast<long>(i) * d;
                    for (int j = 0; j < d; ++j) {
                        const double dxhat = gi[j] * gn->data[static_cast<size_t>(j)];
                        const double xhat = (xi[j] - mu) * is;
                        gx[j] += is * (dxhat - m1 - xhat * m2);
                    }
                }
            }
        };
    });
}

Tensor l2_normalize_rows(const Tensor& x) {
    check_2d(x, "l2_normalize_rows");
    const int n = x.rows(), d = x.cols();
    std::vector<double> out(static_cast<size_t>(x.size()));
    std::vector<double> norms(static_cast<size_t>(n));
    const auto xd = x.data();
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = xd[static_cast<size_t>(i) * d + j];
            s += v * v;
        }
        const double nm = std::sqrt(s);
        if (nm == 0.0)
            throw contract_error("l2_normalize_rows: row " + std::to_string(i) +
                                 " has zero norm");
        norms[static_cast<size_t>(i)] = nm;
        for (int j = 0; j < d; ++j)
            out[static_cast<size_t>(i) * d + j] = xd[static_cast<size_t>(i) * d + j] / nm;
    }
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    return finish(node, {xn}, [xn, n, d, norms](TensorNode* self) {
        return [xn, n, d, norms, self]() {
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i) {
                const double* y = self->data.data() + static_cast<long>(i) * d;
                const double* g = self->grad.data() + static_cast<long>(i) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += g[j] * y[j];
                const double inv = 1.0 / norms[static_cast<size_t>(i)];
                for (int j = 0; j < d; ++j)
                    gx[static_cast<size_t>(i) * d + j] += (g[j] - dot * y[j]) * inv;
            }
        };
    });
}

Tensor div_by_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw contract_error("div_by_scalar: divisor must be scalar");
    const double sv = s[0];
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v /= sv;
    auto node = new_node(x.shape(), std::move(out));
    auto xn = x.node();
    auto sn = s.node();
    return finish(node, {xn, sn}, [xn, sn, sv](TensorNode* self) {
        return [xn, sn, sv, self]() {
            const double* g = self->grad.data();
            if (xn->requires_grad) {
                double* gx = xn->grad_buf();
                for (long i = 0; i < self->size(); ++i) gx[i] += g[i] / sv;
            }
            if (sn->requires_grad) {
                double acc = 0.0;
                for (long i = 0; i < self->size(); ++i)
                    acc += g[i] * self->data[static_cast<size_t>(i)];
                sn->grad_buf()[0] -= acc / sv;
            }
        };
    });
}

Tensor exp_clamped(const Tensor& log_v, double lo, double hi) {
    if (log_v.size() != 1) throw contract_error("exp_clamped: expected scalar");
    const double raw = std::exp(log_v[0]);
    const double v = std::clamp(raw, lo, hi);
    auto node = new_node({1}, {v});
    auto xn = log_v.node();
    const bool inside = raw > lo && raw < hi;
    return finish(node, {xn}, [xn, inside, v](TensorNode* self) {
        return [xn, inside, v, self]() {
            if (inside) xn->grad_buf()[0] += self->grad[0] * v;
        };
    });
}

Tensor gated_residual_add(const Tensor& y, const Tensor& z, const Tensor& alpha) {
    if (y.shape() != z.shape())
        throw dimension_error("gated_residual_add: shape mismatch " + shape_str(y.shape()) +
                              " vs " + shape_str(z.shape()));
    if (alpha.size() != 1) throw contract_error("gated_residual_add: gate must be scalar");
    const double a = alpha[0];
    const double gate = std::tanh(a);
    std::vector<double> out(y.data().begin(), y.data().end());
    if (gate != 0.0) {
        const auto zd = z.data();
        for (size_t i = 0; i < out.size(); ++i) out[i] += gate * zd[i];
    }
    auto node = new_node(y.shape(), std::move(out));
    auto yn = y.node();
    auto zn = z.node();
    auto an = alpha.node();
    return finish(node, {yn, zn, an}, [yn, zn, an, gate](TensorNode* self) {
        return [yn, zn, an, gate, self]() {
            const double* g = self->grad.data();
            const long n = self->size();
            if (yn->requires_grad) {
                double* gy = yn->grad_buf();
                for (long i = 0; i < n; ++i) gy[i] += g[i];
            }
            if (zn->requires_grad && gate != 0.0) {
                double* gz = zn->grad_buf();
                for (long i = 0; i < n; ++i) gz[i] += gate * g[i];
            }
            if (an->requires_grad) {
                double dot = 0.0;
                for (long i = 0; i < n; ++i) dot += g[i] * zn->data[static_cast<size_t>(i)];
                an->grad_buf()[0] += dot * (1.0 - gate * gate);
            }
        };
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, Reduction red) {
    check_2d(logits, "cross_entropy");
    const int n = logits.rows(), k = logits.cols();
    if (static_cast<int>(targets.size()) != n)
        throw contract_error("cross_entropy: expected " + std::to_string(n) + " targets, got " +
                             std::to_string(targets.size()));
    for (int t : targets)
        if (t < 0 || t >= k)
            throw index_error("cross_entropy: target " + std::to_string(t) +
                              " out of range [0, " + std::to_string(k) + ")");
    const auto ld = logits.data();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = ld.data() + static_cast<long>(i) * k;
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (int j = 0; j < k; ++j) se += std::exp(row[j] - mx);
        total += (mx + std::log(se)) - row[targets[static_cast<size_t>(i)]];
    }
    const double loss = red == Reduction::mean ? total / n : total;
    auto node = new_node({1}, {loss});
    auto xn = logits.node();
    return finish(node, {xn}, [xn, targets, n, k, red](TensorNode* self) {
        return [xn, targets, n, k, red, self]() {
            const double gscale = self->grad[0] * (red == Reduction::mean ? 1.0 / n : 1.0);
            double* gx = xn->grad_buf();
            for (int i = 0; i < n; ++i) {
                const double* row = xn->data.data() + static_cast<long>(i) * k;
                double mx = row[0];
                for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                double se = 0.0;
                for (int j = 0; j < k; ++j) se += std::exp(row[j] - mx);
                double* gi = gx + static_cast<long>(i) * k;
                for (int j = 0; j < k; ++j) {
                    double p = std::exp(row[j] - mx) / se;
                    if (j == targets[static_cast<size_t>(i)]) p -= 1.0;
                    gi[j] += gscale * p;
                }
            }
        };
    });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
    const long n = logits.size();
    if (static_cast<long>(labels.size()) != n)
        throw contract_error("bce_with_logits: label count mismatch");
    const auto xd = logits.data();
    double total = 0.0;
    for (long i = 0; i < n; ++i) {
        const double x = xd[static_cast<size_t>(i)];
        const double y = labels[static_cast<size_t>(i)];
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    auto node = new_node({1}, {total / n});
    auto xn = logits.node();
    return finish(node, {xn}, [xn, labels, n](TensorNode* self) {
        return [xn, labels, n, self]() {
            const double gscale = self->grad[0] / n;
            double* gx = xn->grad_buf();
            for (long i = 0; i < n; ++i) {
                const double x = xn->data[static_cast<size_t>(i)];
                const double sig = 1.0 / (1.0 + std::exp(-x));
                gx[i] += gscale * (sig - labels[static_cast<size_t>(i)]);
            }
        };
    });
}

Tensor conv2d(const Tensor& image, const Tensor& kernel, const Tensor& bias, kern::Act act) {
    if (image.ndim() != 3)
        throw dimension_error("conv2d: image must be [H x W x C], got " +
                              shape_str(image.shape()));
    std::vector<int> ks = kernel.shape();
    int f = 1;
    if (ks.size() == 4) {
        f = ks[0];
        ks.erase(ks.begin());
    } else if (ks.size() != 3) {
        throw dimension_error("conv2d: kernel must be [k x k x C] or [F x k x k x C], got " +
                              shape_str(kernel.shape()));
    }
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const int k = ks[0];
    if (ks[1] != k || ks[2] != c)
        throw dimension_error("conv2d: kernel " + shape_str(kernel.shape()) +
                              " incompatible with image " + shape_str(image.shape()));
    if (k > h || k > w)
        throw dimension_error("conv2d: kernel size " + std::to_string(k) +
                              " exceeds image " + shape_str(image.shape()));
    if (bias.size() != f)
        throw dimension_error("conv2d: bias must have one entry per filter");
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> out(static_cast<size_t>(oh) * ow * f);
    kern::conv2d_valid(image.data().data(), kernel.data().data(), bias.data().data(),
                       out.data(), h, w, c, f, k, act);
    // pre-activations stashed for the backward pass
    auto pre = std::make_shared<std::vector<double>>();
    auto imn = image.node();
    auto kn = kernel.node();
    auto bn = bias.node();
    if (wants_grad({imn, kn, bn})) {
        pre->resize(out.size());
        kern::conv2d_valid(image.data().data(), kernel.data().data(), bias.data().data(),
                           pre->data(), h, w, c, f, k, kern::Act::identity);
    }
    auto node = new_node({oh, ow, f}, std::move(out));
    return finish(node, {imn, kn, bn}, [=](TensorNode* self) {
        return [=]() {
            const double* g = self->grad.data();
            std::vector<double> dz(pre->size());
            for (size_t i = 0; i < dz.size(); ++i)
                dz[i] = g[i] * kern::act_grad(act, (*pre)[i]);
            if (bn->requires_grad) {
                double* gb = bn->grad_buf();
                for (int p = 0; p < oh * ow; ++p)
                    for (int fi = 0; fi < f; ++fi)
                        gb[fi] += dz[static_cast<size_t>(p) * f + fi];
            }
            if (kn->requires_grad) {
                double* gk = kn->grad_buf();
                for (int fi = 0; fi < f; ++fi)
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v)
                            for (int ch = 0; ch < c; ++ch) {
                                double s = 0.0;
                                for (int oi = 0; oi < oh; ++oi)
                                    for (int oj = 0; oj < ow; ++oj)
                                        s += dz[(static_cast<size_t>(oi) * ow + oj) * f + fi] *
                                             imn->data[(static_cast<size_t>(oi + u) * w + oj + v) * c + ch];
                                gk[((static_cast<size_t>(fi) * k + u) * k + v) * c + ch] += s;
                            }
            }
            if (imn->requires_grad) {
                double* gi = imn->grad_buf();
                for (int oi = 0; oi < oh; ++oi)
                    for (int oj = 0; oj < ow; ++oj)
                        for (int fi = 0; fi < f; ++fi) {
                            const double dzv = dz[(static_cast<size_t>(oi) * ow + oj) * f + fi];
                            if (dzv == 0.0) continue;
                            for (int u = 0; u < k; ++u)
                                for (int v = 0; v < k; ++v)
                                    for (int ch = 0; ch < c; ++ch)
                                        gi[(static_cast<size_t>(oi + u) * w + oj + v) * c + ch] +=
                                            dzv * kn->data[((static_cast<size_t>(fi) * k + u) * k + v) * c + ch];
                        }
            }
        };
    });
}

bool all_finite(const Tensor& x) {
    for (double v : x.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace vlmforge::core
