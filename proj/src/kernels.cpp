#include "vlmforge/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vlmforge::kern {

namespace {

// Shared per-element bodies. The parallel and serial entry points both call
// these, so the arithmetic order per output element is identical and the
// results match bitwise.

inline void matmul_nn_row(const double* a, const double* b, double* out,
                          int k, int m, int i) {
    const double* ai = a + static_cast<long>(i) * k;
    double* oi = out + static_cast<long>(i) * m;
    for (int j = 0; j < m; ++j) oi[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = b + static_cast<long>(p) * m;
        for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* out,
                          int k, int m, int i) {
    const double* ai = a + static_cast<long>(i) * k;
    double* oi = out + static_cast<long>(i) * m;
    for (int j = 0; j < m; ++j) {
        const double* bj = b + static_cast<long>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
        oi[j] = s;
    }
}

inline void softmax_row(const double* x, double* y, int cols, int valid, int i) {
    const double* xi = x + static_cast<long>(i) * cols;
    double* yi = y + static_cast<long>(i) * cols;
    double mx = xi[0];
    for (int j = 1; j < valid; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < valid; ++j) {
        yi[j] = std::exp(xi[j] - mx);
        sum += yi[j];
    }
    for (int j = 0; j < valid; ++j) yi[j] /= sum;
    for (int j = valid; j < cols; ++j) yi[j] = 0.0;
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias,
                           double* y, double* mean, double* inv_std,
                           int cols, double eps, int i) {
    const double* xi = x + static_cast<long>(i) * cols;
    double* yi = y + static_cast<long>(i) * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += xi[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
        const double d = xi[j] - mu;
        var += d * d;
    }
    var /= cols;
    const double istd = 1.0 / std::sqrt(var + eps);
    if (mean) mean[i] = mu;
    if (inv_std) inv_std[i] = istd;
    for (int j = 0; j < cols; ++j) yi[j] = gain[j] * ((xi[j] - mu) * istd) + bias[j];
}

inline void conv2d_pixel(const double* img, const double* kernel, const double* bias,
                         double* out, int W, int C, int F, int ksz, Act act,
                         int ow, int oi, int oj) {
    double* op = out + (static_cast<long>(oi) * ow + oj) * F;
    for (int f = 0; f < F; ++f) {
        const double* kf = kernel + static_cast<long>(f) * ksz * ksz * C;
        double s = 0.0;
        for (int u = 0; u < ksz; ++u) {
            const double* irow = img + (static_cast<long>(oi + u) * W + oj) * C;
            const double* krow = kf + static_cast<long>(u) * ksz * C;
            for (int v = 0; v < ksz * C; ++v) s += krow[v] * irow[v];
        }
        op[f] = apply_act(act, s + bias[f]);
    }
}

constexpr long kParallelCutoff = 16 * 1024;  // flops below this run serially

}  // namespace

double apply_act(Act a, double x) {
    switch (a) {
        case Act::identity: return x;
        case Act::relu: return x > 0.0 ? x : 0.0;
        case Act::tanh_act: return std::tanh(x);
        case Act::gelu: {
            const double c = 0.7978845608028654;  // sqrt(2/pi)
            const double t = std::tanh(c * (x + 0.044715 * x * x * x));
            return 0.5 * x * (1.0 + t);
        }
    }
    return x;
}

double act_grad(Act a, double x) {
    switch (a) {
        case Act::identity: return 1.0;
        case Act::relu: return x > 0.0 ? 1.0 : 0.0;
        case Act::tanh_act: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Act::gelu: {
            const double c = 0.7978845608028654;
            const double u = c * (x + 0.044715 * x * x * x);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        }
    }
    return 1.0;
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn(const double* a, const double* b, double* out, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) matmul_nn_row(a, b, out, k, m, i);
}

void matmul_nt(const double* a, const double* b, double* out, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) matmul_nt_row(a, b, out, k, m, i);
}

void matmul_tn(const double* a, const double* b, double* out, int n, int k, int m) {
    // out[n x m] = a[k x n]^T * b[k x m]
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) {
        double* oi = out + static_cast<long>(i) * m;
        for (int j = 0; j < m; ++j) oi[j] = 0.0;
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<long>(p) * n + i];
            const double* bp = b + static_cast<long>(p) * m;
            for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nn_acc(const double* a, const double* b, double* out, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<long>(i) * k;
        double* oi = out + static_cast<long>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<long>(p) * m;
            for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* out, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<long>(i) * k;
        double* oi = out + static_cast<long>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* bj = b + static_cast<long>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            oi[j] += s;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* out, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < n; ++i) {
        double* oi = out + static_cast<long>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<long>(p) * n + i];
            const double* bp = b + static_cast<long>(p) * m;
            for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
    }
}

void softmax_rows(const double* x, double* y, int rows, int cols, const int* limit) {
    const long work = static_cast<long>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < rows; ++i) {
        const int valid = limit ? limit[i] : cols;
        softmax_row(x, y, cols, valid, i);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int rows, int cols, double eps) {
    const long work = static_cast<long>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int i = 0; i < rows; ++i)
        layer_norm_row(x, gain, bias, y, mean, inv_std, cols, eps, i);
}

void conv2d_valid(const double* img, const double* kernel, const double* bias,
                  double* out, int H, int W, int C, int F, int ksz, Act act) {
    const int oh = H - ksz + 1;
    const int ow = W - ksz + 1;
    const long work = static_cast<long>(oh) * ow * F * ksz * ksz * C;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
    for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj)
            conv2d_pixel(img, kernel, bias, out, W, C, F, ksz, act, ow, oi, oj);
}

void gelu_forward(const double* x, double* y, int n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
    for (int i = 0; i < n; ++i) y[i] = apply_act(Act::gelu, x[i]);
}

namespace serial {

void matmul_nn(const double* a, const double* b, double* out, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_nn_row(a, b, out, k, m, i);
}

void matmul_nt(const double* a, const double* b, double* out, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_nt_row(a, b, out, k, m, i);
}

void matmul_tn(const double* a, const double* b, double* out, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        double* oi = out + static_cast<long>(i) * m;
        for (int j = 0; j < m; ++j) oi[j] = 0.0;
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<long>(p) * n + i];
            const double* bp = b + static_cast<long>(p) * m;
            for (int j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
    }
}

void softmax_rows(const double* x, double* y, int rows, int cols, const int* limit) {
    for (int i = 0; i < rows; ++i) {
        const int valid = limit ? limit[i] : cols;
        softmax_row(x, y, cols, valid, i);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int rows, int cols, double eps) {
    for (int i = 0; i < rows; ++i)
        layer_norm_row(x, gain, bias, y, mean, inv_std, cols, eps, i);
}

void conv2d_valid(const double* img, const double* kernel, const double* bias,
                  double* out, int H, int W, int C, int F, int ksz, Act act) {
    const int oh = H - ksz + 1;
    const int ow = W - ksz + 1;
    for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj)
            conv2d_pixel(img, kernel, bias, out, W, C, F, ksz, act, ow, oi, oj);
}

void gelu_forward(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = apply_act(Act::gelu, x[i]);
}

}  // namespace serial

}  // namespace vlmforge::kern
