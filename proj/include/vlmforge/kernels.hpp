#pragma once

// Low-level numeric kernels. The hot inner loops of the workbench live here,
// parallelized with OpenMP over independent output elements so results are
// bitwise identical for any thread count. vlmforge::kern::serial holds the
// plain-loop reference implementations used by the tests and the benchmark.

namespace vlmforge::kern {

enum class Act { identity, relu, tanh_act, gelu };

double apply_act(Act a, double x);
double act_grad(Act a, double x);  // derivative w.r.t. pre-activation x

void set_threads(int n);  // n <= 0 leaves the OpenMP default untouched
int max_threads();

// out[n x m] = a[n x k] * b[k x m]
void matmul_nn(const double* a, const double* b, double* out, int n, int k, int m);
// out[n x m] = a[n x k] * b[m x k]^T
void matmul_nt(const double* a, const double* b, double* out, int n, int k, int m);
// out[n x m] = a[k x n]^T * b[k x m]
void matmul_tn(const double* a, const double* b, double* out, int n, int k, int m);

// accumulating variants (out += ...), used by backward passes
void matmul_nn_acc(const double* a, const double* b, double* out, int n, int k, int m);
void matmul_nt_acc(const double* a, const double* b, double* out, int n, int k, int m);
void matmul_tn_acc(const double* a, const double* b, double* out, int n, int k, int m);

// Row softmax with max-subtraction. When limit != nullptr, row i only sees
// its first limit[i] columns; the remaining outputs are exactly 0.
void softmax_rows(const double* x, double* y, int rows, int cols, const int* limit = nullptr);

// y = gain * (x - mean) / sqrt(var + eps) + bias, per row.
// mean/inv_std (size rows) are stashed for the backward pass; may be nullptr.
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int rows, int cols, double eps);

// Valid-mode convolution, stride 1. img [H x W x C] row-major with channel
// fastest, bank of F kernels each [ksz x ksz x C], bias per filter.
// out [(H-ksz+1) x (W-ksz+1) x F].
void conv2d_valid(const double* img, const double* kernel, const double* bias,
                  double* out, int H, int W, int C, int F, int ksz, Act act);

void gelu_forward(const double* x, double* y, int n);

namespace serial {
void matmul_nn(const double* a, const double* b, double* out, int n, int k, int m);
void matmul_nt(const double* a, const double* b, double* out, int n, int k, int m);
void matmul_tn(const double* a, const double* b, double* out, int n, int k, int m);
void softmax_rows(const double* x, double* y, int rows, int cols, const int* limit = nullptr);
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* inv_std,
                     int rows, int cols, double eps);
void conv2d_valid(const double* img, const double* kernel, const double* bias,
                  double* out, int H, int W, int C, int F, int ksz, Act act);
void gelu_forward(const double* x, double* y, int n);
}  // namespace serial

}  // namespace vlmforge::kern
