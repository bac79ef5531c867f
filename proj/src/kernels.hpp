#pragma once

#include <cstddef>
#include <vector>

namespace flowrl::kernels {

// C[rows,n] += A[rows,k] * B[k,n], i-k-j order so the inner loop streams.
inline void gemm_acc(const double* A, std::size_t rows, std::size_t k, const double* B,
                     std::size_t n, double* C) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

inline void fill_rows(double* Y, std::size_t rows, std::size_t n, const double* bias) {
    for (std::size_t i = 0; i < rows; ++i) {
        double* y = Y + i * n;
        for (std::size_t j = 0; j < n; ++j) y[j] = bias[j];
    }
}

// W [out,in] -> scratch [in,out]; scratch reused across calls per thread.
inline const double* transposed(const double* W, std::size_t out, std::size_t in) {
    thread_local std::vector<double> scratch;
    scratch.resize(in * out);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t k = 0; k < in; ++k) scratch[k * out + o] = W[o * in + k];
    return scratch.data();
}

// dW[o,k] += sum_i dY[i,o] * X[i,k]
inline void outer_acc(const double* dY, const double* X, std::size_t rows, std::size_t out,
                      std::size_t in, double* dW) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dy = dY + i * out;
        const double* x = X + i * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double dv = dy[o];
            if (dv == 0.0) continue;
            double* w = dW + o * in;
            for (std::size_t k = 0; k < in; ++k) w[k] += dv * x[k];
        }
    }
}

inline void colsum_acc(const double* dY, std::size_t rows, std::size_t out, double* db) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dy = dY + i * out;
        for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
    }
}

}  // namespace flowrl::kernels
