#pragma once

#include <cstdint>

#include "n2f/common.hpp"

// Raw dense kernels shared by the convolution/pooling graph ops. All buffers
// are row-major and contiguous; callers own shape checking. The inner loops
// run over the last (contiguous) dimension so the compiler can vectorize.

namespace n2f {

// C[M,N] += A[M,K] · B[K,N]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        T* __restrict__ crow = c + i * N;
        const T* arow = a + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const T alpha = arow[k];
            if (alpha == T(0)) continue;
            const T* __restrict__ brow = b + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += alpha * brow[j];
        }
    }
}

// C[M,N] += Aᵀ·B where A is stored [K,M]: C[m,n] += Σ_k A[k,m]·B[k,n]
template <typename T>
void gemm_atb_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N) {
    for (int64_t k = 0; k < K; ++k) {
        const T* arow = a + k * M;
        const T* __restrict__ brow = b + k * N;
        for (int64_t m = 0; m < M; ++m) {
            const T alpha = arow[m];
            if (alpha == T(0)) continue;
            T* __restrict__ crow = c + m * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += alpha * brow[j];
        }
    }
}

// C[M,N] += A·Bᵀ where B is stored [N,K]: C[m,n] += dot(A[m,:], B[n,:])
template <typename T>
void gemm_abt_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        const T* __restrict__ arow = a + i * K;
        T* crow = c + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const T* __restrict__ brow = b + j * K;
            T acc = T(0);
            for (int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

inline int64_t conv_out_len(int64_t L, int64_t K, int64_t stride, int64_t pad) {
    return (L + 2 * pad - K) / stride + 1;
}
inline int64_t conv_transpose_out_len(int64_t L, int64_t K, int64_t stride, int64_t pad) {
    return (L - 1) * stride - 2 * pad + K;
}

// Unfold one [C,L] sample into col[C·K, Lc] with col[(c·K+k), t] = x[c, t·stride+k−pad]
// (zero outside bounds).
template <typename T>
void im2col_1d(const T* x, int64_t C, int64_t L, int64_t K, int64_t stride, int64_t pad,
               int64_t Lc, T* col) {
    for (int64_t c = 0; c < C; ++c) {
        const T* xc = x + c * L;
        for (int64_t k = 0; k < K; ++k) {
            T* __restrict__ row = col + (c * K + k) * Lc;
            const int64_t off = k - pad;
            for (int64_t t = 0; t < Lc; ++t) {
                const int64_t j = t * stride + off;
                row[t] = (j >= 0 && j < L) ? xc[j] : T(0);
            }
        }
    }
}

// Adjoint of im2col_1d: x[c, t·stride+k−pad] += col[(c·K+k), t] for in-bounds taps.
template <typename T>
void col2im_acc_1d(const T* col, int64_t C, int64_t L, int64_t K, int64_t stride, int64_t pad,
                   int64_t Lc, T* x) {
    for (int64_t c = 0; c < C; ++c) {
        T* xc = x + c * L;
        for (int64_t k = 0; k < K; ++k) {
            const T* __restrict__ row = col + (c * K + k) * Lc;
            const int64_t off = k - pad;
            for (int64_t t = 0; t < Lc; ++t) {
                const int64_t j = t * stride + off;
                if (j >= 0 && j < L) xc[j] += row[t];
            }
        }
    }
}

// Max pooling over one [C,L] sample; records the argmax (first index on ties)
// so the backward pass can route gradients deterministically.
template <typename T>
void maxpool_fwd_1d(const T* x, int64_t C, int64_t L, int64_t window, int64_t stride,
                    int64_t Lo, T* out, int32_t* argmax) {
    for (int64_t c = 0; c < C; ++c) {
        const T* xc = x + c * L;
        T* oc = out + c * Lo;
        int32_t* ac = argmax + c * Lo;
        for (int64_t t = 0; t < Lo; ++t) {
            const int64_t start = t * stride;
            T best = xc[start];
            int64_t best_i = start;
            for (int64_t k = 1; k < window; ++k) {
                const T v = xc[start + k];
                if (v > best) {
                    best = v;
                    best_i = start + k;
                }
            }
            oc[t] = best;
            ac[t] = static_cast<int32_t>(best_i);
        }
    }
}

}  // namespace n2f
