#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "n2f/graph.hpp"
#include "n2f/kernels.hpp"

// Differentiable graph operations. Each op runs its forward pass immediately,
// records an adjoint closure on the result node, and returns the result node
// id. Closures capture the graph pointer plus node ids (never raw node
// references — the node vector may reallocate as the graph grows).

namespace n2f {

namespace detail {

// View a rank-2 [C,L] or rank-3 [N,C,L] tensor as batched dims.
template <typename T>
inline void batched_dims(const TensorT<T>& t, int64_t& n, int64_t& c, int64_t& l) {
    if (t.rank() == 3) {
        n = t.dim(0);
        c = t.dim(1);
        l = t.dim(2);
    } else if (t.rank() == 2) {
        n = 1;
        c = t.dim(0);
        l = t.dim(1);
    } else {
        N2F_CHECK(false, "expected rank 2 or 3 tensor, got rank %d", t.rank());
    }
}

template <typename T>
inline std::vector<int64_t> like_shape(const TensorT<T>& src, int64_t c_new, int64_t l_new) {
    if (src.rank() == 3) return {src.dim(0), c_new, l_new};
    return {c_new, l_new};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

template <typename T>
int reshape(GraphT<T>& g, int x, std::vector<int64_t> shape) {
    const TensorT<T>& xv = g.val(x);
    TensorT<T> out(shape, xv.vec());
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x]() {
            const T* __restrict__ go = g.grad(id).data();
            T* __restrict__ gx = g.grad(x).data();
            const int64_t m = g.val(x).volume();
            for (int64_t i = 0; i < m; ++i) gx[i] += go[i];
        });
    }
    return id;
}

// [N,C,L] -> [N, C*L]
template <typename T>
int flatten_samples(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() >= 2, "flatten_samples expects rank >= 2");
    int64_t rest = 1;
    for (int d = 1; d < xv.rank(); ++d) rest *= xv.dim(d);
    return reshape(g, x, {xv.dim(0), rest});
}

// Channelwise concatenation: [N,Ca,L] ++ [N,Cb,L] -> [N,Ca+Cb,L]
template <typename T>
int concat_channels(GraphT<T>& g, int a, int b) {
    const TensorT<T>& av = g.val(a);
    const TensorT<T>& bv = g.val(b);
    int64_t n1, ca, l1, n2, cb, l2;
    detail::batched_dims(av, n1, ca, l1);
    detail::batched_dims(bv, n2, cb, l2);
    N2F_CHECK(n1 == n2 && l1 == l2 && av.rank() == bv.rank(),
              "concat_channels: incompatible shapes");
    TensorT<T> out(detail::like_shape(av, ca + cb, l1));
    T* o = out.data();
    const T* pa = av.data();
    const T* pb = bv.data();
    for (int64_t n = 0; n < n1; ++n) {
        std::copy(pa + n * ca * l1, pa + (n + 1) * ca * l1, o + n * (ca + cb) * l1);
        std::copy(pb + n * cb * l1, pb + (n + 1) * cb * l1, o + n * (ca + cb) * l1 + ca * l1);
    }
    const bool rga = g.requires_grad(a), rgb = g.requires_grad(b);
    int id = g.add_node(std::move(out), rga || rgb);
    if (rga || rgb) {
        g.set_backprop(id, [&g, id, a, b, n1, ca, cb, l1, rga, rgb]() {
            const T* go = g.grad(id).data();
            for (int64_t n = 0; n < n1; ++n) {
                if (rga) {
                    T* ga = g.grad(a).data() + n * ca * l1;
                    const T* src = go + n * (ca + cb) * l1;
                    for (int64_t i = 0; i < ca * l1; ++i) ga[i] += src[i];
                }
                if (rgb) {
                    T* gb = g.grad(b).data() + n * cb * l1;
                    const T* src = go + n * (ca + cb) * l1 + ca * l1;
                    for (int64_t i = 0; i < cb * l1; ++i) gb[i] += src[i];
                }
            }
        });
    }
    return id;
}

// Column concatenation of matrices: [N,A] ++ [N,B] -> [N,A+B]
template <typename T>
int concat_cols(GraphT<T>& g, int a, int b) {
    const TensorT<T>& av = g.val(a);
    const TensorT<T>& bv = g.val(b);
    N2F_CHECK(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0),
              "concat_cols: expected [N,A],[N,B]");
    const int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    TensorT<T> out({n, ca + cb});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(av.data() + i * ca, av.data() + (i + 1) * ca, out.data() + i * (ca + cb));
        std::copy(bv.data() + i * cb, bv.data() + (i + 1) * cb, out.data() + i * (ca + cb) + ca);
    }
    const bool rga = g.requires_grad(a), rgb = g.requires_grad(b);
    int id = g.add_node(std::move(out), rga || rgb);
    if (rga || rgb) {
        g.set_backprop(id, [&g, id, a, b, n, ca, cb, rga, rgb]() {
            const T* go = g.grad(id).data();
            for (int64_t i = 0; i < n; ++i) {
                if (rga) {
                    T* ga = g.grad(a).data() + i * ca;
                    for (int64_t j = 0; j < ca; ++j) ga[j] += go[i * (ca + cb) + j];
                }
                if (rgb) {
                    T* gb = g.grad(b).data() + i * cb;
                    for (int64_t j = 0; j < cb; ++j) gb[j] += go[i * (ca + cb) + ca + j];
                }
            }
        });
    }
    return id;
}

// Column slice of a matrix: [N,M] -> [N,len] starting at column `start`.
template <typename T>
int slice_cols(GraphT<T>& g, int x, int64_t start, int64_t len) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() == 2, "slice_cols expects [N,M]");
    const int64_t n = xv.dim(0), m = xv.dim(1);
    N2F_CHECK(start >= 0 && len >= 1 && start + len <= m, "slice_cols: bad range [%lld,+%lld) of %lld",
              (long long)start, (long long)len, (long long)m);
    TensorT<T> out({n, len});
    for (int64_t i = 0; i < n; ++i)
        std::copy(xv.data() + i * m + start, xv.data() + i * m + start + len, out.data() + i * len);
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, m, start, len]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < len; ++j) gx[i * m + start + j] += go[i * len + j];
        });
    }
    return id;
}

// Time-step selection: [N,T,F] -> [N,F] at step t.
template <typename T>
int select_time(GraphT<T>& g, int x, int64_t t) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() == 3, "select_time expects [N,T,F]");
    const int64_t n = xv.dim(0), steps = xv.dim(1), f = xv.dim(2);
    N2F_CHECK(t >= 0 && t < steps, "select_time: step %lld out of %lld", (long long)t,
              (long long)steps);
    TensorT<T> out({n, f});
    for (int64_t i = 0; i < n; ++i)
        std::copy(xv.data() + (i * steps + t) * f, xv.data() + (i * steps + t + 1) * f,
                  out.data() + i * f);
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, steps, f, t]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < f; ++j) gx[(i * steps + t) * f + j] += go[i * f + j];
        });
    }
    return id;
}

// Stack T step outputs [N,F] into a sequence [N,T,F].
template <typename T>
int stack_time(GraphT<T>& g, const std::vector<int>& steps) {
    N2F_CHECK(!steps.empty(), "stack_time: empty input list");
    const TensorT<T>& first = g.val(steps[0]);
    N2F_CHECK(first.rank() == 2, "stack_time expects [N,F] inputs");
    const int64_t n = first.dim(0), f = first.dim(1);
    const int64_t tt = static_cast<int64_t>(steps.size());
    TensorT<T> out({n, tt, f});
    bool rg = false;
    for (int64_t t = 0; t < tt; ++t) {
        const TensorT<T>& sv = g.val(steps[static_cast<size_t>(t)]);
        N2F_CHECK(sv.rank() == 2 && sv.dim(0) == n && sv.dim(1) == f,
                  "stack_time: inconsistent step shapes");
        rg = rg || g.requires_grad(steps[static_cast<size_t>(t)]);
        for (int64_t i = 0; i < n; ++i)
            std::copy(sv.data() + i * f, sv.data() + (i + 1) * f, out.data() + (i * tt + t) * f);
    }
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        auto ids = std::make_shared<std::vector<int>>(steps);
        g.set_backprop(id, [&g, id, ids, n, tt, f]() {
            const T* go = g.grad(id).data();
            for (int64_t t = 0; t < tt; ++t) {
                const int sid = (*ids)[static_cast<size_t>(t)];
                if (!g.requires_grad(sid)) continue;
                T* gs = g.grad(sid).data();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < f; ++j) gs[i * f + j] += go[(i * tt + t) * f + j];
            }
        });
    }
    return id;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// Shared wiring for unary elementwise ops. dfun(x_i, y_i) is the local
// derivative dy/dx given input and output values.
template <typename T, typename F, typename DF>
int unary_ew(GraphT<T>& g, int x, F&& fun, DF&& dfun) {
    const TensorT<T>& xv = g.val(x);
    TensorT<T> out(xv.shape());
    const T* px = xv.data();
    T* po = out.data();
    const int64_t m = xv.volume();
    for (int64_t i = 0; i < m; ++i) po[i] = fun(px[i]);
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, m, dfun]() {
            const T* __restrict__ go = g.grad(id).data();
            const T* __restrict__ px2 = g.val(x).data();
            const T* __restrict__ py = g.val(id).data();
            T* __restrict__ gx = g.grad(x).data();
            for (int64_t i = 0; i < m; ++i) gx[i] += go[i] * dfun(px2[i], py[i]);
        });
    }
    return id;
}

template <typename T>
inline T stable_sigmoid(T z) {
    if (z >= T(0)) {
        return T(1) / (T(1) + std::exp(-z));
    }
    const T e = std::exp(z);
    return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
int relu(GraphT<T>& g, int x) {
    return detail::unary_ew(
        g, x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
int leaky_relu(GraphT<T>& g, int x, T slope = T(0.2)) {
    return detail::unary_ew(
        g, x, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
int sigmoid_op(GraphT<T>& g, int x) {
    return detail::unary_ew(
        g, x, [](T v) { return detail::stable_sigmoid(v); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
int tanh_op(GraphT<T>& g, int x) {
    return detail::unary_ew(
        g, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
int square(GraphT<T>& g, int x) {
    return detail::unary_ew(
        g, x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// Elementwise square root; inputs must be non-negative (callers add a small
// epsilon when differentiating through a norm).
template <typename T>
int sqrt_op(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    for (int64_t i = 0; i < xv.volume(); ++i)
        N2F_CHECK_NUM(xv.data()[i] >= T(0), "sqrt of negative value at index %lld",
                      (long long)i);
    return detail::unary_ew(
        g, x, [](T v) { return std::sqrt(v); },
        [](T, T y) { return y > T(0) ? T(1) / (T(2) * y) : T(0); });
}

template <typename T>
int scale(GraphT<T>& g, int x, T c) {
    return detail::unary_ew(
        g, x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
int add_const(GraphT<T>& g, int x, T c) {
    return detail::unary_ew(
        g, x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

namespace detail {

// Shared wiring for same-shape binary elementwise ops.
template <typename T, typename F, typename DA, typename DB>
int binary_ew(GraphT<T>& g, int a, int b, F&& fun, DA&& da, DB&& db) {
    const TensorT<T>& av = g.val(a);
    const TensorT<T>& bv = g.val(b);
    N2F_CHECK(av.same_shape(bv), "elementwise op: shape mismatch");
    TensorT<T> out(av.shape());
    const int64_t m = av.volume();
    for (int64_t i = 0; i < m; ++i) out.data()[i] = fun(av.data()[i], bv.data()[i]);
    const bool rga = g.requires_grad(a), rgb = g.requires_grad(b);
    int id = g.add_node(std::move(out), rga || rgb);
    if (rga || rgb) {
        g.set_backprop(id, [&g, id, a, b, m, rga, rgb, da, db]() {
            const T* go = g.grad(id).data();
            const T* pa = g.val(a).data();
            const T* pb = g.val(b).data();
            if (rga) {
                T* ga = g.grad(a).data();
                for (int64_t i = 0; i < m; ++i) ga[i] += go[i] * da(pa[i], pb[i]);
            }
            if (rgb) {
                T* gb = g.grad(b).data();
                for (int64_t i = 0; i < m; ++i) gb[i] += go[i] * db(pa[i], pb[i]);
            }
        });
    }
    return id;
}

}  // namespace detail

template <typename T>
int eadd(GraphT<T>& g, int a, int b) {
    return detail::binary_ew(
        g, a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
int esub(GraphT<T>& g, int a, int b) {
    return detail::binary_ew(
        g, a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
int emul(GraphT<T>& g, int a, int b) {
    return detail::binary_ew(
        g, a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

// a + alpha * b
template <typename T>
int add_scaled(GraphT<T>& g, int a, int b, T alpha) {
    return detail::binary_ew(
        g, a, b, [alpha](T x, T y) { return x + alpha * y; }, [](T, T) { return T(1); },
        [alpha](T, T) { return alpha; });
}

// Elementwise multiply by a fixed tensor; no gradient flows to the mask.
// (Used to apply piecewise-linear activation masks in hand-built adjoint
// passes, where the mask is constant by construction.)
template <typename T>
int emul_const(GraphT<T>& g, int x, TensorT<T> mask) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.same_shape(mask), "emul_const: shape mismatch");
    TensorT<T> out(xv.shape());
    const int64_t m = xv.volume();
    for (int64_t i = 0; i < m; ++i) out.data()[i] = xv.data()[i] * mask.data()[i];
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        auto mk = std::make_shared<TensorT<T>>(std::move(mask));
        g.set_backprop(id, [&g, id, x, m, mk]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            const T* pm = mk->data();
            for (int64_t i = 0; i < m; ++i) gx[i] += go[i] * pm[i];
        });
    }
    return id;
}

// Inverted-dropout. Active in Train and Sample modes: zeroes elements with
// probability p and scales survivors by 1/(1-p). Identity in Infer mode or at
// p == 0 (returns the input node unchanged).
template <typename T>
int dropout(GraphT<T>& g, int x, double p) {
    N2F_CHECK(p >= 0.0 && p < 1.0, "dropout probability must be in [0,1), got %g", p);
    if (!dropout_active(g.mode) || p == 0.0) return x;
    N2F_CHECK(g.rng != nullptr, "dropout in train/sample mode needs a graph rng");
    const TensorT<T>& xv = g.val(x);
    const int64_t m = xv.volume();
    auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (int64_t i = 0; i < m; ++i)
        (*mask)[static_cast<size_t>(i)] = (g.rng->uniform() < p) ? T(0) : keep_scale;
    TensorT<T> out(xv.shape());
    for (int64_t i = 0; i < m; ++i)
        out.data()[i] = xv.data()[i] * (*mask)[static_cast<size_t>(i)];
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, m, mask]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < m; ++i) gx[i] += go[i] * (*mask)[static_cast<size_t>(i)];
        });
    }
    return id;
}

// ---------------------------------------------------------------------------
// Reductions and softmax
// ---------------------------------------------------------------------------

template <typename T>
int reduce_mean(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    const int64_t m = xv.volume();
    T acc = T(0);
    for (int64_t i = 0; i < m; ++i) acc += xv.data()[i];
    TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(m));
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, m]() {
            const T go = g.grad(id).data()[0] / static_cast<T>(m);
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < m; ++i) gx[i] += go;
        });
    }
    return id;
}

// Sum over all non-leading dimensions: [N, ...] -> [N]
template <typename T>
int reduce_sum_rows(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() >= 2, "reduce_sum_rows expects rank >= 2");
    const int64_t n = xv.dim(0);
    const int64_t m = xv.volume() / n;
    TensorT<T> out({n});
    for (int64_t i = 0; i < n; ++i) {
        T acc = T(0);
        const T* row = xv.data() + i * m;
        for (int64_t j = 0; j < m; ++j) acc += row[j];
        out.data()[i] = acc;
    }
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, m]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) gx[i * m + j] += go[i];
        });
    }
    return id;
}

// Softmax over the last axis (rows of the flattened [rows, C] view).
template <typename T>
int softmax(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() >= 1, "softmax expects rank >= 1");
    const int64_t c = xv.dim(xv.rank() - 1);
    const int64_t rows = xv.volume() / c;
    TensorT<T> out(xv.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const T* zi = xv.data() + r * c;
        T* oi = out.data() + r * c;
        T mx = zi[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
        T denom = T(0);
        for (int64_t j = 0; j < c; ++j) {
            oi[j] = std::exp(zi[j] - mx);
            denom += oi[j];
        }
        for (int64_t j = 0; j < c; ++j) oi[j] /= denom;
    }
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, rows, c]() {
            const T* go = g.grad(id).data();
            const T* s = g.val(id).data();
            T* gx = g.grad(x).data();
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = go + r * c;
                const T* sr = s + r * c;
                T dot = T(0);
                for (int64_t j = 0; j < c; ++j) dot += gr[j] * sr[j];
                T* gxr = gx + r * c;
                for (int64_t j = 0; j < c; ++j) gxr[j] += sr[j] * (gr[j] - dot);
            }
        });
    }
    return id;
}

// ---------------------------------------------------------------------------
// Linear layers
// ---------------------------------------------------------------------------

// Affine map. trans_w == false: x[N,Fin] · w[Fin,Fout] + b -> [N,Fout].
// trans_w == true: x[N,Fout] · w[Fin,Fout]ᵀ -> [N,Fin] (no bias; used to share
// one weight tensor between a map and its transpose).
template <typename T>
int dense(GraphT<T>& g, int x, int w, int b = -1, bool trans_w = false) {
    const TensorT<T>& xv = g.val(x);
    const TensorT<T>& wv = g.val(w);
    N2F_CHECK(xv.rank() == 2 && wv.rank() == 2, "dense expects x[N,F] and w rank 2");
    const int64_t n = xv.dim(0);
    const int64_t fin = wv.dim(0), fout = wv.dim(1);
    N2F_CHECK(!trans_w || b < 0, "dense: transposed form takes no bias");
    TensorT<T> out;
    if (!trans_w) {
        N2F_CHECK(xv.dim(1) == fin, "dense: x has %lld features, w expects %lld",
                  (long long)xv.dim(1), (long long)fin);
        out = TensorT<T>({n, fout}, T(0));
        gemm_acc(xv.data(), wv.data(), out.data(), n, fin, fout);
        if (b >= 0) {
            const TensorT<T>& bv = g.val(b);
            N2F_CHECK(bv.volume() == fout, "dense: bias size mismatch");
            for (int64_t i = 0; i < n; ++i) {
                T* row = out.data() + i * fout;
                for (int64_t j = 0; j < fout; ++j) row[j] += bv.data()[j];
            }
        }
    } else {
        N2F_CHECK(xv.dim(1) == fout, "dense(trans): x has %lld features, w expects %lld",
                  (long long)xv.dim(1), (long long)fout);
        out = TensorT<T>({n, fin}, T(0));
        gemm_abt_acc(xv.data(), wv.data(), out.data(), n, fout, fin);
    }
    const bool rgx = g.requires_grad(x), rgw = g.requires_grad(w);
    const bool rgb = b >= 0 && g.requires_grad(b);
    int id = g.add_node(std::move(out), rgx || rgw || rgb);
    if (rgx || rgw || rgb) {
        g.set_backprop(id, [&g, id, x, w, b, n, fin, fout, trans_w, rgx, rgw, rgb]() {
            const T* go = g.grad(id).data();
            if (!trans_w) {
                if (rgx) gemm_abt_acc(go, g.val(w).data(), g.grad(x).data(), n, fout, fin);
                if (rgw) gemm_atb_acc(g.val(x).data(), go, g.grad(w).data(), fin, n, fout);
                if (rgb) {
                    T* gb = g.grad(b).data();
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < fout; ++j) gb[j] += go[i * fout + j];
                }
            } else {
                if (rgx) gemm_acc(go, g.val(w).data(), g.grad(x).data(), n, fin, fout);
                if (rgw) gemm_atb_acc(go, g.val(x).data(), g.grad(w).data(), fin, n, fout);
            }
        });
    }
    return id;
}

// 1-D convolution. x: [C_in,L] or [N,C_in,L]; w: [C_out,C_in,K]; optional
// bias [C_out]. out[n,o,t] = b[o] + Σ_{c,k} x[n,c,t·stride+k−pad] · w[o,c,k].
template <typename T>
int conv1d(GraphT<T>& g, int x, int w, int b, int64_t stride, int64_t pad) {
    const TensorT<T>& xv = g.val(x);
    const TensorT<T>& wv = g.val(w);
    N2F_CHECK(wv.rank() == 3, "conv1d: weights must be [C_out,C_in,K]");
    N2F_CHECK(stride >= 1 && pad >= 0, "conv1d: stride >= 1 and pad >= 0 required");
    int64_t n, cin, l;
    detail::batched_dims(xv, n, cin, l);
    const int64_t cout = wv.dim(0), k = wv.dim(2);
    N2F_CHECK(wv.dim(1) == cin, "conv1d: input has %lld channels, weights expect %lld",
              (long long)cin, (long long)wv.dim(1));
    N2F_CHECK(k >= 1, "conv1d: kernel size must be >= 1");
    const int64_t lo = conv_out_len(l, k, stride, pad);
    N2F_CHECK(lo >= 1, "conv1d: output length %lld < 1 (L=%lld K=%lld stride=%lld pad=%lld)",
              (long long)lo, (long long)l, (long long)k, (long long)stride, (long long)pad);
    TensorT<T> out(detail::like_shape(xv, cout, lo), T(0));
    if (b >= 0) {
        const TensorT<T>& bv = g.val(b);
        N2F_CHECK(bv.volume() == cout, "conv1d: bias size mismatch");
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < cout; ++o) {
                T* row = out.data() + (i * cout + o) * lo;
                const T bve = bv.data()[o];
                for (int64_t t = 0; t < lo; ++t) row[t] = bve;
            }
    }
    std::vector<T> col(static_cast<size_t>(cin * k * lo));
    for (int64_t i = 0; i < n; ++i) {
        im2col_1d(xv.data() + i * cin * l, cin, l, k, stride, pad, lo, col.data());
        gemm_acc(wv.data(), col.data(), out.data() + i * cout * lo, cout, cin * k, lo);
    }
    const bool rgx = g.requires_grad(x), rgw = g.requires_grad(w);
    const bool rgb = b >= 0 && g.requires_grad(b);
    int id = g.add_node(std::move(out), rgx || rgw || rgb);
    if (rgx || rgw || rgb) {
        g.set_backprop(id, [&g, id, x, w, b, n, cin, cout, l, lo, k, stride, pad, rgx, rgw,
                            rgb]() {
            const T* go = g.grad(id).data();
            const TensorT<T>& xval = g.val(x);
            const TensorT<T>& wval = g.val(w);
            std::vector<T> col(static_cast<size_t>(cin * k * lo));
            std::vector<T> dcol;
            if (rgx) dcol.resize(static_cast<size_t>(cin * k * lo));
            for (int64_t i = 0; i < n; ++i) {
                const T* go_i = go + i * cout * lo;
                if (rgw || rgx)
                    im2col_1d(xval.data() + i * cin * l, cin, l, k, stride, pad, lo, col.data());
                if (rgw)
                    gemm_abt_acc(go_i, col.data(), g.grad(w).data(), cout, lo, cin * k);
                if (rgb) {
                    T* gb = g.grad(b).data();
                    for (int64_t o = 0; o < cout; ++o) {
                        T acc = T(0);
                        for (int64_t t = 0; t < lo; ++t) acc += go_i[o * lo + t];
                        gb[o] += acc;
                    }
                }
                if (rgx) {
                    std::fill(dcol.begin(), dcol.end(), T(0));
                    gemm_atb_acc(wval.data(), go_i, dcol.data(), cin * k, cout, lo);
                    col2im_acc_1d(dcol.data(), cin, l, k, stride, pad, lo,
                                  g.grad(x).data() + i * cin * l);
                }
            }
        });
    }
    return id;
}

// Transposed 1-D convolution (the adjoint of conv1d in its data argument).
// x: [C_in,L] or [N,C_in,L]; w: [C_in,C_out,K]; optional bias [C_out].
// L_out = (L−1)·stride − 2·pad + K.
template <typename T>
int conv_transpose1d(GraphT<T>& g, int x, int w, int b, int64_t stride, int64_t pad) {
    const TensorT<T>& xv = g.val(x);
    const TensorT<T>& wv = g.val(w);
    N2F_CHECK(wv.rank() == 3, "conv_transpose1d: weights must be [C_in,C_out,K]");
    N2F_CHECK(stride >= 1 && pad >= 0, "conv_transpose1d: stride >= 1 and pad >= 0 required");
    int64_t n, cin, l;
    detail::batched_dims(xv, n, cin, l);
    const int64_t cout = wv.dim(1), k = wv.dim(2);
    N2F_CHECK(wv.dim(0) == cin, "conv_transpose1d: input has %lld channels, weights expect %lld",
              (long long)cin, (long long)wv.dim(0));
    const int64_t lo = conv_transpose_out_len(l, k, stride, pad);
    N2F_CHECK(lo >= 1, "conv_transpose1d: output length %lld < 1", (long long)lo);
    TensorT<T> out(detail::like_shape(xv, cout, lo), T(0));
    std::vector<T> tmp(static_cast<size_t>(cout * k * l));
    for (int64_t i = 0; i < n; ++i) {
        std::fill(tmp.begin(), tmp.end(), T(0));
        gemm_atb_acc(wv.data(), xv.data() + i * cin * l, tmp.data(), cout * k, cin, l);
        col2im_acc_1d(tmp.data(), cout, lo, k, stride, pad, l, out.data() + i * cout * lo);
    }
    if (b >= 0) {
        const TensorT<T>& bv = g.val(b);
        N2F_CHECK(bv.volume() == cout, "conv_transpose1d: bias size mismatch");
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < cout; ++o) {
                T* row = out.data() + (i * cout + o) * lo;
                const T bve = bv.data()[o];
                for (int64_t t = 0; t < lo; ++t) row[t] += bve;
            }
    }
    const bool rgx = g.requires_grad(x), rgw = g.requires_grad(w);
    const bool rgb = b >= 0 && g.requires_grad(b);
    int id = g.add_node(std::move(out), rgx || rgw || rgb);
    if (rgx || rgw || rgb) {
        g.set_backprop(id, [&g, id, x, w, b, n, cin, cout, l, lo, k, stride, pad, rgx, rgw,
                            rgb]() {
            const T* go = g.grad(id).data();
            const TensorT<T>& xval = g.val(x);
            const TensorT<T>& wval = g.val(w);
            std::vector<T> colD(static_cast<size_t>(cout * k * l));
            for (int64_t i = 0; i < n; ++i) {
                const T* go_i = go + i * cout * lo;
                if (rgx || rgw)
                    im2col_1d(go_i, cout, lo, k, stride, pad, l, colD.data());
                if (rgx)
                    gemm_acc(wval.data(), colD.data(), g.grad(x).data() + i * cin * l, cin,
                             cout * k, l);
                if (rgw)
                    gemm_abt_acc(xval.data() + i * cin * l, colD.data(), g.grad(w).data(), cin,
                                 l, cout * k);
                if (rgb) {
                    T* gb = g.grad(b).data();
                    for (int64_t o = 0; o < cout; ++o) {
                        T acc = T(0);
                        for (int64_t t = 0; t < lo; ++t) acc += go_i[o * lo + t];
                        gb[o] += acc;
                    }
                }
            }
        });
    }
    return id;
}

// Max pooling; stride <= 0 means stride = window. Gradient routes to the
// argmax, first index on ties.
template <typename T>
int maxpool1d(GraphT<T>& g, int x, int64_t window, int64_t stride = 0) {
    if (stride <= 0) stride = window;
    const TensorT<T>& xv = g.val(x);
    int64_t n, c, l;
    detail::batched_dims(xv, n, c, l);
    N2F_CHECK(window >= 1, "maxpool1d: window must be >= 1");
    N2F_CHECK(window <= l, "maxpool1d: window %lld exceeds length %lld", (long long)window,
              (long long)l);
    const int64_t lo = (l - window) / stride + 1;
    TensorT<T> out(detail::like_shape(xv, c, lo));
    auto argmax = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n * c * lo));
    for (int64_t i = 0; i < n; ++i)
        maxpool_fwd_1d(xv.data() + i * c * l, c, l, window, stride, lo,
                       out.data() + i * c * lo, argmax->data() + i * c * lo);
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, c, l, lo, argmax]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            const int32_t* am = argmax->data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const int64_t base_o = (i * c + ch) * lo;
                    const int64_t base_x = (i * c + ch) * l;
                    for (int64_t t = 0; t < lo; ++t)
                        gx[base_x + am[base_o + t]] += go[base_o + t];
                }
        });
    }
    return id;
}

// Nearest-neighbor upsampling along the length axis of [N,C,L] (or [C,L]):
// every sample is repeated `factor` times. The adjoint sums the incoming
// gradient over each group of repeats.
template <typename T>
int upsample_nearest1d(GraphT<T>& g, int x, int64_t factor) {
    N2F_CHECK(factor >= 1, "upsample_nearest1d: factor must be >= 1, got %lld",
              (long long)factor);
    const TensorT<T>& xv = g.val(x);
    int64_t n, c, l;
    detail::batched_dims(xv, n, c, l);
    const int64_t lo = l * factor;
    TensorT<T> out(detail::like_shape(xv, c, lo));
    const T* px = xv.data();
    T* po = out.data();
    for (int64_t row = 0; row < n * c; ++row)
        for (int64_t t = 0; t < lo; ++t) po[row * lo + t] = px[row * l + t / factor];
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, c, l, lo, factor]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t row = 0; row < n * c; ++row)
                for (int64_t t = 0; t < lo; ++t) gx[row * l + t / factor] += go[row * lo + t];
        });
    }
    return id;
}

// Swap the channel and length axes: [N,C,L] -> [N,L,C]. Used to hand conv
// feature maps to sequence layers that expect [batch, time, features].
template <typename T>
int transpose_last2(GraphT<T>& g, int x) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() == 3, "transpose_last2 expects a rank-3 tensor, got rank %d", xv.rank());
    const int64_t n = xv.dim(0), c = xv.dim(1), l = xv.dim(2);
    TensorT<T> out({n, l, c});
    const T* px = xv.data();
    T* po = out.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t t = 0; t < l; ++t) po[(i * l + t) * c + ch] = px[(i * c + ch) * l + t];
    const bool rg = g.requires_grad(x);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        g.set_backprop(id, [&g, id, x, n, c, l]() {
            const T* go = g.grad(id).data();
            T* gx = g.grad(x).data();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t ch = 0; ch < c; ++ch)
                    for (int64_t t = 0; t < l; ++t)
                        gx[(i * c + ch) * l + t] += go[(i * l + t) * c + ch];
        });
    }
    return id;
}

// Batch normalization over [N,C,L] (or [N,C], treated as L == 1). Train mode
// normalizes with biased batch statistics and updates the running stats via
// an exponential moving average; Infer/Sample modes normalize with the
// running statistics. The running tensors live outside the graph (layer
// state) and are mutated in place during train mode.
template <typename T>
int batchnorm1d(GraphT<T>& g, int x, int gamma, int beta, TensorT<T>* run_mean,
                TensorT<T>* run_var, double eps = 1e-5, double momentum = 0.1) {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() == 2 || xv.rank() == 3, "batchnorm1d expects [N,C] or [N,C,L]");
    const int64_t n = xv.dim(0);
    const int64_t c = xv.dim(1);
    const int64_t l = xv.rank() == 3 ? xv.dim(2) : 1;
    const TensorT<T>& gv = g.val(gamma);
    const TensorT<T>& bv = g.val(beta);
    N2F_CHECK(gv.volume() == c && bv.volume() == c, "batchnorm1d: gamma/beta size mismatch");
    N2F_CHECK(run_mean != nullptr && run_var != nullptr && run_mean->volume() == c &&
                  run_var->volume() == c,
              "batchnorm1d: running stats missing or mis-sized");
    const int64_t m = n * l;
    const bool train_stats = use_batch_stats(g.mode);
    N2F_CHECK_NUM(!train_stats || m >= 2,
                  "batchnorm1d: train mode needs at least 2 values per channel, got %lld",
                  (long long)m);

    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(xv.volume()));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
    TensorT<T> out(xv.shape());
    for (int64_t ch = 0; ch < c; ++ch) {
        T mu, var;
        if (train_stats) {
            T acc = T(0);
            for (int64_t i = 0; i < n; ++i) {
                const T* row = xv.data() + (i * c + ch) * l;
                for (int64_t t = 0; t < l; ++t) acc += row[t];
            }
            mu = acc / static_cast<T>(m);
            T vacc = T(0);
            for (int64_t i = 0; i < n; ++i) {
                const T* row = xv.data() + (i * c + ch) * l;
                for (int64_t t = 0; t < l; ++t) {
                    const T d = row[t] - mu;
                    vacc += d * d;
                }
            }
            var = vacc / static_cast<T>(m);
            run_mean->data()[ch] = static_cast<T>(1.0 - momentum) * run_mean->data()[ch] +
                                   static_cast<T>(momentum) * mu;
            run_var->data()[ch] = static_cast<T>(1.0 - momentum) * run_var->data()[ch] +
                                  static_cast<T>(momentum) * var;
        } else {
            mu = run_mean->data()[ch];
            var = run_var->data()[ch];
        }
        const T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*inv_std)[static_cast<size_t>(ch)] = istd;
        const T gam = gv.data()[ch];
        const T bet = bv.data()[ch];
        for (int64_t i = 0; i < n; ++i) {
            const T* row = xv.data() + (i * c + ch) * l;
            T* orow = out.data() + (i * c + ch) * l;
            T* xh = xhat->data() + (i * c + ch) * l;
            for (int64_t t = 0; t < l; ++t) {
                xh[t] = (row[t] - mu) * istd;
                orow[t] = gam * xh[t] + bet;
            }
        }
    }
    const bool rgx = g.requires_grad(x);
    const bool rgg = g.requires_grad(gamma), rgb = g.requires_grad(beta);
    int id = g.add_node(std::move(out), rgx || rgg || rgb);
    if (rgx || rgg || rgb) {
        g.set_backprop(id, [&g, id, x, gamma, beta, n, c, l, m, xhat, inv_std, train_stats, rgx,
                            rgg, rgb]() {
            const T* go = g.grad(id).data();
            const T* gv2 = g.val(gamma).data();
            for (int64_t ch = 0; ch < c; ++ch) {
                T sum_d = T(0), sum_dx = T(0);
                for (int64_t i = 0; i < n; ++i) {
                    const T* grow = go + (i * c + ch) * l;
                    const T* xh = xhat->data() + (i * c + ch) * l;
                    for (int64_t t = 0; t < l; ++t) {
                        sum_d += grow[t];
                        sum_dx += grow[t] * xh[t];
                    }
                }
                if (rgg) g.grad(gamma).data()[ch] += sum_dx;
                if (rgb) g.grad(beta).data()[ch] += sum_d;
                if (rgx) {
                    const T istd = (*inv_std)[static_cast<size_t>(ch)];
                    const T gam = gv2[ch];
                    T* gx = g.grad(x).data();
                    if (train_stats) {
                        const T mean_d = sum_d / static_cast<T>(m);
                        const T mean_dx = sum_dx / static_cast<T>(m);
                        for (int64_t i = 0; i < n; ++i) {
                            const T* grow = go + (i * c + ch) * l;
                            const T* xh = xhat->data() + (i * c + ch) * l;
                            T* gxr = gx + (i * c + ch) * l;
                            for (int64_t t = 0; t < l; ++t)
                                gxr[t] += gam * istd * (grow[t] - mean_d - xh[t] * mean_dx);
                        }
                    } else {
                        for (int64_t i = 0; i < n; ++i) {
                            const T* grow = go + (i * c + ch) * l;
                            T* gxr = gx + (i * c + ch) * l;
                            for (int64_t t = 0; t < l; ++t) gxr[t] += gam * istd * grow[t];
                        }
                    }
                }
            }
        });
    }
    return id;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean sigmoid cross-entropy against a fixed target (scalar broadcast or a
// tensor matching the logits). Numerically stable:
// max(z,0) − z·y + log(1 + exp(−|z|)).
template <typename T>
int sigmoid_cross_entropy(GraphT<T>& g, int logits, const TensorT<T>& target) {
    const TensorT<T>& zv = g.val(logits);
    const int64_t m = zv.volume();
    const bool broadcast = target.volume() == 1;
    N2F_CHECK(broadcast || target.same_shape(zv),
              "sigmoid_cross_entropy: target must be scalar or match logits");
    for (int64_t i = 0; i < target.volume(); ++i)
        N2F_CHECK(target.data()[i] >= T(0) && target.data()[i] <= T(1),
                  "sigmoid_cross_entropy: targets must lie in [0,1]");
    T acc = T(0);
    for (int64_t i = 0; i < m; ++i) {
        const T z = zv.data()[i];
        const T y = broadcast ? target.data()[0] : target.data()[i];
        acc += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(m));
    const bool rg = g.requires_grad(logits);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        auto tgt = std::make_shared<TensorT<T>>(target);
        g.set_backprop(id, [&g, id, logits, m, tgt, broadcast]() {
            const T go = g.grad(id).data()[0] / static_cast<T>(m);
            const T* zv2 = g.val(logits).data();
            T* gz = g.grad(logits).data();
            for (int64_t i = 0; i < m; ++i) {
                const T y = broadcast ? tgt->data()[0] : tgt->data()[i];
                gz[i] += go * (detail::stable_sigmoid(zv2[i]) - y);
            }
        });
    }
    return id;
}

template <typename T>
int sigmoid_cross_entropy(GraphT<T>& g, int logits, T target) {
    return sigmoid_cross_entropy(g, logits, TensorT<T>::scalar(target));
}

// Mean negative log-likelihood of integer labels under softmax(logits[N,C]),
// computed via log-sum-exp.
template <typename T>
int softmax_cross_entropy(GraphT<T>& g, int logits, const std::vector<int>& labels) {
    const TensorT<T>& zv = g.val(logits);
    N2F_CHECK(zv.rank() == 2, "softmax_cross_entropy expects logits [N,C]");
    const int64_t n = zv.dim(0), c = zv.dim(1);
    N2F_CHECK(static_cast<int64_t>(labels.size()) == n,
              "softmax_cross_entropy: %zu labels for %lld rows", labels.size(), (long long)n);
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n * c));
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        N2F_CHECK(y >= 0 && y < c, "label %d out of range [0,%lld)", y, (long long)c);
        const T* zi = zv.data() + i * c;
        T mx = zi[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
        T denom = T(0);
        for (int64_t j = 0; j < c; ++j) denom += std::exp(zi[j] - mx);
        const T lse = mx + std::log(denom);
        acc += lse - zi[y];
        for (int64_t j = 0; j < c; ++j)
            (*probs)[static_cast<size_t>(i * c + j)] = std::exp(zi[j] - lse);
    }
    TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(n));
    const bool rg = g.requires_grad(logits);
    int id = g.add_node(std::move(out), rg);
    if (rg) {
        auto lab = std::make_shared<std::vector<int>>(labels);
        g.set_backprop(id, [&g, id, logits, n, c, probs, lab]() {
            const T go = g.grad(id).data()[0] / static_cast<T>(n);
            T* gz = g.grad(logits).data();
            for (int64_t i = 0; i < n; ++i) {
                const int y = (*lab)[static_cast<size_t>(i)];
                for (int64_t j = 0; j < c; ++j) {
                    T p = (*probs)[static_cast<size_t>(i * c + j)];
                    gz[i * c + j] += go * (p - (j == y ? T(1) : T(0)));
                }
            }
        });
    }
    return id;
}

// Mean absolute error between two same-shape tensors; the subgradient at zero
// difference is taken as 0.
template <typename T>
int l1_loss(GraphT<T>& g, int a, int b) {
    const TensorT<T>& av = g.val(a);
    const TensorT<T>& bv = g.val(b);
    N2F_CHECK(av.same_shape(bv), "l1_loss: shape mismatch");
    const int64_t m = av.volume();
    T acc = T(0);
    for (int64_t i = 0; i < m; ++i) acc += std::abs(av.data()[i] - bv.data()[i]);
    TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(m));
    const bool rga = g.requires_grad(a), rgb = g.requires_grad(b);
    int id = g.add_node(std::move(out), rga || rgb);
    if (rga || rgb) {
        g.set_backprop(id, [&g, id, a, b, m, rga, rgb]() {
            const T go = g.grad(id).data()[0] / static_cast<T>(m);
            const T* pa = g.val(a).data();
            const T* pb = g.val(b).data();
            for (int64_t i = 0; i < m; ++i) {
                const T d = pa[i] - pb[i];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                if (rga) g.grad(a).data()[i] += go * s;
                if (rgb) g.grad(b).data()[i] -= go * s;
            }
        });
    }
    return id;
}

}  // namespace n2f
