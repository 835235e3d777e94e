#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "n2f/graph.hpp"
#include "n2f/ops.hpp"
#include "n2f/rng.hpp"

// Layer wrappers: each owns named parameters inside a ParamStore and exposes a
// forward() that records ops on a graph. Initialization policy:
//   conv / conv-transpose / dense weights ~ N(0, 0.02), biases 0
//   batchnorm gamma ~ N(1, 0.02), beta 0, running stats (0, 1)
//   lstm weights ~ U(-1/sqrt(H), 1/sqrt(H)), biases 0 with forget gate at +1

namespace n2f {

template <typename T>
TensorT<T> gaussian_init(const std::vector<int64_t>& shape, Rng& rng, double mean,
                         double stddev) {
    TensorT<T> t(shape);
    for (int64_t i = 0; i < t.volume(); ++i)
        t.data()[i] = static_cast<T>(rng.normal(mean, stddev));
    return t;
}

template <typename T>
TensorT<T> uniform_init(const std::vector<int64_t>& shape, Rng& rng, double lo, double hi) {
    TensorT<T> t(shape);
    for (int64_t i = 0; i < t.volume(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
struct Conv1dLayerT {
    int64_t in_ch = 0, out_ch = 0, kernel = 1, stride = 1, pad = 0;
    ParamT<T>* w = nullptr;
    ParamT<T>* b = nullptr;

    static Conv1dLayerT create(ParamStoreT<T>& store, const std::string& name, int64_t in_ch,
                               int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad,
                               Rng& rng, bool has_bias = true) {
        Conv1dLayerT layer;
        layer.in_ch = in_ch;
        layer.out_ch = out_ch;
        layer.kernel = kernel;
        layer.stride = stride;
        layer.pad = pad;
        layer.w = store.add(name + ".w",
                            gaussian_init<T>({out_ch, in_ch, kernel}, rng, 0.0, 0.02));
        if (has_bias) layer.b = store.add(name + ".b", TensorT<T>({out_ch}, T(0)));
        return layer;
    }
    int forward(GraphT<T>& g, int x) const {
        return conv1d(g, x, g.param(*w), b ? g.param(*b) : -1, stride, pad);
    }
    int64_t out_len(int64_t l) const { return conv_out_len(l, kernel, stride, pad); }
};

template <typename T>
struct ConvT1dLayerT {
    int64_t in_ch = 0, out_ch = 0, kernel = 1, stride = 1, pad = 0;
    ParamT<T>* w = nullptr;  // [in_ch, out_ch, kernel]
    ParamT<T>* b = nullptr;

    static ConvT1dLayerT create(ParamStoreT<T>& store, const std::string& name, int64_t in_ch,
                                int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad,
                                Rng& rng, bool has_bias = true) {
        ConvT1dLayerT layer;
        layer.in_ch = in_ch;
        layer.out_ch = out_ch;
        layer.kernel = kernel;
        layer.stride = stride;
        layer.pad = pad;
        layer.w = store.add(name + ".w",
                            gaussian_init<T>({in_ch, out_ch, kernel}, rng, 0.0, 0.02));
        if (has_bias) layer.b = store.add(name + ".b", TensorT<T>({out_ch}, T(0)));
        return layer;
    }
    int forward(GraphT<T>& g, int x) const {
        return conv_transpose1d(g, x, g.param(*w), b ? g.param(*b) : -1, stride, pad);
    }
    int64_t out_len(int64_t l) const { return conv_transpose_out_len(l, kernel, stride, pad); }
};

template <typename T>
struct BatchNorm1dLayerT {
    int64_t channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    ParamT<T>* gamma = nullptr;
    ParamT<T>* beta = nullptr;
    ParamT<T>* run_mean = nullptr;  // non-trainable state
    ParamT<T>* run_var = nullptr;   // non-trainable state

    static BatchNorm1dLayerT create(ParamStoreT<T>& store, const std::string& name,
                                    int64_t channels, Rng& rng) {
        BatchNorm1dLayerT layer;
        layer.channels = channels;
        layer.gamma = store.add(name + ".gamma", gaussian_init<T>({channels}, rng, 1.0, 0.02));
        layer.beta = store.add(name + ".beta", TensorT<T>({channels}, T(0)));
        layer.run_mean = store.add(name + ".run_mean", TensorT<T>({channels}, T(0)), false);
        layer.run_var = store.add(name + ".run_var", TensorT<T>({channels}, T(1)), false);
        return layer;
    }
    int forward(GraphT<T>& g, int x) const {
        return batchnorm1d(g, x, g.param(*gamma), g.param(*beta), &run_mean->value,
                           &run_var->value, eps, momentum);
    }
};

template <typename T>
struct DenseLayerT {
    int64_t in_features = 0, out_features = 0;
    ParamT<T>* w = nullptr;  // [in, out]
    ParamT<T>* b = nullptr;

    static DenseLayerT create(ParamStoreT<T>& store, const std::string& name, int64_t in_f,
                              int64_t out_f, Rng& rng, bool has_bias = true) {
        DenseLayerT layer;
        layer.in_features = in_f;
        layer.out_features = out_f;
        layer.w = store.add(name + ".w", gaussian_init<T>({in_f, out_f}, rng, 0.0, 0.02));
        if (has_bias) layer.b = store.add(name + ".b", TensorT<T>({out_f}, T(0)));
        return layer;
    }
    int forward(GraphT<T>& g, int x) const {
        return dense(g, x, g.param(*w), b ? g.param(*b) : -1);
    }
};

// Single-layer LSTM. One fused weight matrix [F+H, 4H] over the concatenated
// (input, previous hidden) vector; gate order along columns is i, f, g, o.
// Forward consumes [N,T,F] and emits [N,T,H]; backpropagation through time
// falls out of the recorded graph.
template <typename T>
struct LstmLayerT {
    int64_t input_size = 0, hidden = 0;
    ParamT<T>* w = nullptr;  // [F+H, 4H]
    ParamT<T>* b = nullptr;  // [4H]

    static LstmLayerT create(ParamStoreT<T>& store, const std::string& name, int64_t input_size,
                             int64_t hidden, Rng& rng) {
        LstmLayerT layer;
        layer.input_size = input_size;
        layer.hidden = hidden;
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        layer.w = store.add(name + ".w",
                            uniform_init<T>({input_size + hidden, 4 * hidden}, rng, -bound, bound));
        TensorT<T> bias({4 * hidden}, T(0));
        for (int64_t j = hidden; j < 2 * hidden; ++j) bias.data()[j] = T(1);
        layer.b = store.add(name + ".b", std::move(bias));
        return layer;
    }

    // Full recurrence with explicit initial state; returns the stacked hidden
    // sequence and exposes the final (h, c) node ids.
    int forward_state(GraphT<T>& g, int seq, int h0, int c0, int* h_final, int* c_final) const {
        const TensorT<T>& sv = g.val(seq);
        N2F_CHECK(sv.rank() == 3, "lstm expects [N,T,F]");
        const int64_t steps = sv.dim(1);
        N2F_CHECK(sv.dim(2) == input_size, "lstm: input feature size %lld, expected %lld",
                  (long long)sv.dim(2), (long long)input_size);
        const int wid = g.param(*w);
        const int bid = g.param(*b);
        int h = h0, c = c0;
        std::vector<int> hs;
        hs.reserve(static_cast<size_t>(steps));
        for (int64_t t = 0; t < steps; ++t) {
            int xt = select_time(g, seq, t);
            int cat = concat_cols(g, xt, h);
            int gates = dense(g, cat, wid, bid);
            int gi = sigmoid_op(g, slice_cols(g, gates, 0, hidden));
            int gf = sigmoid_op(g, slice_cols(g, gates, hidden, hidden));
            int gg = tanh_op(g, slice_cols(g, gates, 2 * hidden, hidden));
            int go = sigmoid_op(g, slice_cols(g, gates, 3 * hidden, hidden));
            c = eadd(g, emul(g, gf, c), emul(g, gi, gg));
            h = emul(g, go, tanh_op(g, c));
            hs.push_back(h);
        }
        if (h_final) *h_final = h;
        if (c_final) *c_final = c;
        return stack_time(g, hs);
    }

    int forward(GraphT<T>& g, int seq) const {
        const int64_t n = g.val(seq).dim(0);
        int h0 = g.constant(TensorT<T>({n, hidden}, T(0)));
        int c0 = g.constant(TensorT<T>({n, hidden}, T(0)));
        return forward_state(g, seq, h0, c0, nullptr, nullptr);
    }
};

using Conv1dLayer = Conv1dLayerT<float>;
using ConvT1dLayer = ConvT1dLayerT<float>;
using BatchNorm1dLayer = BatchNorm1dLayerT<float>;
using DenseLayer = DenseLayerT<float>;
using LstmLayer = LstmLayerT<float>;

}  // namespace n2f
