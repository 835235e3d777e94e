#pragma once

// Central finite-difference gradient checking in 64-bit mode. A test registers
// parameters (including any inputs to differentiate, wrapped as parameters),
// provides a forward builder that returns a scalar loss node, and the harness
// compares analytic reverse-mode gradients against (f(p+h) - f(p-h)) / 2h.
//
// The forward builder must be deterministic given the graph it is handed; the
// harness passes a freshly seeded Rng for every evaluation so stochastic ops
// (dropout) repeat their draws exactly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "n2f/graph.hpp"
#include "n2f/rng.hpp"

namespace n2f::testutil {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "param[i]: analytic vs fd"
    int64_t checked = 0;
};

struct GradCheckOpts {
    double h = 1e-5;
    int64_t max_per_tensor = 32;  // elements sampled per parameter tensor
    uint64_t seed = 1234;         // drives both forward rng and element choice
    Mode mode = Mode::Train;
};

// Relative error with an absolute floor: central differences carry roundoff
// noise of roughly eps*|f|/h (~1e-11 here), so differences below 1e-8 are
// indistinguishable from an exact match (e.g. structurally-zero gradients,
// like a conv bias feeding batchnorm).
inline double rel_err(double a, double b) {
    const double diff = std::abs(a - b);
    if (diff < 1e-8) return 0.0;
    return diff / std::max({std::abs(a), std::abs(b), 1e-8});
}

// forward: (GraphT<double>& g) -> loss node id. The graph comes pre-seeded
// with an rng; mount parameters inside the builder via g.param(...).
inline GradCheckResult check_gradients(ParamStoreT<double>& store,
                                       const std::function<int(GraphT<double>&)>& forward,
                                       const GradCheckOpts& opts = {}) {
    auto eval = [&](void) -> double {
        Rng rng(opts.seed);
        GraphT<double> g(opts.mode, &rng);
        const int loss = forward(g);
        return g.val(loss)[0];
    };

    // Analytic gradients.
    store.zero_grad();
    {
        Rng rng(opts.seed);
        GraphT<double> g(opts.mode, &rng);
        const int loss = forward(g);
        g.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (size_t p = 0; p < store.size(); ++p) analytic.push_back(store[p].grad.vec());

    GradCheckResult res;
    Rng pick(opts.seed ^ 0x5eedf00dULL);
    for (size_t p = 0; p < store.size(); ++p) {
        ParamT<double>& par = store[p];
        if (!par.trainable) continue;
        const int64_t n = par.value.volume();
        std::vector<int64_t> idx;
        if (n <= opts.max_per_tensor) {
            for (int64_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (int64_t k = 0; k < opts.max_per_tensor; ++k)
                idx.push_back(static_cast<int64_t>(pick.uniform_index(static_cast<uint64_t>(n))));
        }
        for (int64_t i : idx) {
            const double orig = par.value[i];
            par.value[i] = orig + opts.h;
            const double fp = eval();
            par.value[i] = orig - opts.h;
            const double fm = eval();
            par.value[i] = orig;
            const double fd = (fp - fm) / (2.0 * opts.h);
            const double an = analytic[p][static_cast<size_t>(i)];
            const double re = rel_err(an, fd);
            ++res.checked;
            if (re > res.max_rel_err) {
                res.max_rel_err = re;
                res.worst = par.name + "[" + std::to_string(i) + "]: analytic " +
                            std::to_string(an) + " vs fd " + std::to_string(fd);
            }
        }
    }
    return res;
}

// Fill a parameter with seeded gaussian noise (64-bit test fixtures).
inline void randn_fill(TensorT<double>& t, Rng& rng, double stddev = 1.0, double mean = 0.0) {
    for (int64_t i = 0; i < t.volume(); ++i) t[i] = rng.normal(mean, stddev);
}

}  // namespace n2f::testutil
