#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "n2f/graph.hpp"
#include "n2f/tensor.hpp"

namespace n2f {

template <typename T>
struct AdamConfigT {
    T lr = static_cast<T>(2e-4);
    T beta1 = static_cast<T>(0.5);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
};

// Adam with bias correction. Owns first/second-moment tensors congruent with
// each tracked parameter; update rule per element:
//   m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
//   p ← p − lr · (m / (1−β1^t)) / (√(v / (1−β2^t)) + ε)
template <typename T>
class AdamT {
  public:
    struct Slot {
        ParamT<T>* param;
        TensorT<T> m;
        TensorT<T> v;
    };

    AdamT() = default;
    AdamT(const std::vector<ParamT<T>*>& params, AdamConfigT<T> cfg) : cfg_(cfg) {
        slots_.reserve(params.size());
        for (ParamT<T>* p : params) {
            N2F_CHECK(p->trainable, "optimizer given non-trainable parameter '%s'",
                      p->name.c_str());
            slots_.push_back(Slot{p, TensorT<T>(p->value.shape(), T(0)),
                                  TensorT<T>(p->value.shape(), T(0))});
        }
    }

    // Consume accumulated gradients (ParamT::grad) and update parameters.
    void step() {
        ++step_count_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_count_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_count_));
        for (Slot& s : slots_) {
            N2F_CHECK_NUM(s.param->grad.all_finite(), "non-finite gradient in parameter '%s'",
                          s.param->name.c_str());
            const int64_t n = s.param->value.volume();
            T* __restrict__ p = s.param->value.data();
            const T* __restrict__ grd = s.param->grad.data();
            T* __restrict__ m = s.m.data();
            T* __restrict__ v = s.v.data();
            for (int64_t i = 0; i < n; ++i) {
                m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * grd[i];
                v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * grd[i] * grd[i];
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t c) { step_count_ = c; }
    const AdamConfigT<T>& config() const { return cfg_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }

  private:
    AdamConfigT<T> cfg_;
    std::vector<Slot> slots_;
    int64_t step_count_ = 0;
};

using AdamConfig = AdamConfigT<float>;
using Adam = AdamT<float>;

}  // namespace n2f
