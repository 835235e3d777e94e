#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "n2f/common.hpp"
#include "n2f/rng.hpp"
#include "n2f/tensor.hpp"

namespace n2f {

// Execution mode for stochastic / statistics-dependent ops.
//  Train:  batchnorm uses batch statistics and updates running stats; dropout active.
//  Infer:  batchnorm uses running statistics; dropout is the identity.
//  Sample: batchnorm uses running statistics; dropout stays active so repeated
//          generation from one input yields diverse outputs.
enum class Mode { Train, Infer, Sample };

inline bool dropout_active(Mode m) { return m != Mode::Infer; }
inline bool use_batch_stats(Mode m) { return m == Mode::Train; }

// A named, persistent parameter: value plus accumulated gradient. Lives outside
// any single graph; mounted into a graph as a leaf node per forward pass.
template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
    bool trainable = true;

    ParamT(std::string n, TensorT<T> v, bool is_trainable = true)
        : name(std::move(n)),
          value(std::move(v)),
          grad(value.shape(), T(0)),
          trainable(is_trainable) {}

    void zero_grad() { grad.fill(T(0)); }
};

// Owning registry of parameters with stable addresses and unique names.
// Serialization and optimizer steps walk this in insertion order.
template <typename T>
class ParamStoreT {
  public:
    ParamT<T>* add(const std::string& name, TensorT<T> init, bool trainable = true) {
        N2F_CHECK(by_name_.find(name) == by_name_.end(), "duplicate parameter name '%s'",
                  name.c_str());
        params_.push_back(std::make_unique<ParamT<T>>(name, std::move(init), trainable));
        by_name_[name] = params_.back().get();
        return params_.back().get();
    }
    ParamT<T>* find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }
    ParamT<T>& at(const std::string& name) const {
        ParamT<T>* p = find(name);
        N2F_CHECK(p != nullptr, "unknown parameter '%s'", name.c_str());
        return *p;
    }
    size_t size() const { return params_.size(); }
    ParamT<T>& operator[](size_t i) { return *params_[i]; }
    const ParamT<T>& operator[](size_t i) const { return *params_[i]; }

    std::vector<ParamT<T>*> all() const {
        std::vector<ParamT<T>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }
    std::vector<ParamT<T>*> trainable() const {
        std::vector<ParamT<T>*> out;
        for (auto& p : params_)
            if (p->trainable) out.push_back(p.get());
        return out;
    }
    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }
    int64_t count_values() const {
        int64_t n = 0;
        for (auto& p : params_) n += p->value.volume();
        return n;
    }

  private:
    std::vector<std::unique_ptr<ParamT<T>>> params_;
    std::unordered_map<std::string, ParamT<T>*> by_name_;
};

// Define-by-run reverse-mode tape. Operations execute their forward pass
// immediately when recorded; construction order is evaluation order, and the
// graph is acyclic by construction. backward() runs the recorded adjoint
// closures in reverse order, then folds leaf-node gradients into their
// parameters. A graph is single-use: one forward build, one backward sweep.
template <typename T>
class GraphT {
  public:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;  // allocated on first gradient deposit
        bool requires_grad = false;
        bool grad_ready = false;
        ParamT<T>* param = nullptr;
        std::function<void()> backprop;
    };

    Mode mode = Mode::Train;
    Rng* rng = nullptr;

    explicit GraphT(Mode m = Mode::Train, Rng* r = nullptr) : mode(m), rng(r) {}
    GraphT(const GraphT&) = delete;
    GraphT& operator=(const GraphT&) = delete;

    int add_node(TensorT<T> value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), TensorT<T>(), requires_grad, false, nullptr, {}});
        return static_cast<int>(nodes_.size()) - 1;
    }
    // Leaf with no gradient flow.
    int constant(TensorT<T> value) { return add_node(std::move(value), false); }
    // Leaf input; set requires_grad to differentiate with respect to it.
    int input(TensorT<T> value, bool requires_grad = false) {
        return add_node(std::move(value), requires_grad);
    }
    // Mount a parameter as a leaf. Repeat mounts return the same node, so
    // shared use (e.g. one weight feeding several ops) accumulates naturally.
    int param(ParamT<T>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return it->second;
        int id = add_node(p.value, true);
        nodes_[static_cast<size_t>(id)].param = &p;
        param_nodes_[&p] = id;
        return id;
    }

    Node& node(int id) {
        N2F_CHECK(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "bad node id %d", id);
        return nodes_[static_cast<size_t>(id)];
    }
    const TensorT<T>& val(int id) { return node(id).value; }
    bool requires_grad(int id) { return node(id).requires_grad; }

    // Gradient tensor of a node, allocated zeroed on first access.
    TensorT<T>& grad(int id) {
        Node& n = node(id);
        if (!n.grad_ready) {
            n.grad = TensorT<T>(n.value.shape(), T(0));
            n.grad_ready = true;
        }
        return n.grad;
    }
    void set_backprop(int id, std::function<void()> fn) { node(id).backprop = std::move(fn); }

    size_t node_count() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

    // Reverse sweep from a scalar loss. Every parameter reachable from the
    // loss receives its exact gradient (accumulated into ParamT::grad);
    // unmounted or unreachable parameters are left untouched.
    void backward(int loss_id) {
        N2F_CHECK_NUM(!backward_done_, "backward() called twice on the same graph");
        backward_done_ = true;
        Node& loss = node(loss_id);
        N2F_CHECK_NUM(loss.value.volume() == 1,
                      "backward() requires a scalar loss, got volume %lld",
                      static_cast<long long>(loss.value.volume()));
        N2F_CHECK_NUM(loss.requires_grad, "loss does not depend on any differentiable input");
        grad(loss_id).data()[0] = T(1);
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.requires_grad || !n.grad_ready) continue;
            if (n.backprop) n.backprop();
            if (n.param) {
                T* __restrict__ dst = n.param->grad.data();
                const T* __restrict__ src = n.grad.data();
                const int64_t m = n.grad.volume();
                for (int64_t i = 0; i < m; ++i) dst[i] += src[i];
            }
        }
    }

    // Full-graph finiteness scan (values and any materialized gradients).
    bool all_finite() const {
        for (const Node& n : nodes_) {
            if (!n.value.all_finite()) return false;
            if (n.grad_ready && !n.grad.all_finite()) return false;
        }
        return true;
    }

  private:
    std::vector<Node> nodes_;
    std::unordered_map<ParamT<T>*, int> param_nodes_;
    bool backward_done_ = false;
};

using Param = ParamT<float>;
using ParamStore = ParamStoreT<float>;
using Graph = GraphT<float>;

}  // namespace n2f
