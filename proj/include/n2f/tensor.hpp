#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "n2f/common.hpp"

namespace n2f {

// Dense n-dimensional array, row-major. float is the compute type everywhere;
// the double instantiation exists for finite-difference gradient checks.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int64_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

    TensorT(std::vector<int64_t> shape, T fill)
        : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

    TensorT(std::vector<int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        N2F_CHECK(static_cast<int64_t>(data_.size()) == volume(shape_),
                  "tensor data length %zu does not match shape volume %lld",
                  data_.size(), static_cast<long long>(volume(shape_)));
    }

    static TensorT scalar(T v) { return TensorT({}, std::vector<T>{v}); }

    static int64_t volume(const std::vector<int64_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                               [](int64_t a, int64_t b) { return a * b; });
    }

    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t volume() const { return static_cast<int64_t>(data_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    T at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    T& at3(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T at3(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    bool operator==(const TensorT& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    static int64_t checked_size(const std::vector<int64_t>& shape) {
        for (int64_t d : shape)
            N2F_CHECK(d > 0, "tensor extents must be positive, got %lld",
                      static_cast<long long>(d));
        return volume(shape);
    }

    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace n2f
