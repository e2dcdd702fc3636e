// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace litesc {

// Dense row-major array of reals.  Models keep these in float, channel and
// estimation math keeps them in double; both instantiations live side by side.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::initializer_list<size_t> shape, T fill = T(0))
        : Tensor(std::vector<size_t>(shape), fill) {}

    static Tensor from(std::vector<size_t> shape, std::vector<T> values) {
        if (count(shape) != values.size())
            throw std::invalid_argument("tensor data length does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
    size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    T& at(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<size_t> shape) const {
        if (count(shape) != size()) throw std::invalid_argument("reshape changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (size_t i = 0; i < size(); ++i) t[i] = U(data_[i]);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static size_t count(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_str(const std::vector<size_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace litesc
