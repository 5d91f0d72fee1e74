#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace caae {

// Extents of an n-dimensional array. Images are NCHW, kernels OIHW,
// dense weights F x G (row-major throughout).
using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + std::to_string(e));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense n-d array with an optional gradient buffer. Values live in
// row-major order; grad, when tracked, always mirrors data's size.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty unless requires_grad and a backward pass ran
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}

    static Tensor from(Shape s, std::vector<T> values) {
        Tensor t;
        t.shape = std::move(s);
        if (numel(t.shape) != values.size())
            throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(t.shape));
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    void set_requires_grad(bool on) {
        requires_grad = on;
        if (!on) grad.clear();
    }

    void zero_grad() {
        grad.assign(data.size(), T(0));
    }

    // Grads accumulate across backward passes until zero_grad().
    void accumulate_grad(std::span<const T> g) {
        if (g.size() != data.size())
            throw std::invalid_argument("gradient size mismatch for tensor " + shape_str(shape));
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }

    T& at(std::initializer_list<int> idx) { return data[offset(idx)]; }
    const T& at(std::initializer_list<int> idx) const { return data[offset(idx)]; }

    std::size_t offset(std::initializer_list<int> idx) const {
        if (idx.size() != shape.size())
            throw std::invalid_argument("index rank mismatch for shape " + shape_str(shape));
        std::size_t off = 0;
        auto it = idx.begin();
        for (std::size_t d = 0; d < shape.size(); ++d, ++it) {
            if (*it < 0 || *it >= shape[d]) throw std::out_of_range("tensor index out of range");
            off = off * static_cast<std::size_t>(shape[d]) + static_cast<std::size_t>(*it);
        }
        return off;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool grad_finite() const {
        for (T v : grad)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

inline std::uint64_t hash_bytes(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
std::uint64_t hash_tensor(const Tensor<T>& t) {
    std::uint64_t h = hash_bytes(t.shape.data(), t.shape.size() * sizeof(int));
    return hash_bytes(t.data.data(), t.data.size() * sizeof(T), h);
}

}  // namespace caae
