#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "flowrl/errors.hpp"

namespace flowrl {

// Dense float64 array with an optional gradient buffer of the same length.
// Shapes are at most rank 2 in practice ([rows, cols]); rank 1 is treated as
// a single row where a matrix is expected.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty unless gradients are engaged

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size()) throw ShapeError("tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(numel(t.shape), 0.0);
        return t;
    }

    static Tensor row(std::vector<double> d) {
        Tensor t;
        t.shape = {1, d.size()};
        t.data = std::move(d);
        return t;
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }

    std::size_t rows() const { return shape.size() >= 2 ? shape[0] : (shape.empty() ? 0 : 1); }
    std::size_t cols() const { return shape.size() >= 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    // Engage (allocate + zero) the gradient buffer.
    void engage_grad() { grad.assign(data.size(), 0.0); }
    void zero_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        else std::fill(grad.begin(), grad.end(), 0.0);
    }
    bool has_grad() const { return grad.size() == data.size() && !data.empty(); }
};

}  // namespace flowrl
