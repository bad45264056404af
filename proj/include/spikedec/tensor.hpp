#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "spikedec/errors.hpp"

namespace spikedec {

// Dense row-major tensor of doubles. Shapes are fixed at construction.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(numel(shape), 0.0) {}

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

    static Tensor from(std::vector<std::size_t> s, std::vector<double> values) {
        Tensor t;
        t.shape = std::move(s);
        if (numel(t.shape) != values.size())
            throw DimensionError("Tensor::from: value count does not match shape");
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    void fill(double v) {
        for (double& x : data) x = v;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Trainable tensor with an accumulated gradient buffer of the same shape.
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace spikedec
