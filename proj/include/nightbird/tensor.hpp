#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nightbird/rng.hpp"

namespace nightbird {

using Shape = std::vector<size_t>;

/// Dense row-major double tensor. Feature maps use the (C, H, W) convention.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double v);
    /// Entries i.i.d. uniform in [lo, hi), drawn in row-major order.
    static Tensor uniform(const Shape& s, Rng& rng, double lo, double hi);

    size_t numel() const;
    size_t rank() const { return shape.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // (C, H, W) accessors; valid for rank-3 tensors.
    size_t channels() const { return shape[0]; }
    size_t height() const { return shape[1]; }
    size_t width() const { return shape[2]; }
    double& at(size_t c, size_t h, size_t w) {
        return data[(c * shape[1] + h) * shape[2] + w];
    }
    double at(size_t c, size_t h, size_t w) const {
        return data[(c * shape[1] + h) * shape[2] + w];
    }

    double min_value() const;
    double max_value() const;
    double mean_value() const;
    bool all_finite() const;
    bool all_in_range(double lo, double hi) const;

    /// Elementwise clamp into [lo, hi].
    Tensor clamped(double lo, double hi) const;
};

size_t shape_numel(const Shape& s);
std::string shape_to_string(const Shape& s);
bool tensors_equal(const Tensor& a, const Tensor& b);  // bitwise on shape and data

}  // namespace nightbird
