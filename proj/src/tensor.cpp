#include "nightbird/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nightbird/errors.hpp"

namespace nightbird {

size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (size_t dim : shape) {
        if (dim == 0) throw ValidationError("Tensor: zero dimension in shape " + shape_to_string(shape));
    }
    if (data.size() != shape_numel(shape)) {
        throw ValidationError("Tensor: data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_to_string(shape));
    }
}

Tensor Tensor::zeros(const Shape& s) {
    return Tensor(s, std::vector<double>(shape_numel(s), 0.0));
}

Tensor Tensor::full(const Shape& s, double v) {
    return Tensor(s, std::vector<double>(shape_numel(s), v));
}

Tensor Tensor::uniform(const Shape& s, Rng& rng, double lo, double hi) {
    Tensor t = zeros(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

size_t Tensor::numel() const { return data.size(); }

double Tensor::min_value() const { return *std::min_element(data.begin(), data.end()); }
double Tensor::max_value() const { return *std::max_element(data.begin(), data.end()); }

double Tensor::mean_value() const {
    double s = std::accumulate(data.begin(), data.end(), 0.0);
    return s / static_cast<double>(data.size());
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::all_in_range(double lo, double hi) const {
    return std::all_of(data.begin(), data.end(), [&](double v) { return v >= lo && v <= hi; });
}

Tensor Tensor::clamped(double lo, double hi) const {
    Tensor out = *this;
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    return out;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace nightbird
