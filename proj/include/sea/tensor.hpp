#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sea {

// Dense n-dimensional array of 64-bit floats, row-major. Values are treated
// as immutable once an owner hands a tensor out; mutation happens only on
// locally owned copies.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

// dot(a,b) / (|a| |b|), clamped to [-1, 1]. A zero vector on either side
// yields 0 so degenerate gradients never produce NaN in reports.
double cosine_similarity(const Tensor& a, const Tensor& b);

double l1_norm(const Tensor& t);
double linf_distance(const Tensor& a, const Tensor& b);

// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& t);

} // namespace sea
