#include "sea/tensor.hpp"

#include <cmath>
#include <sstream>

#include "sea/errors.hpp"

namespace sea {

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::vector<double> d(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(d));
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("cosine_similarity: shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

double l1_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += std::fabs(v);
    return s;
}

double linf_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("linf_distance: shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

Tensor sign(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data) {
        v = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

} // namespace sea
