#include "num/tensor.hpp"

#include "common/error.hpp"

#include <cmath>
#include <utility>

namespace attnmix::num {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) raise(Errc::invalid_argument, "tensor extents must be positive");
        n *= e;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t;
    int64_t n = shape_numel(shape);
    t.shape = std::move(shape);
    t.v.assign(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::filled(std::vector<int64_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& x : t.v) x = value;
    return t;
}

Tensor Tensor::scalar(double x) {
    Tensor t;
    t.v.assign(1, x);
    return t;
}

Tensor Tensor::vec(std::vector<double> values) {
    int64_t n = static_cast<int64_t>(values.size());
    return make({n}, std::move(values));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> values) {
    return make({rows, cols}, std::move(values));
}

Tensor Tensor::make(std::vector<int64_t> shape, std::vector<double> values) {
    Tensor t;
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size()))
        raise(Errc::invalid_argument,
              "tensor value count " + std::to_string(values.size()) +
                  " does not match shape product " + std::to_string(n));
    t.shape = std::move(shape);
    t.v = std::move(values);
    t.require_finite("tensor");
    return t;
}

int64_t Tensor::numel() const {
    return static_cast<int64_t>(v.size());
}

int64_t Tensor::rows() const {
    if (rank() != 2) raise(Errc::invalid_argument, "rows() on tensor of rank " + std::to_string(rank()));
    return shape[0];
}

int64_t Tensor::cols() const {
    if (rank() != 2) raise(Errc::invalid_argument, "cols() on tensor of rank " + std::to_string(rank()));
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::require_finite(const char* what) const {
    if (!all_finite())
        raise(Errc::nonfinite_input, std::string(what) + " contains a non-finite value");
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace attnmix::num
