#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnmix::num {

// Dense row-major tensor of 64-bit reals. Scalars have an empty shape.
// 64-bit is the reference precision; every tolerance in the test suites
// assumes it.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor filled(std::vector<int64_t> shape, double value);
    static Tensor scalar(double x);
    static Tensor vec(std::vector<double> values);
    static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values);
    // Validates element count against the shape and rejects NaN/Inf.
    static Tensor make(std::vector<int64_t> shape, std::vector<double> values);

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t numel() const;
    int64_t rows() const;
    int64_t cols() const;

    double& at(int64_t i) { return v[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return v[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols() + j)]; }
    double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols() + j)]; }

    bool all_finite() const;
    void require_finite(const char* what) const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

} // namespace attnmix::num
