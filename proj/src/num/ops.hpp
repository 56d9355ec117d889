#pragma once

#include "num/tensor.hpp"

#include <span>

namespace attnmix::num {

// Threshold below which a vector norm counts as degenerate. A zero-norm
// embedding indicates an initialization bug, so this is a hard error rather
// than silent epsilon padding.
inline constexpr double kNormFloor = 1e-12;

// v / ||v||2. Errors with degenerate_norm when ||v||2 < 1e-12.
Tensor l2_normalize(const Tensor& v);

// Numerically stable scaled softmax over a rank-1 tensor. Entries equal to
// -inf act as the mask sentinel and map to exactly 0. scale must be > 0.
Tensor softmax(const Tensor& x, double scale);

// (sum v_i^p)^(1/p) over nonnegative values, p >= 1. p == 1 is an exact
// left-to-right sum; larger p is evaluated factored by the maximum so that
// huge exponents stay stable.
double lp_pool(const Tensor& values, double p);

namespace kernel {

double l2_norm(std::span<const double> x);
// Returns the norm; writes x / norm into out. Throws on degenerate norm.
double l2_normalize(std::span<const double> x, std::span<double> out);
// -inf entries are masked to exact zero; all other entries must be finite.
void softmax(std::span<const double> logits, double scale, std::span<double> out);
double lp_pool(std::span<const double> values, double p);

} // namespace kernel

} // namespace attnmix::num
