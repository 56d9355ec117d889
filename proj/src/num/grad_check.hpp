#pragma once

#include "num/tape.hpp"

#include <functional>
#include <map>
#include <string>

namespace attnmix::num {

using NamedTensors = std::map<std::string, Tensor>;

struct GradientRecord {
    double loss = 0.0;
    NamedTensors grads; // one entry per requested parameter, same shapes
};

// Builds a scalar loss node on the given tape from the bound parameters. The
// builder may add its own input nodes for data.
using LossBuilder = std::function<ValueRef(Tape&, const std::map<std::string, ValueRef>&)>;

// Reverse-mode gradients of the loss w.r.t. every named parameter. Errors
// with nonfinite_gradient when any output entry is NaN/Inf.
GradientRecord grad(const LossBuilder& build, const NamedTensors& params);

// Forward-only loss evaluation.
double eval_loss(const LossBuilder& build, const NamedTensors& params);

// Central-difference check of grad(): returns the maximum relative error over
// all parameter entries, denominator max(|a|, |b|, 1e-8). step must lie in
// [1e-6, 1e-3].
double finite_diff_check(const LossBuilder& build, const NamedTensors& params, double step);

} // namespace attnmix::num
