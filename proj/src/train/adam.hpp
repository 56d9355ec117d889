#pragma once

#include "num/grad_check.hpp"
#include "num/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace attnmix::train {

using num::GradientRecord;
using num::Tensor;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias-corrected moments over named tensors. The step
// counter increments before bias correction; updates are deterministic and
// checked for finiteness.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(std::map<std::string, Tensor*>& params, const GradientRecord& grads);
    int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
    int64_t t_ = 0;
};

} // namespace attnmix::train
