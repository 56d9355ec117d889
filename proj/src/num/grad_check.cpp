#include "num/grad_check.hpp"

#include "common/error.hpp"

#include <cmath>

namespace attnmix::num {

GradientRecord grad(const LossBuilder& build, const NamedTensors& params) {
    Tape tape;
    std::map<std::string, ValueRef> refs;
    for (const auto& [name, tensor] : params) refs[name] = tape.param(tensor);
    ValueRef loss = build(tape, refs);
    const Tensor& lv = tape.value(loss);
    if (lv.numel() != 1) raise(Errc::invalid_argument, "loss must be scalar");
    if (!lv.all_finite()) raise(Errc::nonfinite_gradient, "loss value is non-finite");
    tape.backward(loss);
    GradientRecord rec;
    rec.loss = lv.v[0];
    for (const auto& [name, ref] : refs) {
        Tensor g = tape.gradient(ref);
        if (!g.all_finite())
            raise(Errc::nonfinite_gradient, "gradient of " + name + " is non-finite");
        rec.grads.emplace(name, std::move(g));
    }
    return rec;
}

double eval_loss(const LossBuilder& build, const NamedTensors& params) {
    Tape tape;
    std::map<std::string, ValueRef> refs;
    for (const auto& [name, tensor] : params) refs[name] = tape.input(tensor);
    ValueRef loss = build(tape, refs);
    const Tensor& lv = tape.value(loss);
    if (lv.numel() != 1) raise(Errc::invalid_argument, "loss must be scalar");
    return lv.v[0];
}

double finite_diff_check(const LossBuilder& build, const NamedTensors& params, double step) {
    if (!(step >= 1e-6 && step <= 1e-3))
        raise(Errc::invalid_argument, "finite difference step must lie in [1e-6, 1e-3]");
    GradientRecord analytic = grad(build, params);
    NamedTensors work = params;
    double max_rel = 0.0;
    for (auto& [name, tensor] : work) {
        const Tensor& ga = analytic.grads.at(name);
        for (size_t i = 0; i < tensor.v.size(); ++i) {
            double keep = tensor.v[i];
            tensor.v[i] = keep + step;
            double up = eval_loss(build, work);
            tensor.v[i] = keep - step;
            double down = eval_loss(build, work);
            tensor.v[i] = keep;
            double fd = (up - down) / (2.0 * step);
            double a = ga.v[i];
            double denom = std::max({std::fabs(a), std::fabs(fd), 1e-8});
            double rel = std::fabs(a - fd) / denom;
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

} // namespace attnmix::num
