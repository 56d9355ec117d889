#include "train/adam.hpp"

#include "common/error.hpp"

#include <cmath>

namespace attnmix::train {

void Adam::step(std::map<std::string, Tensor*>& params, const GradientRecord& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, tensor] : params) {
        auto git = grads.grads.find(name);
        if (git == grads.grads.end())
            raise(Errc::invalid_argument, "missing gradient for parameter " + name);
        const Tensor& g = git->second;
        if (!g.same_shape(*tensor))
            raise(Errc::invalid_argument, "gradient shape mismatch for " + name);
        Moments& mo = state_[name];
        if (mo.m.v.empty()) {
            mo.m = Tensor::zeros(tensor->shape);
            mo.v = Tensor::zeros(tensor->shape);
        }
        for (size_t i = 0; i < tensor->v.size(); ++i) {
            double gi = g.v[i];
            mo.m.v[i] = cfg_.beta1 * mo.m.v[i] + (1.0 - cfg_.beta1) * gi;
            mo.v.v[i] = cfg_.beta2 * mo.v.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = mo.m.v[i] / bc1;
            double vhat = mo.v.v[i] / bc2;
            double upd = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            double next = tensor->v[i] - upd;
            if (!std::isfinite(next))
                raise(Errc::nonfinite_update, "non-finite Adam update for " + name);
            tensor->v[i] = next;
        }
    }
}

} // namespace attnmix::train
