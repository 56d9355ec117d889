#include "num/ops.hpp"

#include "common/error.hpp"

#include <cmath>
#include <limits>

namespace attnmix::num {

namespace kernel {

double l2_norm(std::span<const double> x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    return std::sqrt(s);
}

double l2_normalize(std::span<const double> x, std::span<double> out) {
    double n = l2_norm(x);
    if (n < kNormFloor)
        raise(Errc::degenerate_norm, "vector norm " + std::to_string(n) + " below 1e-12");
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
    return n;
}

void softmax(std::span<const double> logits, double scale, std::span<double> out) {
    const double ninf = -std::numeric_limits<double>::infinity();
    double mx = ninf;
    for (double e : logits) {
        if (e == ninf) continue; // mask sentinel
        if (!std::isfinite(e))
            raise(Errc::nonfinite_input, "softmax input contains a non-finite value");
        if (e > mx) mx = e;
    }
    if (mx == ninf)
        raise(Errc::invalid_argument, "softmax over fully masked input");
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        double w = logits[i] == ninf ? 0.0 : std::exp(scale * (logits[i] - mx));
        out[i] = w;
        sum += w;
    }
    for (size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

double lp_pool(std::span<const double> values, double p) {
    if (p < 1.0) raise(Errc::invalid_p, "lp_pool exponent must be >= 1, got " + std::to_string(p));
    for (double e : values)
        if (!(e >= 0.0))
            raise(Errc::invalid_argument, "lp_pool values must be nonnegative");
    if (p == 1.0) {
        double s = 0.0;
        for (double e : values) s += e;
        return s;
    }
    double mx = 0.0;
    for (double e : values)
        if (e > mx) mx = e;
    if (mx == 0.0) return 0.0;
    double s = 0.0;
    for (double e : values) s += std::pow(e / mx, p);
    return mx * std::pow(s, 1.0 / p);
}

} // namespace kernel

Tensor l2_normalize(const Tensor& v) {
    if (v.rank() != 1) raise(Errc::invalid_argument, "l2_normalize expects a rank-1 tensor");
    v.require_finite("l2_normalize input");
    Tensor out = Tensor::zeros({v.shape[0]});
    kernel::l2_normalize(v.v, out.v);
    return out;
}

Tensor softmax(const Tensor& x, double scale) {
    if (x.rank() != 1) raise(Errc::invalid_argument, "softmax expects a rank-1 tensor");
    if (!(scale > 0.0)) raise(Errc::invalid_argument, "softmax scale must be > 0");
    Tensor out = Tensor::zeros({x.shape[0]});
    kernel::softmax(x.v, scale, out.v);
    return out;
}

double lp_pool(const Tensor& values, double p) {
    if (values.rank() != 1) raise(Errc::invalid_argument, "lp_pool expects a rank-1 tensor");
    values.require_finite("lp_pool input");
    return kernel::lp_pool(values.v, p);
}

} // namespace attnmix::num
