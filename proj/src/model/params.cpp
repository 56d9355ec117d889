#include "model/params.hpp"

#include "common/error.hpp"
#include "common/rng.hpp"

#include <cmath>

namespace attnmix::model {

Variant variant_from_token(const std::string& token) {
    if (token == "full") return Variant::full;
    if (token == "M") return Variant::last_item;
    if (token == "IP") return Variant::all_items;
    if (token == "LI") return Variant::concat_window;
    if (token == "LP") return Variant::max_mix;
    raise(Errc::invalid_config, "unknown variant '" + token + "' (expected full|M|IP|LI|LP)");
}

const char* variant_token(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::last_item: return "M";
        case Variant::all_items: return "IP";
        case Variant::concat_window: return "LI";
        case Variant::max_mix: return "LP";
    }
    return "full";
}

void HyperParams::validate() const {
    if (dim < 1) raise(Errc::invalid_config, "model.d must be >= 1");
    if (levels < 1 || levels > 10) raise(Errc::invalid_config, "model.levels must lie in 1..10");
    if (heads < 1) raise(Errc::invalid_config, "model.heads must be >= 1");
    if (!(sigma > 0.0)) raise(Errc::invalid_config, "model.sigma must be > 0");
    if (!(p >= 1.0)) raise(Errc::invalid_config, "model.p must be >= 1");
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("embedding", embedding);
    for (size_t l = 0; l < query_w.size(); ++l) fn("query_w." + std::to_string(l + 1), query_w[l]);
    for (size_t h = 0; h < attn_q.size(); ++h) fn("attn_q." + std::to_string(h + 1), attn_q[h]);
    for (size_t h = 0; h < attn_k.size(); ++h) fn("attn_k." + std::to_string(h + 1), attn_k[h]);
    fn("merge_w", merge_w);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

NamedTensors ModelParams::to_named() const {
    NamedTensors named;
    for_each([&named](const std::string& name, const Tensor& t) { named.emplace(name, t); });
    return named;
}

ModelParams ModelParams::from_named(const NamedTensors& named, const HyperParams& hyper) {
    ModelParams p;
    p.embedding = named.at("embedding");
    for (int64_t l = 1; l <= hyper.effective_levels(); ++l)
        p.query_w.push_back(named.at("query_w." + std::to_string(l)));
    for (int64_t h = 1; h <= hyper.heads; ++h) {
        p.attn_q.push_back(named.at("attn_q." + std::to_string(h)));
        p.attn_k.push_back(named.at("attn_k." + std::to_string(h)));
    }
    p.merge_w = named.at("merge_w");
    return p;
}

ModelParams init_params(int64_t vocab_items, const HyperParams& hyper, uint64_t seed) {
    hyper.validate();
    if (vocab_items < 1) raise(Errc::invalid_argument, "vocabulary must contain at least one item");
    const int64_t d = hyper.dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(seed);
    auto fill = [&rng, bound](std::vector<int64_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& x : t.v) x = rng.uniform(-bound, bound);
        return t;
    };
    ModelParams p;
    p.embedding = fill({vocab_items + 1, d});
    for (int64_t l = 1; l <= hyper.effective_levels(); ++l) {
        int64_t in = hyper.variant == Variant::concat_window ? l * d : d;
        p.query_w.push_back(fill({d, in}));
    }
    for (int64_t h = 0; h < hyper.heads; ++h) p.attn_q.push_back(fill({d, d}));
    for (int64_t h = 0; h < hyper.heads; ++h) p.attn_k.push_back(fill({d, d}));
    p.merge_w = fill({d, hyper.heads * d + d});
    return p;
}

} // namespace attnmix::model
