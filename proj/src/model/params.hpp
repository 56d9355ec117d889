#pragma once

#include "num/grad_check.hpp"
#include "num/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace attnmix::model {

using num::NamedTensors;
using num::Tensor;

// Model variants, selected by the config tokens in parentheses:
//   full (full)         multi-level suffix-window queries, Lp mixture
//   last_item (M)       single query from the last item only
//   all_items (IP)      every level's window is the whole session
//   concat_window (LI)  order-sensitive window concat instead of the set sum
//   max_mix (LP)        max over levels instead of Lp pooling
enum class Variant { full, last_item, all_items, concat_window, max_mix };

Variant variant_from_token(const std::string& token);
const char* variant_token(Variant v);

struct HyperParams {
    int64_t dim = 256;
    int64_t levels = 3;
    int64_t heads = 2;
    double sigma = 12.0; // softmax scale for scoring
    double p = 4.0;      // Lp mixture exponent
    Variant variant = Variant::full;

    // Query levels actually materialized: variant M keeps a single query.
    int64_t effective_levels() const { return variant == Variant::last_item ? 1 : levels; }
    void validate() const;
};

// Learnable state. Row 0 of the embedding table is the padding slot: it stays
// randomly initialized but masked everywhere, is never a scoring candidate,
// and must receive exactly zero gradient.
struct ModelParams {
    Tensor embedding;             // (|V|+1) x d
    std::vector<Tensor> query_w;  // level l: d x d (concat_window: d x (l*d))
    std::vector<Tensor> attn_q;   // per head: d x d
    std::vector<Tensor> attn_k;   // per head: d x d
    Tensor merge_w;               // d x (H*d + d)

    int64_t vocab_items() const { return embedding.shape.empty() ? 0 : embedding.shape[0] - 1; }
    int64_t dim() const { return embedding.shape.empty() ? 0 : embedding.shape[1]; }

    void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    NamedTensors to_named() const;
    static ModelParams from_named(const NamedTensors& named, const HyperParams& hyper);
};

// All weights uniform in [-1/sqrt(d), +1/sqrt(d)], deterministic per seed.
ModelParams init_params(int64_t vocab_items, const HyperParams& hyper, uint64_t seed);

} // namespace attnmix::model
