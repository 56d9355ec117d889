#pragma once

#include "model/params.hpp"
#include "num/tape.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace attnmix::model {

using num::Tape;
using num::ValueRef;

// Optional item-encoder hook, applied to the gathered raw embedding rows of
// the session items before normalization. The default (absent) hook is the
// identity. Built from tape ops, so a hooked model stays trainable.
struct EncoderHook {
    std::function<ValueRef(Tape&, ValueRef)> fn;
};

// Supplies the noise tensor for one variational weight application.
using NoiseSupplier = std::function<ValueRef(Tape&, const std::string& weight, int64_t rows, int64_t cols)>;

struct ForwardOptions {
    const EncoderHook* hook = nullptr;
    NoiseSupplier noise; // required when any bound weight is variational
};

// A linear weight bound on the tape: either a plain matrix or a Gaussian
// posterior (mean, logvar) applied with the local reparameterization trick.
struct BoundLinear {
    ValueRef w;
    ValueRef logvar;
    bool variational = false;
    std::string name;
};

// Per-tape model state. norm_table and candidates are shared by every
// forward built on the same tape.
struct BoundModel {
    ValueRef embedding;
    ValueRef norm_table; // row-normalized table, (|V|+1) x d
    ValueRef candidates; // rows 1..|V| of norm_table
    std::vector<ValueRef> query_w;
    std::vector<BoundLinear> attn_q;
    std::vector<BoundLinear> attn_k;
    BoundLinear merge; // variational merge means are stored transposed, (H*d+d) x d
    HyperParams hyper;
    int64_t vocab_items = 0;
};

// Binds a model from named tape refs. A weight X is deterministic when the
// map holds "X", variational when it holds "X.theta" and "X.logvar".
BoundModel assemble_model(Tape& tape, const std::map<std::string, ValueRef>& refs,
                          const HyperParams& hyper);

// Convenience binding of plain parameters.
BoundModel bind_model(Tape& tape, const ModelParams& params, const HyperParams& hyper);

struct ForwardRefs {
    ValueRef keys;        // T x d processed (hooked, normalized) item rows
    ValueRef queries;     // l_eff x d
    ValueRef attention;   // T x (l_eff*H), level-major columns
    ValueRef session_raw; // concatenated per-head parts s^1..s^H before normalization
    ValueRef session;     // unit session embedding, H*d
    ValueRef local;       // unit last-item embedding, d
    ValueRef scores;      // distribution over the |V| real items
    int64_t len = 0;
    int64_t l_eff = 0;
};

// Builds one example's forward pass. items may be right-padded with index 0;
// len gives the true length and drives the key mask.
ForwardRefs build_forward(Tape& tape, const BoundModel& model, std::span<const int32_t> items,
                          int64_t len, const ForwardOptions* opts = nullptr);

// ---- plain-tensor surface ----

// Distribution over the |V| real items for one prefix.
Tensor forward(std::span<const int32_t> prefix, const ModelParams& params, const HyperParams& hyper,
               const EncoderHook* hook = nullptr);

struct ForwardTrace {
    Tensor keys, queries, attention, session_raw, session, local, scores;
    int64_t len = 0, l_eff = 0;
};

// Same as forward but keeps every intermediate; pad_to > len right-pads the
// prefix to that width so masking behaviour is observable.
ForwardTrace forward_trace(std::span<const int32_t> prefix, const ModelParams& params,
                           const HyperParams& hyper, const EncoderHook* hook = nullptr,
                           int64_t pad_to = 0);

// Padded-batch forward over `rows` examples of stride `width`; equivalent
// example-by-example to the unbatched forward.
std::vector<Tensor> forward_batch(std::span<const int32_t> items, std::span<const int32_t> lengths,
                                  int64_t width, const ModelParams& params, const HyperParams& hyper,
                                  const EncoderHook* hook = nullptr);

// ---- per-stage surface (used heavily by the test suites) ----

// Gathered, hooked, row-normalized embeddings of the given items.
Tensor embed_normalize(const ModelParams& params, std::span<const int32_t> items,
                       const EncoderHook* hook = nullptr);

// Multi-level intent queries from the valid key rows (last item at row n-1).
Tensor generate_queries(const Tensor& keys, const ModelParams& params, const HyperParams& hyper);

// Multi-head attention map, T x (l_eff*H); masked key positions are exactly 0.
Tensor attention_heads(const Tensor& queries, const Tensor& keys, const std::vector<uint8_t>& mask,
                       const ModelParams& params, const HyperParams& hyper);

// Lp (or max) mixture over levels followed by key aggregation; returns the
// unit session embedding of dimension H*d.
Tensor mix_and_embed(const Tensor& attention, const Tensor& keys, const HyperParams& hyper);

// Full-vocabulary scoring distribution from session and local vectors.
Tensor score(const Tensor& session, const Tensor& local, const ModelParams& params, double sigma);

} // namespace attnmix::model
