#pragma once

#include "num/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace attnmix::num {

struct ValueRef {
    int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

// Eager, single-use reverse-mode tape over the operation vocabulary the model
// needs. Every reduction runs in a fixed left-to-right order, so identical
// inputs produce identical bit patterns; backward replays nodes in reverse
// creation order.
class Tape {
public:
    ValueRef input(Tensor t);
    ValueRef param(Tensor t);

    const Tensor& value(ValueRef r) const;
    // Zero tensor when nothing flowed into r. Valid after backward().
    Tensor gradient(ValueRef r) const;

    // elementwise
    ValueRef add(ValueRef a, ValueRef b);
    ValueRef sub(ValueRef a, ValueRef b);
    ValueRef mul(ValueRef a, ValueRef b);
    ValueRef scale(ValueRef a, double c);
    ValueRef add_scalar(ValueRef a, double c);
    ValueRef exp(ValueRef a);
    ValueRef log(ValueRef a);
    ValueRef sqrt(ValueRef a);
    ValueRef pow_scalar(ValueRef a, double p); // values must be >= 0 for fractional p
    ValueRef clamp_min(ValueRef a, double c);
    ValueRef neg(ValueRef a) { return scale(a, -1.0); }

    // reductions and indexing
    ValueRef sum(ValueRef a);
    ValueRef dot(ValueRef a, ValueRef b);
    ValueRef pick(ValueRef a, int64_t i); // rank-1 -> scalar
    ValueRef row(ValueRef a, int64_t i);  // rank-2 -> rank-1
    ValueRef mean_of(std::span<const ValueRef> scalars);

    // linear algebra
    ValueRef matmul(ValueRef a, ValueRef b);    // [m,k]x[k,n]
    ValueRef matmul_nt(ValueRef a, ValueRef b); // a * b^T
    ValueRef matvec(ValueRef a, ValueRef x);    // [m,n]x[n] -> [m]
    ValueRef vecmat(ValueRef x, ValueRef a);    // [m]x[m,n] -> [n]

    // shape
    ValueRef concat(std::span<const ValueRef> vs);     // rank-1 pieces
    ValueRef stack_rows(std::span<const ValueRef> vs); // rank-1 pieces of equal dim
    ValueRef as_row(ValueRef v);                       // [n] -> [1,n]
    ValueRef as_vec(ValueRef m);                       // [1,n] -> [n]

    // gathering and windows
    ValueRef gather_rows(ValueRef table, std::vector<int32_t> indices);
    ValueRef sum_rows_range(ValueRef a, int64_t lo, int64_t hi);    // rows [lo,hi)
    ValueRef concat_rows_range(ValueRef a, int64_t lo, int64_t hi); // rows [lo,hi) flattened

    // normalization, attention and pooling
    ValueRef l2_normalize(ValueRef v);
    ValueRef l2_normalize_rows(ValueRef m);
    ValueRef softmax(ValueRef x, double sm_scale);
    // Row-wise softmax over the key axis; masked key columns come out exactly
    // 0 and propagate no gradient.
    ValueRef masked_softmax_rows(ValueRef logits, std::vector<uint8_t> key_mask, double sm_scale);
    ValueRef lp_pool(ValueRef values, double p); // rank-1 -> scalar

    // alpha[j, m*H + h] = attention of level m+1, head h+1 at key position j
    ValueRef interleave_attention(std::span<const ValueRef> heads); // H x [l,T] -> [T, l*H]
    // Pools each (level, head) column group of alpha with Lp (or max) over
    // levels and aggregates keys: returns the concatenated per-head session
    // vectors, dimension H*d.
    ValueRef mix_heads(ValueRef alpha, ValueRef keys, int64_t heads, double p, bool max_mode);

    // Local reparameterization of a linear layer: gamma = a*theta,
    // delta = (a∘a)*exp(logvar), out = gamma + sqrt(delta)∘eps.
    ValueRef variational_matmul(ValueRef a, ValueRef mean, ValueRef logvar, ValueRef eps);

    void backward(ValueRef loss);
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::function<void(Tape&, int32_t)> back; // empty for leaves
    };

    std::vector<Node> nodes_;

    ValueRef push(Tensor val, bool requires_grad, std::function<void(Tape&, int32_t)> back);
    const Tensor& val(int32_t i) const { return nodes_[static_cast<size_t>(i)].val; }
    Tensor& grad_buf(int32_t i);
    bool needs(ValueRef r) const { return nodes_[static_cast<size_t>(r.idx)].requires_grad; }
    void check(ValueRef r, const char* op) const;
};

} // namespace attnmix::num
