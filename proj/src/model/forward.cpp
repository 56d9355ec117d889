#include "model/forward.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>

namespace attnmix::model {

namespace {

ValueRef apply_linear_rows(Tape& tape, const BoundLinear& lin, ValueRef rows,
                           const ForwardOptions* opts) {
    if (!lin.variational) return tape.matmul(rows, lin.w);
    if (!opts || !opts->noise)
        raise(Errc::internal, "variational weight " + lin.name + " bound without a noise supplier");
    const Tensor& r = tape.value(rows);
    const Tensor& m = tape.value(lin.w);
    ValueRef eps = opts->noise(tape, lin.name, r.rows(), m.cols());
    return tape.variational_matmul(rows, lin.w, lin.logvar, eps);
}

ValueRef apply_merge(Tape& tape, const BoundLinear& merge, ValueRef vec, const ForwardOptions* opts) {
    if (!merge.variational) return tape.matvec(merge.w, vec);
    ValueRef row = tape.as_row(vec);
    return tape.as_vec(apply_linear_rows(tape, merge, row, opts));
}

ValueRef make_queries(Tape& tape, ValueRef keys, int64_t len, const std::vector<ValueRef>& query_w,
                      const HyperParams& hyper) {
    int64_t l_eff = std::min<int64_t>(hyper.effective_levels(), len);
    std::vector<ValueRef> rows;
    rows.reserve(static_cast<size_t>(l_eff));
    for (int64_t l = 1; l <= l_eff; ++l) {
        ValueRef group;
        switch (hyper.variant) {
            case Variant::last_item:
                group = tape.row(keys, len - 1);
                break;
            case Variant::all_items:
                group = tape.sum_rows_range(keys, 0, len);
                break;
            case Variant::concat_window:
                group = tape.concat_rows_range(keys, len - l, len);
                break;
            case Variant::full:
            case Variant::max_mix:
                group = tape.sum_rows_range(keys, len - l, len);
                break;
        }
        rows.push_back(tape.matvec(query_w[static_cast<size_t>(l - 1)], group));
    }
    return tape.stack_rows(rows);
}

std::vector<ValueRef> make_head_maps(Tape& tape, ValueRef queries, ValueRef keys,
                                     const std::vector<uint8_t>& mask,
                                     const std::vector<BoundLinear>& attn_q,
                                     const std::vector<BoundLinear>& attn_k, int64_t dim,
                                     const ForwardOptions* opts) {
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<ValueRef> maps;
    maps.reserve(attn_q.size());
    for (size_t h = 0; h < attn_q.size(); ++h) {
        ValueRef qw = apply_linear_rows(tape, attn_q[h], queries, opts);
        ValueRef kw = apply_linear_rows(tape, attn_k[h], keys, opts);
        ValueRef logits = tape.matmul_nt(qw, kw);
        maps.push_back(tape.masked_softmax_rows(logits, mask, inv_sqrt_d));
    }
    return maps;
}

} // namespace

BoundModel assemble_model(Tape& tape, const std::map<std::string, ValueRef>& refs,
                          const HyperParams& hyper) {
    hyper.validate();
    auto ref = [&refs](const std::string& name) {
        auto it = refs.find(name);
        if (it == refs.end()) raise(Errc::internal, "missing model weight " + name);
        return it->second;
    };
    auto linear = [&refs, &ref](const std::string& name) {
        BoundLinear lin;
        lin.name = name;
        auto theta = refs.find(name + ".theta");
        if (theta != refs.end()) {
            lin.variational = true;
            lin.w = theta->second;
            lin.logvar = ref(name + ".logvar");
        } else {
            lin.w = ref(name);
        }
        return lin;
    };

    BoundModel m;
    m.hyper = hyper;
    m.embedding = ref("embedding");
    const Tensor& table = tape.value(m.embedding);
    if (table.rank() != 2 || table.rows() < 2)
        raise(Errc::invalid_argument, "embedding table must have at least one item row");
    m.vocab_items = table.rows() - 1;
    m.norm_table = tape.l2_normalize_rows(m.embedding);
    std::vector<int32_t> cand(static_cast<size_t>(m.vocab_items));
    for (int64_t j = 0; j < m.vocab_items; ++j) cand[static_cast<size_t>(j)] = static_cast<int32_t>(j + 1);
    m.candidates = tape.gather_rows(m.norm_table, std::move(cand));
    for (int64_t l = 1; l <= hyper.effective_levels(); ++l)
        m.query_w.push_back(ref("query_w." + std::to_string(l)));
    for (int64_t h = 1; h <= hyper.heads; ++h) {
        m.attn_q.push_back(linear("attn_q." + std::to_string(h)));
        m.attn_k.push_back(linear("attn_k." + std::to_string(h)));
    }
    m.merge = linear("merge_w");
    return m;
}

BoundModel bind_model(Tape& tape, const ModelParams& params, const HyperParams& hyper) {
    std::map<std::string, ValueRef> refs;
    params.for_each([&tape, &refs](const std::string& name, const Tensor& t) {
        refs[name] = tape.param(t);
    });
    return assemble_model(tape, refs, hyper);
}

ForwardRefs build_forward(Tape& tape, const BoundModel& model, std::span<const int32_t> items,
                          int64_t len, const ForwardOptions* opts) {
    int64_t width = static_cast<int64_t>(items.size());
    if (len < 1 || len > width)
        raise(Errc::invalid_argument, "forward needs a nonempty prefix within the padded width");
    for (int64_t j = 0; j < width; ++j) {
        int32_t ix = items[static_cast<size_t>(j)];
        bool valid = j < len ? (ix >= 1 && ix <= model.vocab_items) : (ix >= 0 && ix <= model.vocab_items);
        if (!valid)
            raise(Errc::invalid_argument,
                  "item index " + std::to_string(ix) + " outside 1..|V| at position " + std::to_string(j));
    }
    const HyperParams& hp = model.hyper;

    ForwardRefs fr;
    fr.len = len;
    fr.l_eff = std::min<int64_t>(hp.effective_levels(), len);

    std::vector<int32_t> idx(items.begin(), items.end());
    if (opts && opts->hook && opts->hook->fn) {
        ValueRef raw = tape.gather_rows(model.embedding, std::move(idx));
        ValueRef hooked = opts->hook->fn(tape, raw);
        fr.keys = tape.l2_normalize_rows(hooked);
    } else {
        fr.keys = tape.gather_rows(model.norm_table, std::move(idx));
    }
    fr.local = tape.row(fr.keys, len - 1);
    fr.queries = make_queries(tape, fr.keys, len, model.query_w, hp);

    std::vector<uint8_t> mask(static_cast<size_t>(width), 0);
    for (int64_t j = 0; j < len; ++j) mask[static_cast<size_t>(j)] = 1;
    std::vector<ValueRef> maps =
        make_head_maps(tape, fr.queries, fr.keys, mask, model.attn_q, model.attn_k, hp.dim, opts);
    fr.attention = tape.interleave_attention(maps);

    fr.session_raw = tape.mix_heads(fr.attention, fr.keys, hp.heads, hp.p,
                                    hp.variant == Variant::max_mix);
    fr.session = tape.l2_normalize(fr.session_raw);

    std::vector<ValueRef> pieces{fr.session, fr.local};
    ValueRef cvec = tape.concat(pieces);
    ValueRef pref = apply_merge(tape, model.merge, cvec, opts);
    ValueRef zhat = tape.matvec(model.candidates, pref);
    fr.scores = tape.softmax(zhat, hp.sigma);
    return fr;
}

Tensor forward(std::span<const int32_t> prefix, const ModelParams& params, const HyperParams& hyper,
               const EncoderHook* hook) {
    Tape tape;
    BoundModel m = bind_model(tape, params, hyper);
    ForwardOptions opts;
    opts.hook = hook;
    ForwardRefs fr = build_forward(tape, m, prefix, static_cast<int64_t>(prefix.size()), &opts);
    return tape.value(fr.scores);
}

ForwardTrace forward_trace(std::span<const int32_t> prefix, const ModelParams& params,
                           const HyperParams& hyper, const EncoderHook* hook, int64_t pad_to) {
    Tape tape;
    BoundModel m = bind_model(tape, params, hyper);
    ForwardOptions opts;
    opts.hook = hook;
    int64_t len = static_cast<int64_t>(prefix.size());
    std::vector<int32_t> padded(prefix.begin(), prefix.end());
    if (pad_to > len) padded.resize(static_cast<size_t>(pad_to), 0);
    ForwardRefs fr = build_forward(tape, m, padded, len, &opts);
    ForwardTrace tr;
    tr.keys = tape.value(fr.keys);
    tr.queries = tape.value(fr.queries);
    tr.attention = tape.value(fr.attention);
    tr.session_raw = tape.value(fr.session_raw);
    tr.session = tape.value(fr.session);
    tr.local = tape.value(fr.local);
    tr.scores = tape.value(fr.scores);
    tr.len = fr.len;
    tr.l_eff = fr.l_eff;
    return tr;
}

std::vector<Tensor> forward_batch(std::span<const int32_t> items, std::span<const int32_t> lengths,
                                  int64_t width, const ModelParams& params, const HyperParams& hyper,
                                  const EncoderHook* hook) {
    int64_t rows = static_cast<int64_t>(lengths.size());
    if (width < 1 || static_cast<int64_t>(items.size()) != rows * width)
        raise(Errc::invalid_argument, "forward_batch shape mismatch");
    Tape tape;
    BoundModel m = bind_model(tape, params, hyper);
    ForwardOptions opts;
    opts.hook = hook;
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        std::span<const int32_t> row = items.subspan(static_cast<size_t>(r * width), static_cast<size_t>(width));
        ForwardRefs fr = build_forward(tape, m, row, lengths[static_cast<size_t>(r)], &opts);
        out.push_back(tape.value(fr.scores));
    }
    return out;
}

Tensor embed_normalize(const ModelParams& params, std::span<const int32_t> items,
                       const EncoderHook* hook) {
    if (items.empty()) raise(Errc::invalid_argument, "embed_normalize needs a nonempty prefix");
    Tape tape;
    ValueRef table = tape.input(params.embedding);
    for (int32_t ix : items)
        if (ix < 0 || ix > params.vocab_items())
            raise(Errc::invalid_argument, "item index " + std::to_string(ix) + " outside the vocabulary");
    std::vector<int32_t> idx(items.begin(), items.end());
    ValueRef raw = tape.gather_rows(table, std::move(idx));
    if (hook && hook->fn) raw = hook->fn(tape, raw);
    return tape.value(tape.l2_normalize_rows(raw));
}

Tensor generate_queries(const Tensor& keys, const ModelParams& params, const HyperParams& hyper) {
    if (keys.rank() != 2) raise(Errc::invalid_argument, "generate_queries expects rank-2 keys");
    Tape tape;
    ValueRef k = tape.input(keys);
    std::vector<ValueRef> qw;
    for (const Tensor& w : params.query_w) qw.push_back(tape.input(w));
    return tape.value(make_queries(tape, k, keys.rows(), qw, hyper));
}

Tensor attention_heads(const Tensor& queries, const Tensor& keys, const std::vector<uint8_t>& mask,
                       const ModelParams& params, const HyperParams& hyper) {
    Tape tape;
    ValueRef q = tape.input(queries);
    ValueRef k = tape.input(keys);
    std::vector<BoundLinear> wq, wk;
    for (size_t h = 0; h < params.attn_q.size(); ++h) {
        wq.push_back({tape.input(params.attn_q[h]), {}, false, "attn_q." + std::to_string(h + 1)});
        wk.push_back({tape.input(params.attn_k[h]), {}, false, "attn_k." + std::to_string(h + 1)});
    }
    std::vector<ValueRef> maps = make_head_maps(tape, q, k, mask, wq, wk, hyper.dim, nullptr);
    return tape.value(tape.interleave_attention(maps));
}

Tensor mix_and_embed(const Tensor& attention, const Tensor& keys, const HyperParams& hyper) {
    Tape tape;
    ValueRef a = tape.input(attention);
    ValueRef k = tape.input(keys);
    ValueRef mixed = tape.mix_heads(a, k, hyper.heads, hyper.p, hyper.variant == Variant::max_mix);
    return tape.value(tape.l2_normalize(mixed));
}

Tensor score(const Tensor& session, const Tensor& local, const ModelParams& params, double sigma) {
    Tape tape;
    ValueRef table = tape.input(params.embedding);
    ValueRef norm = tape.l2_normalize_rows(table);
    std::vector<int32_t> cand(static_cast<size_t>(params.vocab_items()));
    for (size_t j = 0; j < cand.size(); ++j) cand[j] = static_cast<int32_t>(j + 1);
    ValueRef candidates = tape.gather_rows(norm, std::move(cand));
    ValueRef s = tape.input(session);
    ValueRef loc = tape.input(local);
    std::vector<ValueRef> pieces{s, loc};
    ValueRef cvec = tape.concat(pieces);
    ValueRef merge = tape.input(params.merge_w);
    ValueRef pref = tape.matvec(merge, cvec);
    ValueRef zhat = tape.matvec(candidates, pref);
    return tape.value(tape.softmax(zhat, sigma));
}

} // namespace attnmix::model
