#include "metrics/metrics.hpp"

#include "common/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

namespace attnmix::metrics {

int64_t rank_of_target(std::span<const double> scores, int32_t target) {
    int64_t n = static_cast<int64_t>(scores.size());
    if (target < 1 || target > n)
        raise(Errc::invalid_target, "target " + std::to_string(target) + " outside 1..|V|");
    double ts = scores[static_cast<size_t>(target - 1)];
    int64_t rank = 1;
    for (int64_t j = 0; j < n; ++j) {
        if (j == target - 1) continue;
        double s = scores[static_cast<size_t>(j)];
        if (s > ts || (s == ts && j < target - 1)) ++rank;
    }
    return rank;
}

HrMrr hr_mrr(std::span<const int64_t> ranks, int64_t k) {
    if (ranks.empty()) raise(Errc::empty_ranks, "hr_mrr over an empty rank list");
    if (k < 1) raise(Errc::invalid_argument, "cutoff must be >= 1");
    int64_t hits = 0;
    double rr = 0.0;
    for (int64_t r : ranks) {
        if (r <= k) {
            ++hits;
            rr += 1.0 / static_cast<double>(r);
        }
    }
    HrMrr out;
    out.hr = static_cast<double>(hits) / static_cast<double>(ranks.size());
    out.mrr = rr / static_cast<double>(ranks.size());
    return out;
}

MetricsReport evaluate(const model::ModelParams& params, const model::HyperParams& hyper,
                       const std::vector<data::TrainingExample>& examples,
                       const std::vector<int64_t>& cutoffs, const std::vector<int64_t>& bucket_edges) {
    if (examples.empty()) raise(Errc::empty_ranks, "no examples to evaluate");
    auto t0 = std::chrono::steady_clock::now();

    std::vector<int64_t> ranks(examples.size());
    std::vector<int64_t> lengths(examples.size());
    // chunked batched forward so the normalized table is shared
    const size_t chunk = 256;
    for (size_t base = 0; base < examples.size(); base += chunk) {
        size_t end = std::min(examples.size(), base + chunk);
        int64_t width = 0;
        for (size_t i = base; i < end; ++i)
            width = std::max<int64_t>(width, static_cast<int64_t>(examples[i].prefix.size()));
        std::vector<int32_t> items(static_cast<size_t>((end - base) * static_cast<size_t>(width)), 0);
        std::vector<int32_t> lens(end - base);
        for (size_t i = base; i < end; ++i) {
            const auto& p = examples[i].prefix;
            lens[i - base] = static_cast<int32_t>(p.size());
            std::copy(p.begin(), p.end(), items.begin() + static_cast<ptrdiff_t>((i - base) * static_cast<size_t>(width)));
        }
        std::vector<num::Tensor> dists = model::forward_batch(items, lens, width, params, hyper);
        for (size_t i = base; i < end; ++i) {
            ranks[i] = rank_of_target(dists[i - base].v, examples[i].target);
            lengths[i] = static_cast<int64_t>(examples[i].prefix.size());
        }
    }

    MetricsReport rep;
    rep.examples = static_cast<int64_t>(examples.size());
    for (int64_t k : cutoffs) rep.by_cutoff[k] = hr_mrr(ranks, k);

    int64_t lo = 1;
    std::vector<std::pair<int64_t, int64_t>> ranges;
    for (int64_t edge : bucket_edges) {
        ranges.emplace_back(lo, edge);
        lo = edge + 1;
    }
    ranges.emplace_back(lo, 0); // unbounded tail
    for (auto [mn, mx] : ranges) {
        BucketResult b;
        b.min_len = mn;
        b.max_len = mx;
        std::vector<int64_t> sel;
        for (size_t i = 0; i < ranks.size(); ++i)
            if (lengths[i] >= mn && (mx == 0 || lengths[i] <= mx)) sel.push_back(ranks[i]);
        b.examples = static_cast<int64_t>(sel.size());
        if (!sel.empty())
            for (int64_t k : cutoffs) b.by_cutoff[k] = hr_mrr(sel, k);
        rep.buckets.push_back(std::move(b));
    }

    auto t1 = std::chrono::steady_clock::now();
    rep.seconds = std::chrono::duration<double>(t1 - t0).count();
    return rep;
}

std::string MetricsReport::to_json(const std::string& config_echo) const {
    nlohmann::json j;
    j["examples"] = examples;
    j["seconds"] = seconds;
    for (const auto& [k, hm] : by_cutoff) {
        j["cutoffs"][std::to_string(k)]["hr"] = hm.hr;
        j["cutoffs"][std::to_string(k)]["mrr"] = hm.mrr;
    }
    j["buckets"] = nlohmann::json::array();
    for (const BucketResult& b : buckets) {
        nlohmann::json jb;
        jb["min_len"] = b.min_len;
        if (b.max_len > 0) jb["max_len"] = b.max_len;
        jb["examples"] = b.examples;
        for (const auto& [k, hm] : b.by_cutoff) {
            jb["cutoffs"][std::to_string(k)]["hr"] = hm.hr;
            jb["cutoffs"][std::to_string(k)]["mrr"] = hm.mrr;
        }
        j["buckets"].push_back(std::move(jb));
    }
    if (!config_echo.empty()) {
        j["config"] = nlohmann::json::parse(config_echo, nullptr, false);
        if (j["config"].is_discarded()) j["config"] = config_echo;
    }
    return j.dump(2);
}

std::string MetricsReport::to_table() const {
    std::string out = "bucket\texamples";
    for (const auto& [k, hm] : by_cutoff) {
        (void)hm;
        out += "\thr@" + std::to_string(k) + "\tmrr@" + std::to_string(k);
    }
    out += "\n";
    char buf[64];
    for (const BucketResult& b : buckets) {
        std::string label = std::to_string(b.min_len) + "-" +
                            (b.max_len > 0 ? std::to_string(b.max_len) : std::string("inf"));
        out += label + "\t" + std::to_string(b.examples);
        for (const auto& [k, hm] : by_cutoff) {
            auto it = b.by_cutoff.find(k);
            double hr = it == b.by_cutoff.end() ? 0.0 : it->second.hr;
            double mrr = it == b.by_cutoff.end() ? 0.0 : it->second.mrr;
            std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", hr, mrr);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

} // namespace attnmix::metrics
