#pragma once

#include "data/dataset.hpp"
#include "model/forward.hpp"
#include "model/params.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace attnmix::metrics {

// 1-based rank of the target by descending score; ties broken by ascending
// item index. target is an item index in 1..|V|; scores[j] belongs to item
// j+1.
int64_t rank_of_target(std::span<const double> scores, int32_t target);

struct HrMrr {
    double hr = 0.0;
    double mrr = 0.0;
};

// HR@K = fraction of ranks <= K; MRR@K averages 1/rank over all examples,
// counting rank > K as 0.
HrMrr hr_mrr(std::span<const int64_t> ranks, int64_t k);

struct BucketResult {
    int64_t min_len = 0;
    int64_t max_len = 0; // 0 = unbounded
    int64_t examples = 0;
    std::map<int64_t, HrMrr> by_cutoff;
};

struct MetricsReport {
    int64_t examples = 0;
    double seconds = 0.0;
    std::map<int64_t, HrMrr> by_cutoff;
    std::vector<BucketResult> buckets;

    std::string to_json(const std::string& config_echo) const;
    std::string to_table() const; // tab-separated bucket table
};

// Evaluates a frozen model over test examples, bucketing by prefix length.
// bucket_edges are inclusive upper bounds; a final unbounded bucket is
// appended (edges {3,6} give 1-3, 4-6, 7+).
MetricsReport evaluate(const model::ModelParams& params, const model::HyperParams& hyper,
                       const std::vector<data::TrainingExample>& examples,
                       const std::vector<int64_t>& cutoffs, const std::vector<int64_t>& bucket_edges);

} // namespace attnmix::metrics
