#pragma once

#include "data/dataset.hpp"
#include "model/params.hpp"
#include "sparsity/sparsevd.hpp"
#include "train/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace attnmix::config {

struct EvalConfig {
    std::vector<int64_t> cutoffs = {5, 10, 20};
    std::vector<int64_t> bucket_edges = {3, 6}; // buckets 1-3, 4-6, 7+
};

// Whole-pipeline configuration. Parsed strictly: unknown keys are rejected,
// every key has a default, and the effective document is echoed into every
// output artifact.
struct Config {
    data::PrepOptions data;
    model::HyperParams model;
    train::TrainConfig train;
    EvalConfig eval;
    sparsity::ProbeConfig probe;

    // Parses a JSON document (all sections optional) and layers it over the
    // defaults; then applies overrides the same way.
    static Config resolve(const std::string* file_json, const std::string* overrides_json);
    std::string to_json() const; // effective, fully-resolved document
    void validate() const;
};

} // namespace attnmix::config
