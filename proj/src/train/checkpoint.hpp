#pragma once

#include "model/params.hpp"

#include <cstdint>
#include <string>

namespace attnmix::train {

// Self-describing persisted model: magic bytes, format version, metadata,
// named little-endian float64 arrays, trailing content hash. Round trips are
// bit exact.
struct Checkpoint {
    uint32_t version = 1;
    model::HyperParams hyper;
    int64_t vocab_items = 0;
    uint64_t vocab_hash = 0;
    model::ModelParams params;
    int64_t epoch = 0;
    double val_mrr20 = 0.0;
    uint64_t seed = 0;
    std::string config_json; // effective config echo
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace attnmix::train
