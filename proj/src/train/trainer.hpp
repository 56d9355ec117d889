#pragma once

#include "data/dataset.hpp"
#include "model/forward.hpp"
#include "model/params.hpp"
#include "train/adam.hpp"
#include "train/checkpoint.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace attnmix::train {

struct TrainConfig {
    double lr = 1e-3;
    int64_t batch_size = 100;
    int64_t max_epochs = 30;
    int64_t patience = 3; // epochs without validation improvement
    uint64_t seed = 42;
    double weight_decay = 0.0; // L2 on non-embedding weights

    void validate() const;
};

struct EpochLog {
    int64_t epoch = 0;   // 1-based
    double loss = 0.0;   // mean example loss over the epoch
    double hr20 = 0.0;   // validation
    double mrr20 = 0.0;  // validation
    double seconds = 0.0;
};

struct FitResult {
    Checkpoint best;
    std::vector<EpochLog> log;
    int64_t epochs_run = 0;
};

// -log(yhat[target]) with the probability floored at 1e-30.
double cross_entropy(const num::Tensor& yhat, int32_t target);

// Same loss as a tape node over a forward's score vector.
num::ValueRef cross_entropy_node(num::Tape& tape, num::ValueRef scores, int32_t target);

// Epoch loop with seeded shuffling, mean-loss batches, validation HR@20 /
// MRR@20 after each epoch, best-MRR@20 model selection and early stopping.
FitResult fit(const data::SessionDataset& ds, const model::HyperParams& hyper, const TrainConfig& cfg);

std::string format_epoch_log(const EpochLog& e);

} // namespace attnmix::train
