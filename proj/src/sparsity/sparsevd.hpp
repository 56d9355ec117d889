#pragma once

#include "data/dataset.hpp"
#include "model/params.hpp"
#include "num/tape.hpp"
#include "train/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace attnmix::sparsity {

using num::Tensor;

// Gaussian posterior per weight entry: N(mean_ij, exp(logvar_ij)).
struct VariationalWeight {
    Tensor mean;
    Tensor logvar;

    static VariationalWeight from_weights(const Tensor& w, double init_sigma2 = 1e-4);
};

// Local reparameterization of a linear layer: out = a*theta + sqrt((a∘a)*sigma2)∘eps
// with eps standard normal drawn from noise_seed.
Tensor variational_forward(const Tensor& a, const VariationalWeight& vw, uint64_t noise_seed);

// Closed-form sum of KL(N(theta, sigma2) || N(0,1)) over all entries:
// 0.5 * sum(sigma2 + theta^2 - 1 - log sigma2). Nonnegative, zero only at
// theta = 0, sigma2 = 1.
double kl_standard_normal(const VariationalWeight& vw);

// Same KL as a tape node over bound (theta, logvar) refs.
num::ValueRef kl_node(num::Tape& tape, num::ValueRef theta, num::ValueRef logvar);

// Fraction of entries with |w_ij| > threshold.
double density_ratio(const Tensor& w, double threshold);

struct ProbeConfig {
    double lambda = 1.0;
    double threshold = 0.01;
    // "merge_w", "attn_q", "attn_k" select weight families; attn entries
    // expand to one probed matrix per head.
    std::vector<std::string> matrices = {"merge_w", "attn_q", "attn_k"};
    train::TrainConfig train;
};

struct DensityRecord {
    int64_t epoch = 0; // 0 is the pre-training baseline
    std::string name;
    int64_t rows = 0;
    int64_t cols = 0;
    double threshold = 0.0;
    double rho = 0.0;
};

// Trains with the probed weights variational and the KL term weighted by
// lambda, recording the density ratio of each probed posterior mean per
// epoch. The probed merge posterior is stored transposed, (H*d+d) x d.
std::vector<DensityRecord> probe_run(const data::SessionDataset& ds, const model::HyperParams& hyper,
                                     const ProbeConfig& cfg);

std::string format_density_record(const DensityRecord& r);
DensityRecord parse_density_record(const std::string& line);
// Parses a whole series document, skipping '#' comment lines.
std::vector<DensityRecord> parse_density_series(const std::string& text);

} // namespace attnmix::sparsity
