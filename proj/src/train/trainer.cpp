#include "train/trainer.hpp"

#include "common/error.hpp"
#include "common/rng.hpp"
#include "metrics/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace attnmix::train {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) raise(Errc::invalid_config, "train.lr must be > 0");
    if (batch_size < 1) raise(Errc::invalid_config, "train.batch_size must be >= 1");
    if (max_epochs < 1) raise(Errc::invalid_config, "train.max_epochs must be >= 1");
    if (patience < 1) raise(Errc::invalid_config, "train.patience must be >= 1");
    if (weight_decay < 0.0) raise(Errc::invalid_config, "train.weight_decay must be >= 0");
}

double cross_entropy(const num::Tensor& yhat, int32_t target) {
    if (yhat.rank() != 1) raise(Errc::invalid_argument, "cross_entropy expects a rank-1 distribution");
    if (target < 1 || target > yhat.shape[0])
        raise(Errc::invalid_target, "target " + std::to_string(target) + " outside 1..|V|");
    double p = yhat.at(target - 1);
    if (p < 1e-30) p = 1e-30;
    return -std::log(p);
}

num::ValueRef cross_entropy_node(num::Tape& tape, num::ValueRef scores, int32_t target) {
    const num::Tensor& y = tape.value(scores);
    if (target < 1 || target > y.shape[0])
        raise(Errc::invalid_target, "target " + std::to_string(target) + " outside 1..|V|");
    num::ValueRef p = tape.pick(scores, target - 1);
    return tape.neg(tape.log(tape.clamp_min(p, 1e-30)));
}

namespace {

// Mean batch loss on one tape, then one Adam step. Returns summed example loss.
double train_batch(const data::Batch& batch, model::ModelParams& params,
                   const model::HyperParams& hyper, Adam& adam, double weight_decay) {
    num::Tape tape;
    std::map<std::string, num::ValueRef> refs;
    params.for_each([&tape, &refs](const std::string& name, num::Tensor& t) {
        refs[name] = tape.param(t);
    });
    model::BoundModel bound = model::assemble_model(tape, refs, hyper);

    std::vector<num::ValueRef> losses;
    losses.reserve(static_cast<size_t>(batch.rows));
    for (int64_t r = 0; r < batch.rows; ++r) {
        std::span<const int32_t> row(batch.items.data() + r * batch.width,
                                     static_cast<size_t>(batch.width));
        model::ForwardRefs fr =
            model::build_forward(tape, bound, row, batch.lengths[static_cast<size_t>(r)]);
        losses.push_back(cross_entropy_node(tape, fr.scores, batch.targets[static_cast<size_t>(r)]));
    }
    num::ValueRef loss = tape.mean_of(losses);
    if (weight_decay > 0.0) {
        num::ValueRef penalty{};
        bool first = true;
        for (const auto& [name, ref] : refs) {
            if (name == "embedding") continue; // keeps the padding row untouched
            num::ValueRef sq = tape.sum(tape.mul(ref, ref));
            penalty = first ? sq : tape.add(penalty, sq);
            first = false;
        }
        loss = tape.add(loss, tape.scale(penalty, 0.5 * weight_decay));
    }

    double batch_loss = tape.value(loss).v[0];
    if (!std::isfinite(batch_loss))
        raise(Errc::nonfinite_gradient, "non-finite loss in batch " + std::to_string(batch.index));
    tape.backward(loss);

    num::GradientRecord rec;
    rec.loss = batch_loss;
    for (const auto& [name, ref] : refs) {
        num::Tensor g = tape.gradient(ref);
        if (!g.all_finite())
            raise(Errc::nonfinite_gradient,
                  "non-finite gradient for " + name + " in batch " + std::to_string(batch.index));
        rec.grads.emplace(name, std::move(g));
    }
    std::map<std::string, num::Tensor*> targets;
    params.for_each([&targets](const std::string& name, num::Tensor& t) { targets[name] = &t; });
    adam.step(targets, rec);
    return batch_loss * static_cast<double>(batch.rows);
}

} // namespace

FitResult fit(const data::SessionDataset& ds, const model::HyperParams& hyper, const TrainConfig& cfg) {
    cfg.validate();
    hyper.validate();
    if (ds.train.empty()) raise(Errc::empty_input, "dataset has no training examples");
    if (ds.validation.empty()) raise(Errc::empty_input, "dataset has no validation examples");

    model::ModelParams params = model::init_params(ds.vocab.items(), hyper, cfg.seed);
    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    FitResult result;
    double best_mrr = -1.0;
    int64_t best_epoch = 0;
    int64_t since_best = 0;

    for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        data::BatchIter iter(ds.train, cfg.batch_size, shuffle_rng.next_u64());
        data::Batch batch;
        double loss_sum = 0.0;
        while (iter.next(batch)) loss_sum += train_batch(batch, params, hyper, adam, cfg.weight_decay);
        double mean_loss = loss_sum / static_cast<double>(ds.train.size());

        metrics::MetricsReport val =
            metrics::evaluate(params, hyper, ds.validation, {20}, {});
        auto t1 = std::chrono::steady_clock::now();

        EpochLog log;
        log.epoch = epoch;
        log.loss = mean_loss;
        log.hr20 = val.by_cutoff.at(20).hr;
        log.mrr20 = val.by_cutoff.at(20).mrr;
        log.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(log);
        result.epochs_run = epoch;

        if (log.mrr20 > best_mrr) {
            best_mrr = log.mrr20;
            best_epoch = epoch;
            since_best = 0;
            result.best.hyper = hyper;
            result.best.vocab_items = ds.vocab.items();
            result.best.vocab_hash = ds.vocab.content_hash();
            result.best.params = params; // snapshot
            result.best.epoch = epoch;
            result.best.val_mrr20 = log.mrr20;
            result.best.seed = cfg.seed;
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }
    (void)best_epoch;
    return result;
}

std::string format_epoch_log(const EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch=%lld loss=%.6f hr20=%.6f mrr20=%.6f seconds=%.3f",
                  static_cast<long long>(e.epoch), e.loss, e.hr20, e.mrr20, e.seconds);
    return buf;
}

} // namespace attnmix::train
