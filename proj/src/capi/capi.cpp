#include "attnmix.h"

#include "common/binio.hpp"
#include "common/config.hpp"
#include "common/error.hpp"
#include "data/dataset.hpp"
#include "metrics/metrics.hpp"
#include "model/forward.hpp"
#include "sparsity/sparsevd.hpp"
#include "train/checkpoint.hpp"
#include "train/trainer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <string>

using namespace attnmix;
using nlohmann::json;

struct am_dataset {
    data::SessionDataset ds;
};

struct am_model {
    train::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

am_status to_status(Errc c) {
    return static_cast<am_status>(static_cast<int>(c));
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <class Fn>
am_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return AM_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return AM_ERR_INTERNAL;
    }
}

config::Config parse_config(const char* effective_json) {
    if (!effective_json) raise(Errc::invalid_argument, "config text is null");
    std::string text(effective_json);
    return config::Config::resolve(&text, nullptr);
}

json summary_json(const data::Provenance& p) {
    json j;
    // Table-1 shaped headline: sessions counts the augmented examples
    j["clicks"] = p.clicks;
    j["sessions"] = p.augmented_examples;
    j["items"] = p.items;
    j["avg_length"] = p.avg_length;
    json d;
    d["source"] = p.source;
    d["format"] = p.format;
    d["raw_events"] = p.raw_events;
    d["raw_streams"] = p.raw_streams;
    d["filtered_sessions"] = p.sessions;
    d["train_sessions"] = p.train_sessions;
    d["test_sessions"] = p.test_sessions;
    d["dropped_test_events"] = p.dropped_test_events;
    d["dropped_test_sessions"] = p.dropped_test_sessions;
    d["dropped_short_sessions"] = p.dropped_short_sessions;
    d["min_session_len"] = p.min_session_len;
    d["min_item_freq"] = p.min_item_freq;
    d["top_k_items"] = p.top_k_items;
    d["split_rule"] = p.split_rule;
    d["gap_seconds"] = p.gap_seconds;
    d["validation_fraction"] = p.validation_fraction;
    j["detail"] = std::move(d);
    if (!p.config_json.empty()) {
        json cfg = json::parse(p.config_json, nullptr, false);
        if (!cfg.is_discarded()) j["config"] = std::move(cfg);
    }
    return j;
}

void require_out(void* p, const char* what) {
    if (!p) raise(Errc::invalid_argument, std::string(what) + " is null");
}

void check_compatibility(const am_model* m, const am_dataset* ds) {
    if (m->ckpt.vocab_items != ds->ds.vocab.items() ||
        m->ckpt.vocab_hash != ds->ds.vocab.content_hash())
        raise(Errc::vocabulary_mismatch,
              "checkpoint vocabulary digest does not match the dataset cache");
}

} // namespace

extern "C" {

unsigned am_abi_version(void) {
    return 1;
}

const char* am_status_name(am_status s) {
    switch (s) {
        case AM_OK: return "ok";
        case AM_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case AM_ERR_DEGENERATE_NORM: return "degenerate_norm";
        case AM_ERR_INVALID_P: return "invalid_p";
        case AM_ERR_NONFINITE_INPUT: return "nonfinite_input";
        case AM_ERR_NONFINITE_GRADIENT: return "nonfinite_gradient";
        case AM_ERR_NONFINITE_UPDATE: return "nonfinite_update";
        case AM_ERR_PARSE: return "parse_error";
        case AM_ERR_EMPTY_INPUT: return "empty_input";
        case AM_ERR_EMPTY_AFTER_FILTER: return "empty_after_filter";
        case AM_ERR_INVALID_RULE: return "invalid_rule";
        case AM_ERR_INVALID_TARGET: return "invalid_target";
        case AM_ERR_EMPTY_RANKS: return "empty_ranks";
        case AM_ERR_VERSION_MISMATCH: return "version_mismatch";
        case AM_ERR_CORRUPT_CHECKPOINT: return "corrupt_checkpoint";
        case AM_ERR_VOCABULARY_MISMATCH: return "vocabulary_mismatch";
        case AM_ERR_UNKNOWN_ITEM: return "unknown_item";
        case AM_ERR_INVALID_CONFIG: return "invalid_config";
        case AM_ERR_IO: return "io_error";
        case AM_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* am_last_error(void) {
    return g_last_error.c_str();
}

void am_string_free(char* s) {
    std::free(s);
}

am_status am_config_resolve(const char* config_json, const char* overrides_json,
                            char** out_effective_json) {
    return guarded([&] {
        require_out(out_effective_json, "out_effective_json");
        std::string file = config_json ? config_json : "";
        std::string over = overrides_json ? overrides_json : "";
        config::Config c = config::Config::resolve(config_json ? &file : nullptr,
                                                   overrides_json ? &over : nullptr);
        *out_effective_json = dup_string(c.to_json());
    });
}

am_status am_prep(const char* effective_config_json, const char* out_cache_path,
                  char** out_summary_json) {
    return guarded([&] {
        require_out(out_summary_json, "out_summary_json");
        if (!out_cache_path) raise(Errc::invalid_argument, "cache path is null");
        config::Config c = parse_config(effective_config_json);
        if (c.data.input.empty()) raise(Errc::invalid_config, "data.input is not set");
        data::SessionDataset ds = data::prep_dataset(c.data);
        ds.prov.config_json = c.to_json();
        data::save_cache(ds, out_cache_path);
        *out_summary_json = dup_string(summary_json(ds.prov).dump(2));
    });
}

am_status am_dataset_open(const char* cache_path, am_dataset** out) {
    return guarded([&] {
        require_out(out, "out");
        if (!cache_path) raise(Errc::invalid_argument, "cache path is null");
        auto* handle = new am_dataset{data::load_cache(cache_path)};
        *out = handle;
    });
}

void am_dataset_close(am_dataset* ds) {
    delete ds;
}

am_status am_dataset_summary(const am_dataset* ds, char** out_json) {
    return guarded([&] {
        require_out(out_json, "out_json");
        if (!ds) raise(Errc::invalid_argument, "dataset handle is null");
        json j = summary_json(ds->ds.prov);
        j["train_examples"] = ds->ds.train.size();
        j["validation_examples"] = ds->ds.validation.size();
        j["test_examples"] = ds->ds.test.size();
        *out_json = dup_string(j.dump(2));
    });
}

am_status am_train(const am_dataset* ds, const char* effective_config_json,
                   const char* out_checkpoint_path, const char* out_log_path,
                   char** out_result_json) {
    return guarded([&] {
        require_out(out_result_json, "out_result_json");
        if (!ds) raise(Errc::invalid_argument, "dataset handle is null");
        if (!out_checkpoint_path) raise(Errc::invalid_argument, "checkpoint path is null");
        config::Config c = parse_config(effective_config_json);
        train::FitResult fit = train::fit(ds->ds, c.model, c.train);
        fit.best.config_json = c.to_json();
        train::save_checkpoint(fit.best, out_checkpoint_path);
        std::string log_text = "# config: " + json::parse(c.to_json()).dump() +
                               "\n# seed: " + std::to_string(c.train.seed) + "\n";
        for (const train::EpochLog& e : fit.log) log_text += train::format_epoch_log(e) + "\n";
        if (out_log_path) io::write_text_file(out_log_path, log_text);
        json j;
        j["checkpoint"] = out_checkpoint_path;
        if (out_log_path) j["log"] = out_log_path;
        j["epochs_run"] = fit.epochs_run;
        j["best_epoch"] = fit.best.epoch;
        j["best_val_mrr20"] = fit.best.val_mrr20;
        j["seed"] = c.train.seed;
        j["config"] = json::parse(c.to_json());
        *out_result_json = dup_string(j.dump(2));
    });
}

am_status am_model_open(const char* checkpoint_path, am_model** out) {
    return guarded([&] {
        require_out(out, "out");
        if (!checkpoint_path) raise(Errc::invalid_argument, "checkpoint path is null");
        auto* handle = new am_model{train::load_checkpoint(checkpoint_path)};
        *out = handle;
    });
}

void am_model_close(am_model* m) {
    delete m;
}

am_status am_model_info(const am_model* m, char** out_json) {
    return guarded([&] {
        require_out(out_json, "out_json");
        if (!m) raise(Errc::invalid_argument, "model handle is null");
        json j;
        j["d"] = m->ckpt.hyper.dim;
        j["levels"] = m->ckpt.hyper.levels;
        j["heads"] = m->ckpt.hyper.heads;
        j["sigma"] = m->ckpt.hyper.sigma;
        j["p"] = m->ckpt.hyper.p;
        j["variant"] = model::variant_token(m->ckpt.hyper.variant);
        j["vocab_items"] = m->ckpt.vocab_items;
        j["vocab_hash"] = m->ckpt.vocab_hash;
        j["epoch"] = m->ckpt.epoch;
        j["val_mrr20"] = m->ckpt.val_mrr20;
        j["seed"] = m->ckpt.seed;
        *out_json = dup_string(j.dump(2));
    });
}

am_status am_evaluate(const am_model* m, const am_dataset* ds, const char* effective_config_json,
                      char** out_report_json) {
    return guarded([&] {
        require_out(out_report_json, "out_report_json");
        if (!m || !ds) raise(Errc::invalid_argument, "model/dataset handle is null");
        check_compatibility(m, ds);
        config::Config c = parse_config(effective_config_json);
        // hyperparameters come from the checkpoint, not the eval config
        metrics::MetricsReport rep = metrics::evaluate(m->ckpt.params, m->ckpt.hyper, ds->ds.test,
                                                       c.eval.cutoffs, c.eval.bucket_edges);
        json j = json::parse(rep.to_json(c.to_json()));
        j["table"] = rep.to_table();
        j["checkpoint_epoch"] = m->ckpt.epoch;
        j["checkpoint_val_mrr20"] = m->ckpt.val_mrr20;
        j["checkpoint_seed"] = m->ckpt.seed;
        *out_report_json = dup_string(j.dump(2));
    });
}

am_status am_recommend(const am_model* m, const am_dataset* ds, const char* const* item_ids,
                       size_t n_items, size_t topk, char** out_json) {
    return guarded([&] {
        require_out(out_json, "out_json");
        if (!m || !ds) raise(Errc::invalid_argument, "model/dataset handle is null");
        if (!item_ids || n_items == 0) raise(Errc::invalid_argument, "session is empty");
        if (topk == 0) raise(Errc::invalid_argument, "topk must be >= 1");
        check_compatibility(m, ds);

        std::vector<int32_t> prefix;
        std::string unknown;
        for (size_t i = 0; i < n_items; ++i) {
            if (!item_ids[i]) raise(Errc::invalid_argument, "null item id");
            int32_t ix = ds->ds.vocab.lookup(item_ids[i]);
            if (ix == 0) {
                if (!unknown.empty()) unknown += ", ";
                unknown += item_ids[i];
            } else {
                prefix.push_back(ix);
            }
        }
        if (!unknown.empty()) raise(Errc::unknown_item, "unknown item ids: " + unknown);

        num::Tensor dist = model::forward(prefix, m->ckpt.params, m->ckpt.hyper);
        std::vector<int64_t> order(static_cast<size_t>(dist.shape[0]));
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
        std::sort(order.begin(), order.end(), [&dist](int64_t a, int64_t b) {
            if (dist.at(a) != dist.at(b)) return dist.at(a) > dist.at(b);
            return a < b;
        });
        size_t k = std::min(topk, order.size());
        json arr = json::array();
        for (size_t i = 0; i < k; ++i) {
            json row;
            row["item"] = ds->ds.vocab.ids[static_cast<size_t>(order[i] + 1)];
            row["score"] = dist.at(order[i]);
            arr.push_back(std::move(row));
        }
        *out_json = dup_string(arr.dump());
    });
}

am_status am_probe(const am_dataset* ds, const char* effective_config_json,
                   char** out_series_text) {
    return guarded([&] {
        require_out(out_series_text, "out_series_text");
        if (!ds) raise(Errc::invalid_argument, "dataset handle is null");
        config::Config c = parse_config(effective_config_json);
        std::vector<sparsity::DensityRecord> series = sparsity::probe_run(ds->ds, c.model, c.probe);
        nlohmann::json cfg = json::parse(c.to_json());
        std::string text = "# config: " + cfg.dump() + "\n# seed: " + std::to_string(c.train.seed) + "\n";
        for (const auto& r : series) text += sparsity::format_density_record(r) + "\n";
        *out_series_text = dup_string(text);
    });
}

} // extern "C"
