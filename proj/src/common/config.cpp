#include "common/config.hpp"

#include "common/error.hpp"

#include "json.hpp"

#include <set>

namespace attnmix::config {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    raise(Errc::invalid_config, "config key " + path + ": " + what);
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) bad(path, "expected an object");
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            raise(Errc::invalid_config, "unknown config key " + (path.empty() ? key : path + "." + key));
    }
}

int64_t as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) bad(path, "expected an integer");
    return j.get<int64_t>();
}

double as_num(const json& j, const std::string& path) {
    if (!j.is_number()) bad(path, "expected a number");
    return j.get<double>();
}

std::string as_str(const json& j, const std::string& path) {
    if (!j.is_string()) bad(path, "expected a string");
    return j.get<std::string>();
}

std::vector<int64_t> as_int_list(const json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array of integers");
    std::vector<int64_t> out;
    for (const auto& e : j) out.push_back(as_int(e, path));
    return out;
}

void apply_data(data::PrepOptions& d, std::string& split_token, double& split_fraction, const json& j) {
    expect_object(j, "data");
    check_keys(j, "data",
               {"input", "format", "min_session_len", "min_item_freq", "top_k_items", "split_rule",
                "split_fraction", "gap_seconds", "validation_fraction"});
    if (j.contains("input")) d.input = as_str(j["input"], "data.input");
    if (j.contains("format")) d.format = data::format_from_token(as_str(j["format"], "data.format"));
    if (j.contains("min_session_len")) d.min_session_len = as_int(j["min_session_len"], "data.min_session_len");
    if (j.contains("min_item_freq")) d.min_item_freq = as_int(j["min_item_freq"], "data.min_item_freq");
    if (j.contains("top_k_items")) d.top_k_items = as_int(j["top_k_items"], "data.top_k_items");
    if (j.contains("split_rule")) split_token = as_str(j["split_rule"], "data.split_rule");
    if (j.contains("split_fraction")) split_fraction = as_num(j["split_fraction"], "data.split_fraction");
    if (j.contains("gap_seconds")) d.gap_seconds = as_int(j["gap_seconds"], "data.gap_seconds");
    if (j.contains("validation_fraction"))
        d.validation_fraction = as_num(j["validation_fraction"], "data.validation_fraction");
}

void apply_model(model::HyperParams& m, const json& j) {
    expect_object(j, "model");
    check_keys(j, "model", {"d", "levels", "heads", "sigma", "p", "variant"});
    if (j.contains("d")) m.dim = as_int(j["d"], "model.d");
    if (j.contains("levels")) m.levels = as_int(j["levels"], "model.levels");
    if (j.contains("heads")) m.heads = as_int(j["heads"], "model.heads");
    if (j.contains("sigma")) m.sigma = as_num(j["sigma"], "model.sigma");
    if (j.contains("p")) m.p = as_num(j["p"], "model.p");
    if (j.contains("variant")) m.variant = model::variant_from_token(as_str(j["variant"], "model.variant"));
}

void apply_train(train::TrainConfig& t, const json& j) {
    expect_object(j, "train");
    check_keys(j, "train", {"lr", "batch_size", "max_epochs", "patience", "seed", "weight_decay"});
    if (j.contains("lr")) t.lr = as_num(j["lr"], "train.lr");
    if (j.contains("batch_size")) t.batch_size = as_int(j["batch_size"], "train.batch_size");
    if (j.contains("max_epochs")) t.max_epochs = as_int(j["max_epochs"], "train.max_epochs");
    if (j.contains("patience")) t.patience = as_int(j["patience"], "train.patience");
    if (j.contains("seed")) t.seed = static_cast<uint64_t>(as_int(j["seed"], "train.seed"));
    if (j.contains("weight_decay")) t.weight_decay = as_num(j["weight_decay"], "train.weight_decay");
}

void apply_eval(EvalConfig& e, const json& j) {
    expect_object(j, "eval");
    check_keys(j, "eval", {"cutoffs", "length_buckets"});
    if (j.contains("cutoffs")) e.cutoffs = as_int_list(j["cutoffs"], "eval.cutoffs");
    if (j.contains("length_buckets")) e.bucket_edges = as_int_list(j["length_buckets"], "eval.length_buckets");
}

void apply_probe(sparsity::ProbeConfig& p, const json& j) {
    expect_object(j, "probe");
    check_keys(j, "probe", {"lambda", "threshold", "matrices"});
    if (j.contains("lambda")) p.lambda = as_num(j["lambda"], "probe.lambda");
    if (j.contains("threshold")) p.threshold = as_num(j["threshold"], "probe.threshold");
    if (j.contains("matrices")) {
        if (!j["matrices"].is_array()) bad("probe.matrices", "expected an array of strings");
        p.matrices.clear();
        for (const auto& e : j["matrices"]) p.matrices.push_back(as_str(e, "probe.matrices"));
    }
}

void apply_document(Config& c, std::string& split_token, double& split_fraction, const json& j) {
    expect_object(j, "");
    check_keys(j, "", {"data", "model", "train", "eval", "probe"});
    if (j.contains("data")) apply_data(c.data, split_token, split_fraction, j["data"]);
    if (j.contains("model")) apply_model(c.model, j["model"]);
    if (j.contains("train")) apply_train(c.train, j["train"]);
    if (j.contains("eval")) apply_eval(c.eval, j["eval"]);
    if (j.contains("probe")) apply_probe(c.probe, j["probe"]);
}

json parse_json(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) raise(Errc::invalid_config, std::string(what) + " is not valid JSON");
    return j;
}

} // namespace

Config Config::resolve(const std::string* file_json, const std::string* overrides_json) {
    Config c;
    std::string split_token = "last-fraction";
    double split_fraction = 0.2;
    if (file_json) apply_document(c, split_token, split_fraction, parse_json(*file_json, "config file"));
    if (overrides_json)
        apply_document(c, split_token, split_fraction, parse_json(*overrides_json, "config overrides"));
    c.data.split = data::SplitRule::parse(split_token, split_fraction);
    c.probe.train = c.train; // the probe optimizes with the train settings
    c.validate();
    return c;
}

void Config::validate() const {
    model.validate();
    train.validate();
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0))
        raise(Errc::invalid_config, "data.validation_fraction must lie in [0,1)");
    if (data.min_session_len < 0 || data.min_item_freq < 0 || data.top_k_items < 0)
        raise(Errc::invalid_config, "data thresholds must be nonnegative");
    if (data.gap_seconds < 0) raise(Errc::invalid_config, "data.gap_seconds must be >= 0");
    if (eval.cutoffs.empty()) raise(Errc::invalid_config, "eval.cutoffs must not be empty");
    for (int64_t k : eval.cutoffs)
        if (k < 1) raise(Errc::invalid_config, "eval.cutoffs entries must be >= 1");
    int64_t prev = 0;
    for (int64_t e : eval.bucket_edges) {
        if (e <= prev) raise(Errc::invalid_config, "eval.length_buckets must be strictly increasing");
        prev = e;
    }
    if (!(probe.lambda >= 0.0)) raise(Errc::invalid_config, "probe.lambda must be >= 0");
    if (!(probe.threshold > 0.0)) raise(Errc::invalid_config, "probe.threshold must be > 0");
}

std::string Config::to_json() const {
    json j;
    j["data"]["input"] = data.input;
    j["data"]["format"] = data::format_token(data.format);
    j["data"]["min_session_len"] = data.min_session_len;
    j["data"]["min_item_freq"] = data.min_item_freq;
    j["data"]["top_k_items"] = data.top_k_items;
    j["data"]["split_rule"] =
        data.split.kind == data::SplitRule::Kind::last_week ? "last-week" : "last-fraction";
    j["data"]["split_fraction"] = data.split.fraction;
    j["data"]["gap_seconds"] = data.gap_seconds;
    j["data"]["validation_fraction"] = data.validation_fraction;
    j["model"]["d"] = model.dim;
    j["model"]["levels"] = model.levels;
    j["model"]["heads"] = model.heads;
    j["model"]["sigma"] = model.sigma;
    j["model"]["p"] = model.p;
    j["model"]["variant"] = model::variant_token(model.variant);
    j["train"]["lr"] = train.lr;
    j["train"]["batch_size"] = train.batch_size;
    j["train"]["max_epochs"] = train.max_epochs;
    j["train"]["patience"] = train.patience;
    j["train"]["seed"] = train.seed;
    j["train"]["weight_decay"] = train.weight_decay;
    j["eval"]["cutoffs"] = eval.cutoffs;
    j["eval"]["length_buckets"] = eval.bucket_edges;
    j["probe"]["lambda"] = probe.lambda;
    j["probe"]["threshold"] = probe.threshold;
    j["probe"]["matrices"] = probe.matrices;
    return j.dump(2);
}

} // namespace attnmix::config
