#include "sparsity/sparsevd.hpp"

#include "common/error.hpp"
#include "common/rng.hpp"
#include "model/forward.hpp"
#include "train/adam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace attnmix::sparsity {

VariationalWeight VariationalWeight::from_weights(const Tensor& w, double init_sigma2) {
    if (!(init_sigma2 > 0.0)) raise(Errc::invalid_argument, "initial sigma^2 must be positive");
    VariationalWeight vw;
    vw.mean = w;
    vw.logvar = Tensor::filled(w.shape, std::log(init_sigma2));
    return vw;
}

Tensor variational_forward(const Tensor& a, const VariationalWeight& vw, uint64_t noise_seed) {
    if (a.rank() != 2 || vw.mean.rank() != 2 || a.cols() != vw.mean.rows() ||
        !vw.mean.same_shape(vw.logvar))
        raise(Errc::invalid_argument, "variational_forward shape mismatch");
    Rng rng(noise_seed);
    Tensor eps = Tensor::zeros({a.rows(), vw.mean.cols()});
    for (double& x : eps.v) x = rng.gaussian();
    num::Tape tape;
    num::ValueRef out = tape.variational_matmul(tape.input(a), tape.input(vw.mean),
                                                tape.input(vw.logvar), tape.input(eps));
    return tape.value(out);
}

double kl_standard_normal(const VariationalWeight& vw) {
    double s = 0.0;
    for (size_t i = 0; i < vw.mean.v.size(); ++i) {
        double th = vw.mean.v[i];
        double lv = vw.logvar.v[i];
        s += 0.5 * (std::exp(lv) + th * th - 1.0 - lv);
    }
    return s;
}

num::ValueRef kl_node(num::Tape& tape, num::ValueRef theta, num::ValueRef logvar) {
    num::ValueRef sig2 = tape.exp(logvar);
    num::ValueRef th2 = tape.mul(theta, theta);
    num::ValueRef acc = tape.sub(tape.add(sig2, th2), logvar);
    acc = tape.add_scalar(acc, -1.0);
    return tape.scale(tape.sum(acc), 0.5);
}

double density_ratio(const Tensor& w, double threshold) {
    if (w.rank() != 2) raise(Errc::invalid_argument, "density_ratio expects a rank-2 matrix");
    if (!(threshold > 0.0)) raise(Errc::invalid_argument, "density threshold must be > 0");
    int64_t alive = 0;
    for (double x : w.v)
        if (std::fabs(x) > threshold) ++alive;
    return static_cast<double>(alive) / static_cast<double>(w.numel());
}

namespace {

std::set<std::string> expand_selection(const std::vector<std::string>& matrices, int64_t heads) {
    std::set<std::string> out;
    for (const std::string& m : matrices) {
        if (m == "merge_w") {
            out.insert("merge_w");
        } else if (m == "attn_q" || m == "attn_k") {
            for (int64_t h = 1; h <= heads; ++h) out.insert(m + "." + std::to_string(h));
        } else if (m.rfind("attn_q.", 0) == 0 || m.rfind("attn_k.", 0) == 0) {
            out.insert(m);
        } else {
            raise(Errc::invalid_config,
                  "unknown probe matrix '" + m + "' (expected merge_w, attn_q, attn_k)");
        }
    }
    if (out.empty()) raise(Errc::invalid_config, "probe needs at least one matrix");
    return out;
}

Tensor transpose(const Tensor& t) {
    Tensor out = Tensor::zeros({t.cols(), t.rows()});
    for (int64_t i = 0; i < t.rows(); ++i)
        for (int64_t j = 0; j < t.cols(); ++j) out.at(j, i) = t.at(i, j);
    return out;
}

} // namespace

std::vector<DensityRecord> probe_run(const data::SessionDataset& ds, const model::HyperParams& hyper,
                                     const ProbeConfig& cfg) {
    cfg.train.validate();
    hyper.validate();
    if (!(cfg.lambda >= 0.0)) raise(Errc::invalid_config, "probe.lambda must be >= 0");
    if (!(cfg.threshold > 0.0)) raise(Errc::invalid_config, "probe.threshold must be > 0");
    if (ds.train.empty()) raise(Errc::empty_input, "dataset has no training examples");

    std::set<std::string> probed = expand_selection(cfg.matrices, hyper.heads);
    model::ModelParams params = model::init_params(ds.vocab.items(), hyper, cfg.train.seed);

    // deterministic parameters stay in params; probed ones move to posteriors
    std::map<std::string, VariationalWeight> posteriors;
    params.for_each([&](const std::string& name, Tensor& t) {
        if (!probed.count(name)) return;
        // merge applies to a row vector, so its posterior lives transposed
        Tensor theta = name == "merge_w" ? transpose(t) : t;
        posteriors.emplace(name, VariationalWeight::from_weights(theta, 1e-4));
    });
    for (const std::string& name : probed)
        if (!posteriors.count(name))
            raise(Errc::invalid_config, "probe matrix '" + name + "' does not exist for this model");

    train::Adam adam(train::AdamConfig{cfg.train.lr, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(cfg.train.seed ^ 0x9e3779b97f4a7c15ull);
    Rng noise_rng(cfg.train.seed ^ 0x7f4a7c159e3779b9ull);

    std::vector<DensityRecord> series;
    auto record_epoch = [&](int64_t epoch) {
        for (const auto& [name, vw] : posteriors) {
            DensityRecord r;
            r.epoch = epoch;
            r.name = name;
            r.rows = vw.mean.rows();
            r.cols = vw.mean.cols();
            r.threshold = cfg.threshold;
            r.rho = density_ratio(vw.mean, cfg.threshold);
            series.push_back(std::move(r));
        }
    };
    record_epoch(0);

    for (int64_t epoch = 1; epoch <= cfg.train.max_epochs; ++epoch) {
        data::BatchIter iter(ds.train, cfg.train.batch_size, shuffle_rng.next_u64());
        data::Batch batch;
        while (iter.next(batch)) {
            num::Tape tape;
            std::map<std::string, num::ValueRef> refs;
            params.for_each([&](const std::string& name, Tensor& t) {
                if (probed.count(name)) return;
                refs[name] = tape.param(t);
            });
            std::vector<std::pair<std::string, std::pair<num::ValueRef, num::ValueRef>>> vw_refs;
            for (auto& [name, vw] : posteriors) {
                num::ValueRef th = tape.param(vw.mean);
                num::ValueRef lv = tape.param(vw.logvar);
                refs[name + ".theta"] = th;
                refs[name + ".logvar"] = lv;
                vw_refs.push_back({name, {th, lv}});
            }
            model::BoundModel bound = model::assemble_model(tape, refs, hyper);

            model::ForwardOptions opts;
            opts.noise = [&noise_rng](num::Tape& t, const std::string&, int64_t rows, int64_t cols) {
                Tensor eps = Tensor::zeros({rows, cols});
                for (double& x : eps.v) x = noise_rng.gaussian();
                return t.input(eps);
            };

            std::vector<num::ValueRef> losses;
            for (int64_t r = 0; r < batch.rows; ++r) {
                std::span<const int32_t> row(batch.items.data() + r * batch.width,
                                             static_cast<size_t>(batch.width));
                model::ForwardRefs fr = model::build_forward(
                    tape, bound, row, batch.lengths[static_cast<size_t>(r)], &opts);
                losses.push_back(
                    train::cross_entropy_node(tape, fr.scores, batch.targets[static_cast<size_t>(r)]));
            }
            num::ValueRef loss = tape.mean_of(losses);
            if (cfg.lambda > 0.0) {
                num::ValueRef kl{};
                bool first = true;
                for (auto& [name, pair] : vw_refs) {
                    num::ValueRef k = kl_node(tape, pair.first, pair.second);
                    kl = first ? k : tape.add(kl, k);
                    first = false;
                }
                loss = tape.add(loss, tape.scale(kl, cfg.lambda));
            }
            if (!std::isfinite(tape.value(loss).v[0]))
                raise(Errc::nonfinite_gradient, "non-finite probe loss in batch " + std::to_string(batch.index));
            tape.backward(loss);

            num::GradientRecord rec;
            std::map<std::string, Tensor*> targets;
            params.for_each([&](const std::string& name, Tensor& t) {
                if (probed.count(name)) return;
                rec.grads.emplace(name, tape.gradient(refs.at(name)));
                targets[name] = &t;
            });
            for (auto& [name, vw] : posteriors) {
                rec.grads.emplace(name + ".theta", tape.gradient(refs.at(name + ".theta")));
                rec.grads.emplace(name + ".logvar", tape.gradient(refs.at(name + ".logvar")));
                targets[name + ".theta"] = &vw.mean;
                targets[name + ".logvar"] = &vw.logvar;
            }
            for (const auto& [name, g] : rec.grads)
                if (!g.all_finite())
                    raise(Errc::nonfinite_gradient,
                          "non-finite probe gradient for " + name + " in batch " + std::to_string(batch.index));
            adam.step(targets, rec);
        }
        record_epoch(epoch);
    }
    return series;
}

std::string format_density_record(const DensityRecord& r) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "epoch=%lld name=%s M=%lld N=%lld threshold=%.6f rho=%.6f",
                  static_cast<long long>(r.epoch), r.name.c_str(), static_cast<long long>(r.rows),
                  static_cast<long long>(r.cols), r.threshold, r.rho);
    return buf;
}

std::vector<DensityRecord> parse_density_series(const std::string& text) {
    std::vector<DensityRecord> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty() || line[0] == '#') continue;
        out.push_back(parse_density_record(line));
    }
    return out;
}

DensityRecord parse_density_record(const std::string& line) {
    DensityRecord r;
    char name[96] = {0};
    long long epoch = 0, rows = 0, cols = 0;
    double threshold = 0.0, rho = 0.0;
    int got = std::sscanf(line.c_str(), "epoch=%lld name=%95s M=%lld N=%lld threshold=%lf rho=%lf",
                          &epoch, name, &rows, &cols, &threshold, &rho);
    if (got != 6) raise(Errc::parse_error, "bad density record: " + line);
    r.epoch = epoch;
    r.name = name;
    r.rows = rows;
    r.cols = cols;
    r.threshold = threshold;
    r.rho = rho;
    return r;
}

} // namespace attnmix::sparsity
