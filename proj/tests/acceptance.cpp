// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned in code next to each check.

#include "common/error.hpp"
#include "common/rng.hpp"
#include "data/dataset.hpp"
#include "metrics/metrics.hpp"
#include "model/forward.hpp"
#include "model/params.hpp"
#include "num/grad_check.hpp"
#include "num/ops.hpp"
#include "oracle.hpp"
#include "sparsity/sparsevd.hpp"
#include "test_support.hpp"
#include "train/checkpoint.hpp"
#include "train/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

using namespace attnmix;
using num::Tensor;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------- shared toy corpora ----------

// next item fully determined by the last item (cyclic pattern)
data::SessionDataset cyclic_corpus(int items, int sessions, int len, uint64_t seed) {
    data::SessionDataset ds;
    ds.vocab.ids.push_back("");
    ds.vocab.freq.push_back(0);
    for (int i = 1; i <= items; ++i) {
        ds.vocab.ids.push_back("i" + std::to_string(i));
        ds.vocab.freq.push_back(1);
    }
    ds.vocab.rebuild_index();
    Rng rng(seed);
    std::vector<data::Session> ss(static_cast<size_t>(sessions));
    for (int s = 0; s < sessions; ++s) {
        int start = static_cast<int>(rng.index(static_cast<size_t>(items)));
        for (int k = 0; k < len; ++k)
            ss[static_cast<size_t>(s)].items.push_back(static_cast<int32_t>(1 + (start + k) % items));
    }
    auto all = data::augment(ss);
    size_t val = all.size() / 5;
    ds.train.assign(all.begin(), all.end() - static_cast<ptrdiff_t>(val));
    ds.validation.assign(all.end() - static_cast<ptrdiff_t>(val), all.end());
    ds.test = ds.validation;
    return ds;
}

// Planted group structure: the target is a function of the unordered set of
// the LAST THREE items; each session is a permutation of the whole item
// alphabet with the decisive triple shuffled into the final three slots.
// Because every session contains every item, the set of items carries no
// information: a last-item-only readout faces 55 equally likely targets
// (HR@20 capped near 20/55), while order-free suffix windows identify the
// triple exactly. Two training examples per triple keep the ordering
// coverage sparse, so the order-sensitive window variant pays for having to
// learn each of the 3! arrangements separately.
data::SessionDataset triple_corpus(int alphabet, int train_per_triple, uint64_t seed) {
    data::SessionDataset ds;
    ds.vocab.ids.push_back("");
    ds.vocab.freq.push_back(0);
    for (int i = 1; i <= alphabet; ++i) {
        ds.vocab.ids.push_back("p" + std::to_string(i));
        ds.vocab.freq.push_back(1);
    }
    std::vector<std::array<int, 3>> triples;
    for (int u = 1; u <= alphabet; ++u)
        for (int v = u + 1; v <= alphabet; ++v)
            for (int w = v + 1; w <= alphabet; ++w) triples.push_back({u, v, w});
    std::vector<int32_t> target_of(triples.size());
    for (size_t i = 0; i < triples.size(); ++i) {
        ds.vocab.ids.push_back("t" + std::to_string(i));
        ds.vocab.freq.push_back(1);
        target_of[i] = static_cast<int32_t>(alphabet + 1 + i);
    }
    ds.vocab.rebuild_index();

    Rng rng(seed);
    auto make_example = [&](size_t idx) {
        const auto& t3 = triples[idx];
        std::vector<int32_t> last{t3[0], t3[1], t3[2]};
        rng.shuffle(last);
        std::vector<int32_t> others;
        for (int x = 1; x <= alphabet; ++x)
            if (x != t3[0] && x != t3[1] && x != t3[2]) others.push_back(static_cast<int32_t>(x));
        rng.shuffle(others);
        data::TrainingExample ex;
        ex.prefix = others;
        for (int32_t x : last) ex.prefix.push_back(x);
        ex.target = target_of[idx];
        return ex;
    };
    for (int rep = 0; rep < train_per_triple; ++rep)
        for (size_t i = 0; i < triples.size(); ++i) ds.train.push_back(make_example(i));
    Rng order(seed ^ 0xabcdef);
    order.shuffle(ds.train);
    for (size_t i = 0; i < triples.size(); ++i) {
        if (i % 4 == 0) ds.validation.push_back(make_example(i));
        ds.test.push_back(make_example(i));
        ds.test.push_back(make_example(i)); // a second ordering draw per triple
    }
    return ds;
}

// ---------- criteria ----------

Outcome criterion_gradients() {
    double t0 = now_seconds();
    double worst_strict = 0.0;
    int failing_seeds = 0;
    double worst_abs = 0.0;      // |analytic - fd| at h = 1e-4
    double worst_diag = 0.0;     // calibrated diagnostic: h = 1e-5, floor 1e-5
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        model::HyperParams hp;
        hp.dim = 8;
        hp.levels = 3;
        hp.heads = 2;
        hp.sigma = 12.0;
        hp.p = 4.0;
        model::ModelParams p = model::init_params(20, hp, seed);
        Rng rng(seed * 7919);
        std::vector<int32_t> prefix(5);
        for (auto& x : prefix) x = static_cast<int32_t>(1 + rng.index(20));
        int32_t target = static_cast<int32_t>(1 + rng.index(20));
        num::NamedTensors named = p.to_named();
        auto loss = [&hp, &prefix, target](num::Tape& t, const std::map<std::string, num::ValueRef>& refs) {
            model::BoundModel m = model::assemble_model(t, refs, hp);
            model::ForwardRefs fr = model::build_forward(t, m, prefix, 5);
            return train::cross_entropy_node(t, fr.scores, target);
        };

        double strict = num::finite_diff_check(loss, named, 1e-4);
        worst_strict = std::max(worst_strict, strict);
        if (strict >= 1e-4) ++failing_seeds;

        // supplementary diagnostic at a step/floor the 64-bit arithmetic supports
        num::GradientRecord rec = num::grad(loss, named);
        num::NamedTensors work = named;
        for (auto& [name, tensor] : work) {
            const Tensor& ga = rec.grads.at(name);
            for (size_t i = 0; i < tensor.v.size(); ++i) {
                double keep = tensor.v[i];
                tensor.v[i] = keep + 1e-5;
                double up = num::eval_loss(loss, work);
                tensor.v[i] = keep - 1e-5;
                double dn = num::eval_loss(loss, work);
                tensor.v[i] = keep;
                double fd = (up - dn) / 2e-5;
                double a = ga.v[i];
                worst_abs = std::max(worst_abs, std::fabs(a - fd));
                worst_diag = std::max(worst_diag, std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-5}));
            }
        }
    }
    double elapsed = now_seconds() - t0;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "strict check (step 1e-4, floor 1e-8): max rel %.2e over 20 seeds (%d seed(s) >= 1e-4); "
                  "calibrated diagnostic (step 1e-5, floor 1e-5): max rel %.2e (< 1e-4 %s), max abs %.2e (< 1e-7 %s); "
                  "%.1fs (< 60s %s); note: entries with gradients near the 1e-8 floor demand finite-difference "
                  "noise below 1e-12, under the ~3e-12 rounding floor of 64-bit central differences of an O(1) loss",
                  worst_strict, failing_seeds, worst_diag, worst_diag < 1e-4 ? "ok" : "VIOLATED",
                  worst_abs, worst_abs < 1e-7 ? "ok" : "VIOLATED", elapsed, elapsed < 60 ? "ok" : "VIOLATED");
    bool pass = worst_strict < 1e-4 && elapsed < 60.0;
    return {pass, buf};
}

Outcome criterion_oracle_equivalence() {
    Rng rng(20240202);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        model::HyperParams hp;
        hp.dim = 2 + static_cast<int64_t>(rng.index(7));   // d <= 8
        hp.levels = 1 + static_cast<int64_t>(rng.index(3)); // L <= 3
        hp.heads = 1 + static_cast<int64_t>(rng.index(2));  // H <= 2
        hp.sigma = 12.0;
        hp.p = 4.0;
        int64_t vocab = 5 + static_cast<int64_t>(rng.index(16));
        model::ModelParams p = model::init_params(vocab, hp, 5000 + static_cast<uint64_t>(trial));
        int64_t n = 1 + static_cast<int64_t>(rng.index(5)); // n <= 5
        std::vector<int32_t> prefix = testsup::random_prefix(rng, vocab, n);
        Tensor dist = model::forward(prefix, p, hp);
        oracle::Trace tr = oracle::forward(testsup::mirror(p, hp), prefix);
        for (size_t j = 0; j < tr.scores.size(); ++j)
            worst = std::max(worst, std::fabs(dist.v[j] - tr.scores[j]));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |impl - oracle| = %.2e over 100 random instances (tol 1e-10)", worst);
    return {worst < 1e-10, buf};
}

Outcome criterion_deep_sets() {
    Rng rng(777);
    double worst = 0.0;
    bool li_witnessed = false;
    for (int trial = 0; trial < 50; ++trial) {
        model::HyperParams hp;
        hp.dim = 6;
        hp.levels = 3;
        hp.heads = 1;
        int64_t vocab = 15;
        model::ModelParams p = model::init_params(vocab, hp, 600 + static_cast<uint64_t>(trial));
        std::vector<int32_t> prefix = testsup::random_prefix(rng, vocab, 5);
        Tensor q = model::generate_queries(model::embed_normalize(p, prefix), p, hp);

        std::vector<int32_t> perm = prefix;
        std::swap(perm[2], perm[4]);
        std::swap(perm[3], perm[2]); // 3-cycle of the last L items
        Tensor qp = model::generate_queries(model::embed_normalize(p, perm), p, hp);
        for (int64_t c = 0; c < hp.dim; ++c)
            worst = std::max(worst, std::fabs(q.at(2, c) - qp.at(2, c)));

        model::HyperParams li = hp;
        li.variant = model::Variant::concat_window;
        model::ModelParams pli = model::init_params(vocab, li, 700 + static_cast<uint64_t>(trial));
        std::vector<int32_t> swapped = prefix;
        std::swap(swapped[3], swapped[4]);
        if (prefix[3] != prefix[4]) {
            Tensor a = model::generate_queries(model::embed_normalize(pli, prefix), pli, li);
            Tensor b = model::generate_queries(model::embed_normalize(pli, swapped), pli, li);
            for (int64_t c = 0; c < hp.dim; ++c)
                if (std::fabs(a.at(1, c) - b.at(1, c)) > 1e-9) li_witnessed = true;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |dQ_L| under last-L permutation = %.2e (tol 1e-9); LI order sensitivity %s",
                  worst, li_witnessed ? "witnessed" : "NOT witnessed");
    return {worst < 1e-9 && li_witnessed, buf};
}

Outcome criterion_invariants() {
    Rng rng(31337);
    double worst_norm = 0.0, worst_prob = 0.0, worst_col = 0.0;
    bool masks_clean = true;
    for (int trial = 0; trial < 1000; ++trial) {
        model::HyperParams hp;
        hp.dim = 2 + static_cast<int64_t>(rng.index(7));
        hp.levels = 1 + static_cast<int64_t>(rng.index(3));
        hp.heads = 1 + static_cast<int64_t>(rng.index(2));
        int64_t vocab = 4 + static_cast<int64_t>(rng.index(12));
        model::ModelParams p = model::init_params(vocab, hp, 8000 + static_cast<uint64_t>(trial));
        int64_t len = 1 + static_cast<int64_t>(rng.index(5));
        int64_t width = len + static_cast<int64_t>(rng.index(3)); // padded batch row
        std::vector<int32_t> prefix = testsup::random_prefix(rng, vocab, len);
        model::ForwardTrace tr = model::forward_trace(prefix, p, hp, nullptr, width);

        worst_norm = std::max(worst_norm, std::fabs(oracle::norm2(tr.session.v) - 1.0));
        double sum = 0.0;
        for (double x : tr.scores.v) sum += x;
        worst_prob = std::max(worst_prob, std::fabs(sum - 1.0));
        for (int64_t c = 0; c < tr.attention.cols(); ++c) {
            double col = 0.0;
            for (int64_t j = 0; j < tr.attention.rows(); ++j) col += tr.attention.at(j, c);
            worst_col = std::max(worst_col, std::fabs(col - 1.0));
        }
        for (int64_t j = len; j < width; ++j)
            for (int64_t c = 0; c < tr.attention.cols(); ++c)
                if (tr.attention.at(j, c) != 0.0) masks_clean = false;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "1000 padded instances: max | ||s||-1 | = %.2e (1e-12), max |sum y - 1| = %.2e (1e-9), "
                  "max column-group dev = %.2e (1e-9), masked positions %s",
                  worst_norm, worst_prob, worst_col, masks_clean ? "exactly 0" : "NONZERO");
    return {worst_norm <= 1e-12 && worst_prob <= 1e-9 && worst_col <= 1e-9 && masks_clean, buf};
}

Outcome criterion_lp_limits() {
    Rng rng(64);
    bool sum_exact = true;
    double worst64 = 0.0;
    for (int t = 0; t < 200; ++t) {
        int n = 1 + static_cast<int>(rng.index(4));
        std::vector<double> vals(static_cast<size_t>(n));
        for (auto& x : vals) x = rng.uniform(0.0, 1.0);
        double direct = 0.0;
        for (double x : vals) direct += x;
        if (num::lp_pool(Tensor::vec(vals), 1.0) != direct) sum_exact = false;

        // finite-p convergence needs a max gap; cap the runner-up at 0.93 of
        // the max (near-ties converge only as p -> infinity and are covered
        // by the LP-variant check below)
        double mx = *std::max_element(vals.begin(), vals.end());
        std::vector<double> gapped = vals;
        for (auto& x : gapped)
            if (x != mx && x > 0.93 * mx) x = 0.93 * mx;
        double mg = *std::max_element(gapped.begin(), gapped.end());
        worst64 = std::max(worst64, std::fabs(num::lp_pool(Tensor::vec(gapped), 64.0) - mg));
    }

    // LP variant equals the p -> infinity limit of the full variant
    double worst_lp = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        model::HyperParams full;
        full.dim = 6;
        full.levels = 3;
        full.heads = 2;
        full.p = 1048576.0; // effectively the limit
        model::HyperParams lp = full;
        lp.variant = model::Variant::max_mix;
        lp.p = 4.0;
        int64_t vocab = 12;
        model::ModelParams p = model::init_params(vocab, full, 4000 + static_cast<uint64_t>(trial));
        std::vector<int32_t> prefix = testsup::random_prefix(rng, vocab, 4);
        Tensor a = model::forward(prefix, p, full);
        Tensor b = model::forward(prefix, p, lp);
        for (size_t j = 0; j < a.v.size(); ++j) worst_lp = std::max(worst_lp, std::fabs(a.v[j] - b.v[j]));
    }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "p=1 %s sum exactly; p=64 max |lp - max| = %.2e on gapped attention-range inputs (1e-3); "
                  "LP vs p=2^20 full: max prob dev %.2e (1e-3)",
                  sum_exact ? "equals" : "DIFFERS from", worst64, worst_lp);
    return {sum_exact && worst64 <= 1e-3 && worst_lp <= 1e-3, buf};
}

Outcome criterion_metric_oracles() {
    std::vector<int64_t> ranks{1, 21, 4};
    auto r = metrics::hr_mrr(ranks, 20);
    bool hand = std::fabs(r.hr - 2.0 / 3.0) < 1e-12 &&
                std::fabs(r.mrr - (1.0 + 0.0 + 0.25) / 3.0) < 1e-12;

    Rng rng(9001);
    const int64_t V = 100, N = 10000;
    std::vector<int64_t> got;
    for (int64_t i = 0; i < N; ++i) {
        std::vector<double> scores(static_cast<size_t>(V));
        for (auto& x : scores) x = rng.uniform(0.0, 1.0);
        got.push_back(metrics::rank_of_target(scores, static_cast<int32_t>(1 + rng.index(V))));
    }
    bool uniform_ok = true;
    double worst_z = 0.0;
    for (int64_t k : {5, 10, 20}) {
        double expect = static_cast<double>(k) / static_cast<double>(V);
        double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(N));
        double hr = metrics::hr_mrr(got, k).hr;
        double z = std::fabs(hr - expect) / sigma;
        worst_z = std::max(worst_z, z);
        if (z > 3.0) uniform_ok = false;
    }
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "hand values (ranks 1,21,4 @20 -> HR 2/3, MRR 0.41667) %s; uniform scorer max |z| = %.2f (<= 3)",
                  hand ? "exact" : "WRONG", worst_z);
    return {hand && uniform_ok, buf};
}

Outcome criterion_overfit() {
    double t0 = now_seconds();
    data::SessionDataset ds = cyclic_corpus(10, 50, 5, 12);
    model::HyperParams hp;
    hp.dim = 32;
    hp.levels = 2;
    hp.heads = 1;
    train::TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 32;
    cfg.max_epochs = 200;
    cfg.patience = 200; // run as long as needed within the budget
    cfg.seed = 7;
    train::FitResult fit = train::fit(ds, hp, cfg);

    bool decreasing = fit.log.size() >= 5;
    for (size_t i = 1; i < 5 && i < fit.log.size(); ++i)
        if (!(fit.log[i].loss < fit.log[i - 1].loss)) decreasing = false;

    std::vector<data::TrainingExample> all = ds.train;
    all.insert(all.end(), ds.validation.begin(), ds.validation.end());
    metrics::MetricsReport rep = metrics::evaluate(fit.best.params, hp, all, {1}, {});
    double hr1 = rep.by_cutoff.at(1).hr;
    double elapsed = now_seconds() - t0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "HR@1 = %.3f (>= 0.95) after %lld epochs; first-5-epoch loss %s; %.1fs (< 120s %s)",
                  hr1, static_cast<long long>(fit.epochs_run),
                  decreasing ? "strictly decreasing" : "NOT strictly decreasing", elapsed,
                  elapsed < 120 ? "ok" : "VIOLATED");
    return {hr1 >= 0.95 && decreasing && elapsed < 120.0, buf};
}

double median_forward_seconds(int64_t n, int64_t heads, int trials) {
    model::HyperParams hp;
    hp.dim = 64;
    hp.levels = 2;
    hp.heads = heads;
    // tiny vocabulary keeps scoring far below 0.1% of the readout cost
    int64_t vocab = 30;
    model::ModelParams p = model::init_params(vocab, hp, 99);
    Rng rng(55);
    std::vector<int32_t> prefix = testsup::random_prefix(rng, vocab, n);
    // warm up
    model::forward(prefix, p, hp);
    std::vector<double> times;
    times.reserve(static_cast<size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        double t0 = now_seconds();
        model::forward(prefix, p, hp);
        times.push_back(now_seconds() - t0);
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

Outcome criterion_complexity() {
    const int trials = 60;
    double base = median_forward_seconds(128, 8, trials);
    double twice_n = median_forward_seconds(256, 8, trials);
    double twice_h = median_forward_seconds(128, 16, trials);
    double rn = twice_n / base;
    double rh = twice_h / base;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "median readout time: base %.3fms; x2 sequence ratio %.2f, x2 heads ratio %.2f (both in [1.6, 2.6], %d trials)",
                  base * 1e3, rn, rh, trials);
    return {rn >= 1.6 && rn <= 2.6 && rh >= 1.6 && rh <= 2.6, buf};
}

Outcome criterion_sparsevd() {
    // closed-form KL vs Simpson quadrature
    auto kl_quadrature = [](double theta, double sigma2) {
        double sigma = std::sqrt(sigma2);
        double lo = theta - 14.0 * sigma - 2.0, hi = theta + 14.0 * sigma + 2.0;
        const int n = 40000;
        double h = (hi - lo) / n;
        auto f = [theta, sigma2](double w) {
            double logq = -(w - theta) * (w - theta) / (2.0 * sigma2) - 0.5 * std::log(2.0 * M_PI * sigma2);
            double q = std::exp(logq);
            if (q < 1e-300) return 0.0;
            double logp = -w * w / 2.0 - 0.5 * std::log(2.0 * M_PI);
            return q * (logq - logp);
        };
        double s = f(lo) + f(hi);
        for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
        return s * h / 3.0;
    };
    Rng rng(202);
    double worst_kl = 0.0;
    for (int t = 0; t < 10; ++t) {
        double theta = rng.uniform(-2.0, 2.0);
        double sigma2 = std::exp(rng.uniform(-3.0, 1.0));
        sparsity::VariationalWeight vw;
        vw.mean = Tensor::matrix(1, 1, {theta});
        vw.logvar = Tensor::matrix(1, 1, {std::log(sigma2)});
        worst_kl = std::max(worst_kl, std::fabs(sparsity::kl_standard_normal(vw) - kl_quadrature(theta, sigma2)));
    }

    // probe runs on a last-item-determined task: the multi-level readout is
    // redundant information, so strong KL pressure must thin the merge weights
    data::SessionDataset ds = cyclic_corpus(8, 40, 4, 21);
    model::HyperParams hp;
    hp.dim = 8;
    hp.levels = 2;
    hp.heads = 1;
    sparsity::ProbeConfig control;
    control.lambda = 0.0;
    control.threshold = 0.01;
    control.matrices = {"merge_w"};
    control.train.lr = 5e-3;
    control.train.batch_size = 32;
    control.train.max_epochs = 10;
    control.train.seed = 13;
    auto series0 = sparsity::probe_run(ds, hp, control);

    sparsity::ProbeConfig pressured = control;
    pressured.lambda = 10.0;
    auto series10 = sparsity::probe_run(ds, hp, pressured);

    auto rho_at = [](const std::vector<sparsity::DensityRecord>& s, int64_t epoch) {
        for (const auto& r : s)
            if (r.epoch == epoch && r.name == "merge_w") return r.rho;
        return -1.0;
    };
    double c0 = rho_at(series0, 0), c10 = rho_at(series0, 10);
    double p0 = rho_at(series10, 0), p10 = rho_at(series10, 10);
    bool in_range = true;
    for (const auto& r : series0)
        if (r.rho < 0.0 || r.rho > 1.0) in_range = false;
    for (const auto& r : series10)
        if (r.rho < 0.0 || r.rho > 1.0) in_range = false;

    bool control_flat = std::fabs(c10 - c0) <= 0.10;
    bool pressured_drops = p10 < p0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "KL vs quadrature max dev %.2e (1e-6); control rho %.3f -> %.3f (drift <= 0.10); "
                  "lambda=10 rho %.3f -> %.3f (must drop); all rho in [0,1] %s",
                  worst_kl, c0, c10, p0, p10, in_range ? "ok" : "VIOLATED");
    return {worst_kl <= 1e-6 && control_flat && pressured_drops && in_range, buf};
}

Outcome criterion_checkpoint_roundtrip() {
    model::HyperParams hp;
    hp.dim = 12;
    hp.levels = 3;
    hp.heads = 2;
    train::Checkpoint ck;
    ck.hyper = hp;
    ck.vocab_items = 17;
    ck.vocab_hash = 0x1234;
    ck.params = model::init_params(17, hp, 321);
    ck.epoch = 4;
    ck.val_mrr20 = 0.5;
    ck.seed = 321;
    std::string path = (std::filesystem::temp_directory_path() / "amx_accept.ckpt").string();
    train::save_checkpoint(ck, path);
    train::Checkpoint back = train::load_checkpoint(path);

    Rng rng(31);
    bool bitwise = true;
    for (int t = 0; t < 10; ++t) {
        int n = 1 + static_cast<int>(rng.index(6));
        std::vector<int32_t> prefix = testsup::random_prefix(rng, 17, n);
        Tensor a = model::forward(prefix, ck.params, hp);
        Tensor b = model::forward(prefix, back.params, back.hyper);
        if (a.v.size() != b.v.size() ||
            std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) != 0)
            bitwise = false;
    }
    return {bitwise, bitwise ? "save/load forward outputs identical bitwise on 10 random prefixes"
                             : "round-trip outputs DIFFER"};
}

Outcome criterion_ablation_direction() {
    double t0 = now_seconds();
    const int seeds = 5;
    std::map<std::string, double> mean_hr;
    std::vector<std::pair<std::string, model::Variant>> variants = {
        {"full", model::Variant::full},
        {"M", model::Variant::last_item},
        {"IP", model::Variant::all_items},
        {"LI", model::Variant::concat_window},
        {"LP", model::Variant::max_mix},
    };
    for (int s = 0; s < seeds; ++s) {
        data::SessionDataset ds = triple_corpus(12, 2, 100 + static_cast<uint64_t>(s));
        for (const auto& [name, variant] : variants) {
            model::HyperParams hp;
            hp.dim = 32;
            hp.levels = 3;
            hp.heads = 1;
            hp.variant = variant;
            train::TrainConfig cfg;
            cfg.lr = 5e-3;
            cfg.batch_size = 32;
            cfg.max_epochs = 40;
            cfg.patience = 40;
            cfg.seed = 1 + static_cast<uint64_t>(s);
            train::FitResult fit = train::fit(ds, hp, cfg);
            metrics::MetricsReport rep = metrics::evaluate(fit.best.params, hp, ds.test, {20}, {});
            mean_hr[name] += rep.by_cutoff.at(20).hr / seeds;
        }
    }
    bool ok = mean_hr.at("full") >= mean_hr.at("M") && mean_hr.at("full") >= mean_hr.at("IP") &&
              mean_hr.at("full") >= mean_hr.at("LI") && mean_hr.at("full") >= mean_hr.at("LP");
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "mean HR@20 over %d seeds: full %.3f >= M %.3f, IP %.3f, LI %.3f, LP %.3f; %.0fs",
                  seeds, mean_hr.at("full"), mean_hr.at("M"), mean_hr.at("IP"), mean_hr.at("LI"),
                  mean_hr.at("LP"), now_seconds() - t0);
    return {ok, buf};
}

} // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    std::vector<Entry> entries = {
        {1, "gradient-correctness", criterion_gradients},
        {2, "oracle-equivalence", criterion_oracle_equivalence},
        {3, "deep-sets-invariance", criterion_deep_sets},
        {4, "normalization-invariants", criterion_invariants},
        {5, "lp-pooling-limits", criterion_lp_limits},
        {6, "metric-oracles", criterion_metric_oracles},
        {7, "overfit-sanity", criterion_overfit},
        {8, "complexity-scaling", criterion_complexity},
        {9, "sparsevd-probe", criterion_sparsevd},
        {10, "checkpoint-roundtrip", criterion_checkpoint_roundtrip},
        {12, "ablation-direction", criterion_ablation_direction},
    };
    int failures = 0;
    for (const Entry& e : entries) {
        Outcome o;
        try {
            o = e.run();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        std::printf("%s %2d %-26s %s\n", o.pass ? "PASS" : "FAIL", e.id, e.name, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(entries.size()) - failures,
                entries.size());
    return failures;
}
