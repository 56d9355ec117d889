#include "doctest.h"

#include "common/error.hpp"
#include "common/rng.hpp"
#include "metrics/metrics.hpp"
#include "model/params.hpp"

#include <cmath>

using namespace attnmix;
using namespace attnmix::metrics;

TEST_CASE("rank_of_target ordering and tie break") {
    std::vector<double> a{0.1, 0.6, 0.3};
    CHECK(rank_of_target(a, 2) == 1);

    std::vector<double> equal{0.25, 0.25, 0.25, 0.25};
    CHECK(rank_of_target(equal, 1) == 1); // smallest index wins ties
    CHECK(rank_of_target(equal, 3) == 3);

    std::vector<double> b{0.1, 0.5, 0.4};
    CHECK(rank_of_target(b, 3) == 2);

    CHECK_THROWS_AS(rank_of_target(b, 0), Error);
    CHECK_THROWS_AS(rank_of_target(b, 4), Error);
}

TEST_CASE("hr_mrr hand-computed values") {
    std::vector<int64_t> one{1};
    auto r = hr_mrr(one, 20);
    CHECK(r.hr == 1.0);
    CHECK(r.mrr == 1.0);

    std::vector<int64_t> three{3};
    r = hr_mrr(three, 5);
    CHECK(r.hr == 1.0);
    CHECK(r.mrr == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    std::vector<int64_t> mixed{1, 21, 4};
    r = hr_mrr(mixed, 20);
    CHECK(r.hr == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.mrr == doctest::Approx((1.0 + 0.0 + 0.25) / 3.0).epsilon(1e-12));
    CHECK(r.mrr == doctest::Approx(0.4167).epsilon(1e-3));

    CHECK_THROWS_AS(hr_mrr(std::vector<int64_t>{}, 20), Error);
}

TEST_CASE("metric invariants over random rank lists") {
    Rng rng(55);
    for (int t = 0; t < 40; ++t) {
        std::vector<int64_t> ranks;
        int n = 1 + static_cast<int>(rng.index(60));
        for (int i = 0; i < n; ++i) ranks.push_back(1 + static_cast<int64_t>(rng.index(50)));
        double prev_hr = 0.0, prev_mrr = 0.0;
        for (int64_t k : {1, 3, 5, 10, 20, 50}) {
            auto r = hr_mrr(ranks, k);
            CHECK(r.mrr <= r.hr + 1e-15);
            CHECK(r.hr >= prev_hr - 1e-15);
            CHECK(r.mrr >= prev_mrr - 1e-15);
            CHECK(r.hr >= 0.0);
            CHECK(r.hr <= 1.0);
            prev_hr = r.hr;
            prev_mrr = r.mrr;
        }
    }
}

TEST_CASE("ranks are invariant to strictly increasing score transforms") {
    Rng rng(77);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> scores(20);
        for (auto& x : scores) x = rng.uniform(0.0, 1.0);
        std::vector<double> warped(20);
        for (size_t i = 0; i < 20; ++i) warped[i] = std::exp(3.0 * scores[i]) + 1.0;
        for (int32_t target = 1; target <= 20; ++target)
            CHECK(rank_of_target(scores, target) == rank_of_target(warped, target));
    }
}

TEST_CASE("uniform-random scorer hits HR@K near K/|V|") {
    Rng rng(123);
    const int64_t V = 50, K = 10, N = 2000;
    std::vector<int64_t> ranks;
    for (int64_t i = 0; i < N; ++i) {
        std::vector<double> scores(static_cast<size_t>(V));
        for (auto& x : scores) x = rng.uniform(0.0, 1.0);
        int32_t target = static_cast<int32_t>(1 + rng.index(static_cast<size_t>(V)));
        ranks.push_back(rank_of_target(scores, target));
    }
    auto r = hr_mrr(ranks, K);
    double expect = static_cast<double>(K) / static_cast<double>(V);
    double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(N));
    CHECK(std::fabs(r.hr - expect) <= 3.0 * sigma);
}

TEST_CASE("evaluate buckets partition the examples and repeat runs agree") {
    model::HyperParams hp;
    hp.dim = 8;
    hp.levels = 2;
    hp.heads = 1;
    model::ModelParams params = model::init_params(10, hp, 31);

    std::vector<data::TrainingExample> xs;
    Rng rng(5);
    for (int i = 0; i < 60; ++i) {
        data::TrainingExample ex;
        int len = 1 + static_cast<int>(rng.index(9));
        for (int k = 0; k < len; ++k) ex.prefix.push_back(static_cast<int32_t>(1 + rng.index(10)));
        ex.target = static_cast<int32_t>(1 + rng.index(10));
        xs.push_back(std::move(ex));
    }

    MetricsReport a = evaluate(params, hp, xs, {5, 10, 20}, {3, 6});
    REQUIRE(a.buckets.size() == 3);
    int64_t sum = 0;
    for (const auto& b : a.buckets) sum += b.examples;
    CHECK(sum == a.examples);
    CHECK(a.examples == 60);
    CHECK(a.by_cutoff.at(5).hr <= a.by_cutoff.at(10).hr);
    CHECK(a.by_cutoff.at(10).hr <= a.by_cutoff.at(20).hr);

    MetricsReport b = evaluate(params, hp, xs, {5, 10, 20}, {3, 6});
    for (int64_t k : {5, 10, 20}) {
        CHECK(a.by_cutoff.at(k).hr == b.by_cutoff.at(k).hr);
        CHECK(a.by_cutoff.at(k).mrr == b.by_cutoff.at(k).mrr);
    }

    // a model that always ranks the target first
    std::vector<data::TrainingExample> easy;
    data::TrainingExample ex;
    ex.prefix = {1};
    ex.target = 1;
    easy.push_back(ex);
    // find which item the model actually ranks first for prefix {1}
    num::Tensor dist = model::forward(std::vector<int32_t>{1}, params, hp);
    int32_t top = 1;
    for (int64_t j = 1; j < 10; ++j)
        if (dist.at(j) > dist.at(top - 1)) top = static_cast<int32_t>(j + 1);
    easy[0].target = top;
    MetricsReport c = evaluate(params, hp, easy, {1, 5}, {});
    CHECK(c.by_cutoff.at(1).hr == 1.0);
    CHECK(c.by_cutoff.at(1).mrr == 1.0);
}
