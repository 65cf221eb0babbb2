#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "dra/heads.hpp"
#include "oracles.hpp"

using namespace dra;

TEST_CASE("patch_scores is an independent affine map per location") {
    SUBCASE("zero weights give a constant map at the bias") {
        FeatureMap m({4, 3, 3});
        Rng rng(1);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = uniform_real(rng, -2, 2);
        std::vector<double> w(4, 0.0);
        ScoreMap s = patch_scores(m, w, 0.75);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == 0.75);
    }
    SUBCASE("hand-worked dot product") {
        FeatureMap m({2, 1, 1});
        m[0] = 1.0;
        m[1] = 2.0;
        std::vector<double> w = {0.5, -0.5};
        ScoreMap s = patch_scores(m, w, 0.0);
        CHECK(s[0] == doctest::Approx(-0.5));
    }
    SUBCASE("permuting spatial locations permutes scores identically") {
        Rng rng(2);
        FeatureMap m = oracles::random_tensor({3, 2, 4}, rng);
        std::vector<double> w = {0.3, -1.0, 0.7};
        ScoreMap s = patch_scores(m, w, 0.1);
        // swap two locations in the input
        FeatureMap m2 = m;
        for (std::size_t c = 0; c < 3; ++c) std::swap(m2.data()[c * 8 + 1], m2.data()[c * 8 + 6]);
        ScoreMap s2 = patch_scores(m2, w, 0.1);
        CHECK(s2[1] == s[6]);
        CHECK(s2[6] == s[1]);
    }
    SUBCASE("channel mismatch is an error") {
        FeatureMap m({3, 2, 2});
        std::vector<double> w(4, 0.0);
        CHECK_THROWS_AS(patch_scores(m, w, 0.0), std::invalid_argument);
    }
}

TEST_CASE("topk_mil_pool spec examples") {
    ScoreMap s({1, 10});
    for (std::size_t i = 0; i < 10; ++i) s[i] = 0.1 * static_cast<double>(i);
    CHECK(topk_mil_pool(s, 0.1) == doctest::Approx(0.9)); // K = 1

    ScoreMap c({3, 3});
    c.fill(0.42);
    for (double kf : {0.05, 0.3, 1.0}) CHECK(topk_mil_pool(c, kf) == doctest::Approx(0.42));

    ScoreMap four({2, 2});
    four[0] = -1;
    four[1] = 5;
    four[2] = 2;
    four[3] = 0;
    CHECK(topk_mil_pool(four, 0.1) == 5.0); // K = max(1, floor(0.4)) = 1 -> max entry

    ScoreMap empty;
    CHECK_THROWS_AS(topk_mil_pool(empty, 0.1), std::invalid_argument);
}

TEST_CASE("topk_mil_pool equals the sort-then-mean oracle on random maps") {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
        std::size_t h = static_cast<std::size_t>(uniform_int(rng, 1, 12));
        std::size_t w = static_cast<std::size_t>(uniform_int(rng, 1, 12));
        ScoreMap m = oracles::random_tensor({h, w}, rng, -5, 5);
        std::vector<double> v(m.data(), m.data() + m.size());
        for (double kf : {0.05, 0.1, 0.5, 1.0})
            CHECK(std::abs(topk_mil_pool(m, kf) - oracles::topk_sort_mean(v, kf)) <= 1e-12);
    }
}

TEST_CASE("topk_mil_pool properties: full-k mean, monotonicity, permutation invariance") {
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 64));
        ScoreMap m = oracles::random_tensor({1, n}, rng, -3, 3);
        double mean = std::accumulate(m.data(), m.data() + n, 0.0) / static_cast<double>(n);
        CHECK(std::abs(topk_mil_pool(m, 1.0) - mean) <= 1e-12);

        double before = topk_mil_pool(m, 0.25);
        ScoreMap bumped = m;
        std::size_t i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
        bumped[i] += uniform_real(rng, 0.0, 2.0);
        CHECK(topk_mil_pool(bumped, 0.25) >= before);

        ScoreMap shuffled = m;
        std::vector<double> vals(shuffled.data(), shuffled.data() + n);
        shuffle(vals, rng);
        for (std::size_t j = 0; j < n; ++j) shuffled[j] = vals[j];
        CHECK(topk_mil_pool(shuffled, 0.3) == topk_mil_pool(m, 0.3));
    }
}

TEST_CASE("seen and pseudo heads are the same machinery with their own weights") {
    Rng rng(5);
    FeatureMap m = oracles::random_tensor({6, 4, 4}, rng);
    std::vector<double> w(6);
    for (double& v : w) v = uniform_real(rng, -1, 1);
    double b = 0.2;

    // identical weights -> identical scores
    CHECK(mil_head_score(m, w, b, 0.1) == mil_head_score(m, w, b, 0.1));

    // composition oracle: patch scores -> sort -> mean
    ScoreMap s = patch_scores(m, w, b);
    std::vector<double> v(s.data(), s.data() + s.size());
    CHECK(mil_head_score(m, w, b, 0.1) == doctest::Approx(oracles::topk_sort_mean(v, 0.1)));

    // degenerate weights -> constant map -> bias
    std::vector<double> zero(6, 0.0);
    CHECK(mil_head_score(m, zero, 0.31, 0.5) == doctest::Approx(0.31));
}

TEST_CASE("mil_head_backward matches finite differences") {
    Rng rng(6);
    FeatureMap m = oracles::random_tensor({4, 3, 3}, rng);
    std::vector<double> w(4);
    for (double& v : w) v = uniform_real(rng, -1, 1);
    double b = 0.1, kf = 0.3;

    std::vector<double> dw(4, 0.0);
    double db = 0.0;
    FeatureMap dmap;
    mil_head_backward(m, w, b, kf, 1.0, dw, db, &dmap);

    for (std::size_t i = 0; i < w.size(); ++i) {
        double fd = oracles::central_diff(
            [&](double v) {
                auto ww = w;
                ww[i] = v;
                return mil_head_score(m, ww, b, kf);
            },
            w[i]);
        CHECK(dw[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    double fdb = oracles::central_diff([&](double v) { return mil_head_score(m, w, v, kf); }, b);
    CHECK(db == doctest::Approx(fdb).epsilon(1e-7));
    std::size_t xi = 17;
    double fdx = oracles::central_diff(
        [&](double v) {
            FeatureMap mm = m;
            mm[xi] = v;
            return mil_head_score(mm, w, b, kf);
        },
        m[xi]);
    CHECK(dmap[xi] == doctest::Approx(fdx).epsilon(1e-5));
}

TEST_CASE("compute_reference_map") {
    Rng rng(7);
    FeatureMap a = oracles::random_tensor({4, 2, 2}, rng);
    FeatureMap b = oracles::random_tensor({4, 2, 2}, rng);

    SUBCASE("single and repeated references") {
        CHECK(max_abs_diff(compute_reference_map({a}), a) == 0.0);
        CHECK(max_abs_diff(compute_reference_map({a, a, a}), a) <= 1e-15);
    }
    SUBCASE("two references average element-wise") {
        FeatureMap mean = compute_reference_map({a, b});
        for (std::size_t i = 0; i < mean.size(); ++i)
            CHECK(mean[i] == doctest::Approx((a[i] + b[i]) / 2.0).epsilon(1e-14));
    }
    SUBCASE("permutation of the reference list is exact") {
        std::vector<FeatureMap> maps;
        for (int i = 0; i < 5; ++i) maps.push_back(oracles::random_tensor({3, 2, 2}, rng));
        FeatureMap m1 = compute_reference_map(maps);
        std::reverse(maps.begin(), maps.end());
        FeatureMap m2 = compute_reference_map(maps);
        CHECK(max_abs_diff(m1, m2) == 0.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_reference_map({}), std::invalid_argument);
        FeatureMap odd({4, 3, 3});
        CHECK_THROWS_AS(compute_reference_map({a, odd}), std::invalid_argument);
    }
}

TEST_CASE("residual_map") {
    Rng rng(8);
    FeatureMap a = oracles::random_tensor({5, 3, 3}, rng);
    FeatureMap b = oracles::random_tensor({5, 3, 3}, rng);

    FeatureMap zero = residual_map(a, a);
    for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

    FeatureMap zeros({5, 3, 3});
    FeatureMap neg = residual_map(zeros, a);
    for (std::size_t i = 0; i < neg.size(); ++i) CHECK(neg[i] == -a[i]);

    FeatureMap r = residual_map(a, b);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == a[i] - b[i]); // loop oracle

    FeatureMap r2 = residual_map(b, a);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == -r2[i]); // anti-symmetry, exact

    FeatureMap odd({5, 2, 2});
    CHECK_THROWS_AS(residual_map(a, odd), std::invalid_argument);
}

TEST_CASE("residual_score") {
    Rng rng(9);
    FeatureMap mr = oracles::random_tensor({4, 3, 3}, rng);
    ReferenceSet rs;
    rs.n_reference = 1;
    rs.mean_maps.emplace(24, mr);
    std::vector<double> w(4);
    for (double& v : w) v = uniform_real(rng, -1, 1);

    SUBCASE("zero residual through a zero-bias classifier scores exactly 0") {
        CHECK(residual_score(mr, rs, 24, w, 0.0, 0.1) == 0.0);
    }
    SUBCASE("degenerate constant-score weights return the bias") {
        std::vector<double> zero(4, 0.0);
        CHECK(residual_score(oracles::random_tensor({4, 3, 3}, rng), rs, 24, zero, 1.25, 0.1) ==
              doctest::Approx(1.25));
    }
    SUBCASE("matches the chained oracle") {
        FeatureMap mx = oracles::random_tensor({4, 3, 3}, rng);
        ScoreMap s = patch_scores(residual_map(mr, mx), w, 0.3);
        std::vector<double> v(s.data(), s.data() + s.size());
        CHECK(residual_score(mx, rs, 24, w, 0.3, 0.1) ==
              doctest::Approx(oracles::topk_sort_mean(v, 0.1)));
    }
    SUBCASE("uninitialized reference set is a state error") {
        ReferenceSet empty;
        CHECK_THROWS_AS(residual_score(mr, empty, 24, w, 0.0, 0.1), std::logic_error);
    }
}

TEST_CASE("normality_score") {
    Rng rng(10);
    std::size_t c = 6, mid = 3;
    std::vector<double> w1(mid * c), b1(mid), w2(mid);
    for (double& v : w1) v = uniform_real(rng, -1, 1);
    for (double& v : b1) v = uniform_real(rng, -1, 1);
    for (double& v : w2) v = uniform_real(rng, -1, 1);

    SUBCASE("spatially constant map pools to the vector exactly") {
        FeatureMap m({c, 4, 4});
        std::vector<double> vec(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            vec[ch] = uniform_real(rng, -2, 2);
            for (std::size_t i = 0; i < 16; ++i) m.data()[ch * 16 + i] = vec[ch];
        }
        // oracle: computed from the pooled vector directly
        double expect = 0.5;
        for (std::size_t o = 0; o < mid; ++o) {
            double h = b1[o];
            for (std::size_t i = 0; i < c; ++i) h += w1[o * c + i] * vec[i];
            expect += w2[o] * std::max(0.0, h);
        }
        CHECK(normality_score(m, w1, b1, w2, 0.5) == doctest::Approx(expect).epsilon(1e-14));
    }
    SUBCASE("zero weights give the final bias") {
        FeatureMap m = oracles::random_tensor({c, 3, 3}, rng);
        std::vector<double> z1(mid * c, 0.0), zb(mid, 0.0), z2(mid, 0.0);
        CHECK(normality_score(m, z1, zb, z2, -0.7) == doctest::Approx(-0.7));
    }
    SUBCASE("pooled vector equals the per-channel mean oracle") {
        FeatureMap m = oracles::random_tensor({c, 3, 5}, rng);
        std::vector<double> pooled(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < 15; ++i) pooled[ch] += m.data()[ch * 15 + i];
            pooled[ch] /= 15.0;
        }
        double expect = 0.0;
        for (std::size_t o = 0; o < mid; ++o) {
            double h = b1[o];
            for (std::size_t i = 0; i < c; ++i) h += w1[o * c + i] * pooled[i];
            expect += w2[o] * std::max(0.0, h);
        }
        CHECK(std::abs(normality_score(m, w1, b1, w2, 0.0) - expect) <= 1e-12);
    }
    SUBCASE("shape mismatch is an error") {
        FeatureMap m = oracles::random_tensor({4, 3, 3}, rng);
        CHECK_THROWS_AS(normality_score(m, w1, b1, w2, 0.0), std::invalid_argument);
    }
}

TEST_CASE("normality_backward matches finite differences") {
    Rng rng(11);
    std::size_t c = 4, mid = 2;
    FeatureMap m = oracles::random_tensor({c, 3, 3}, rng);
    std::vector<double> w1(mid * c), b1(mid), w2(mid);
    for (double& v : w1) v = uniform_real(rng, -1, 1);
    for (double& v : b1) v = uniform_real(rng, -1, 1);
    for (double& v : w2) v = uniform_real(rng, -1, 1);

    std::vector<double> dw1(w1.size(), 0.0), db1(mid, 0.0), dw2(mid, 0.0);
    double db2 = 0.0;
    FeatureMap dmap;
    normality_backward(m, w1, b1, w2, 1.0, dw1, db1, dw2, db2, &dmap);

    for (std::size_t i = 0; i < w1.size(); ++i) {
        double fd = oracles::central_diff(
            [&](double v) {
                auto ww = w1;
                ww[i] = v;
                return normality_score(m, ww, b1, w2, 0.4);
            },
            w1[i]);
        CHECK(dw1[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    CHECK(db2 == doctest::Approx(1.0));
    std::size_t xi = 7;
    double fdx = oracles::central_diff(
        [&](double v) {
            FeatureMap mm = m;
            mm[xi] = v;
            return normality_score(mm, w1, b1, w2, 0.4);
        },
        m[xi]);
    CHECK(dmap[xi] == doctest::Approx(fdx).epsilon(1e-5));
}

TEST_CASE("composite_score") {
    SUBCASE("direct formula") {
        HeadScores hs;
        hs.seen = 0.2;
        hs.pseudo = 0.3;
        hs.residual = 0.1;
        hs.normality = 0.4;
        CHECK(composite_score({hs}, AblationMask::preset("DRA")) == doctest::Approx(0.2));
    }
    SUBCASE("mean over scales") {
        HeadScores a, b;
        a.seen = 0.4;
        b.seen = 0.6;
        CHECK(composite_score({a, b}, AblationMask::preset("DRA1A")) == doctest::Approx(0.5));
    }
    SUBCASE("single-head sum under DRA1A") {
        HeadScores hs;
        hs.seen = 0.7;
        CHECK(composite_score({hs}, AblationMask::preset("DRA1A")) == doctest::Approx(0.7));
    }
    SUBCASE("additivity: enabling an extra abnormality head adds its score exactly") {
        Rng rng(12);
        for (int t = 0; t < 100; ++t) {
            HeadScores two, three;
            two.seen = three.seen = uniform_real(rng, -2, 2);
            two.pseudo = three.pseudo = uniform_real(rng, -2, 2);
            double extra = uniform_real(rng, -2, 2);
            three.residual = extra;
            double c2 = composite_score({two}, AblationMask::preset("DRA2A"));
            double c3 = composite_score({three}, AblationMask::preset("DRA3Ar"));
            CHECK(c3 - c2 == doctest::Approx(extra).epsilon(1e-14));
        }
    }
    SUBCASE("consistency errors") {
        HeadScores hs;
        hs.seen = 0.1;
        hs.pseudo = 0.2; // disabled under DRA1A but present
        CHECK_THROWS_AS(composite_score({hs}, AblationMask::preset("DRA1A")),
                        std::invalid_argument);
        HeadScores missing;
        missing.seen = 0.1; // pseudo enabled but absent
        CHECK_THROWS_AS(composite_score({missing}, AblationMask::preset("DRA2A")),
                        std::invalid_argument);
        CHECK_THROWS_AS(composite_score({}, AblationMask::preset("DRA")), std::invalid_argument);
    }
}

TEST_CASE("ablation mask presets") {
    CHECK(AblationMask::preset("DRA1A").name() == "DRA1A");
    CHECK(AblationMask::preset("DRA3An").normality);
    CHECK_FALSE(AblationMask::preset("DRA3An").residual);
    CHECK_THROWS_AS(AblationMask::preset("DRA9"), std::invalid_argument);
    AblationMask none{false, false, false, true};
    CHECK_THROWS_AS(none.validate(), std::invalid_argument);
}
