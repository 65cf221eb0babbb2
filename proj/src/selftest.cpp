#include "dra/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <vector>

#include "dra/eval.hpp"
#include "dra/heads.hpp"
#include "dra/losses.hpp"
#include "dra/protocols.hpp"
#include "dra/pseudogen.hpp"
#include "dra/rng.hpp"

namespace dra {

namespace {

struct Runner {
    std::ostream& out;
    int failures = 0;

    void check(const char* name, const std::function<bool()>& fn) {
        bool ok = false;
        std::string what;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            what = e.what();
        }
        out << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!ok && !what.empty()) out << " (" << what << ")";
        out << "\n";
        if (!ok) ++failures;
    }
};

double sort_mean_oracle(const ScoreMap& s, double kf) {
    std::vector<double> v(s.data(), s.data() + s.size());
    std::sort(v.begin(), v.end(), std::greater<>());
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(kf * static_cast<double>(v.size()))));
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += v[i];
    return sum / static_cast<double>(k);
}

double pairwise_auc_oracle(const std::vector<int>& y, const std::vector<double>& s) {
    double num = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!y[i]) continue;
        ++np;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j]) continue;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    for (int v : y) nn += v == 0 ? 1 : 0;
    return num / (static_cast<double>(np) * static_cast<double>(nn));
}

} // namespace

int run_selftest(std::ostream& out) {
    Runner r{out};
    Rng rng(20260811);

    r.check("topk_mil_pool matches sort-then-mean oracle", [&] {
        for (int t = 0; t < 200; ++t) {
            std::size_t h = static_cast<std::size_t>(uniform_int(rng, 1, 16));
            std::size_t w = static_cast<std::size_t>(uniform_int(rng, 1, 16));
            ScoreMap m({h, w});
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = uniform_real(rng, -3.0, 3.0);
            for (double kf : {0.05, 0.1, 0.5, 1.0})
                if (std::abs(topk_mil_pool(m, kf) - sort_mean_oracle(m, kf)) > 1e-12) return false;
        }
        return true;
    });

    r.check("deviation loss gradient matches finite differences", [&] {
        PriorScoreSet prior = PriorScoreSet::draw(5000, rng);
        double a = 5.0;
        for (int t = 0; t < 100; ++t) {
            double s = uniform_real(rng, -8.0, 8.0);
            int y = uniform_int(rng, 0, 1) ? 1 : 0;
            double dev = deviation(s, prior);
            if (std::abs(dev) < 0.05 || std::abs(dev - a) < 0.05) continue; // kinks
            double h = 1e-6;
            double fd = (deviation_loss(s + h, y, prior, a) - deviation_loss(s - h, y, prior, a)) /
                        (2.0 * h);
            double an = deviation_loss_grad(s, y, prior, a).second;
            double denom = std::max(std::abs(fd), 1e-12);
            if (std::abs(an - fd) / denom > 1e-4) return false;
        }
        return true;
    });

    r.check("cutmix with identity transforms is the identity", [&] {
        for (int t = 0; t < 50; ++t) {
            ImageTensor x({3, 16, 16});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = uniform_real(rng);
            CutmixParams p;
            p.identity_jitter = true;
            p.identity_translation = true;
            PseudoResult res = cutmix(x, rng, p);
            if (max_abs_diff(res.image, x) != 0.0) return false;
        }
        return true;
    });

    r.check("cutmix leaves pixels outside the translated mask untouched", [&] {
        for (int t = 0; t < 50; ++t) {
            ImageTensor x({3, 16, 16});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = uniform_real(rng);
            PseudoResult res = cutmix(x, rng, CutmixParams{});
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t xx = 0; xx < 16; ++xx) {
                    if (res.pasted[y * 16 + xx]) continue;
                    for (std::size_t c = 0; c < 3; ++c)
                        if (res.image.at(c, y, xx) != x.at(c, y, xx)) return false;
                }
        }
        return true;
    });

    r.check("rank-sum AUC matches pairwise counting oracle", [&] {
        for (int t = 0; t < 100; ++t) {
            std::size_t n = static_cast<std::size_t>(uniform_int(rng, 5, 120));
            std::vector<int> y(n);
            std::vector<double> s(n);
            bool pos = false, neg = false;
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = uniform_int(rng, 0, 1) ? 1 : 0;
                s[i] = uniform_int(rng, 0, 4) == 0 ? 0.5 : uniform_real(rng); // inject ties
                (y[i] ? pos : neg) = true;
            }
            if (!pos || !neg) continue;
            if (std::abs(auc(y, s) - pairwise_auc_oracle(y, s)) > 1e-9) return false;
        }
        return true;
    });

    r.check("protocol splits keep train/test disjoint and honor the hard rule", [&] {
        for (int t = 0; t < 20; ++t) {
            DatasetCatalog cat;
            cat.name = "selftest";
            std::size_t n_classes = static_cast<std::size_t>(uniform_int(rng, 2, 4));
            for (std::size_t i = 0; i < 40; ++i)
                cat.normal_pool.push_back({"n" + std::to_string(i), "", ""});
            for (std::size_t c = 0; c < n_classes; ++c) {
                std::string cls = "c" + std::to_string(c);
                for (std::size_t i = 0; i < 15; ++i)
                    cat.anomalies[cls].push_back({cls + "/" + std::to_string(i), "", cls});
            }
            Rng srng(rng());
            SplitResult g = sample_general(cat, 10, srng);
            for (const SampleRef& a : g.train_anomalies)
                for (const SampleRef& b : g.test_anomalies)
                    if (a.id == b.id) return false;
            SplitResult hd = sample_hard(cat, 10, "c0", srng);
            for (const SampleRef& a : hd.test_anomalies)
                if (a.anomaly_class == "c0") return false;
            Rng nrng(rng());
            SplitResult one = nest_one_from_ten(hd, nrng);
            if (one.test_anomalies.size() != hd.test_anomalies.size()) return false;
        }
        return true;
    });

    r.check("residual machinery: anti-symmetry, mean oracle, zero at reference", [&] {
        FeatureMap a({4, 3, 3}), b({4, 3, 3});
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = uniform_real(rng, -2.0, 2.0);
            b[i] = uniform_real(rng, -2.0, 2.0);
        }
        FeatureMap ab = residual_map(a, b), ba = residual_map(b, a);
        for (std::size_t i = 0; i < ab.size(); ++i)
            if (ab[i] != -ba[i]) return false;
        std::vector<FeatureMap> maps = {a, b};
        FeatureMap mean = compute_reference_map(maps);
        for (std::size_t i = 0; i < mean.size(); ++i)
            if (std::abs(mean[i] - (a[i] + b[i]) / 2.0) > 1e-12) return false;
        ReferenceSet rs;
        rs.n_reference = 1;
        rs.mean_maps.emplace(24, a);
        std::vector<double> w(4);
        for (double& v : w) v = uniform_real(rng, -1.0, 1.0);
        return residual_score(a, rs, 24, w, 0.0, 0.1) == 0.0;
    });

    out << (r.failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return r.failures;
}

} // namespace dra
