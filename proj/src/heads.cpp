#include "dra/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dra/nn.hpp"

namespace dra {

AblationMask AblationMask::preset(const std::string& name) {
    if (name == "DRA1A") return {true, false, false, false};
    if (name == "DRA2A") return {true, true, false, false};
    if (name == "DRA3Ar") return {true, true, true, false};
    if (name == "DRA3An") return {true, true, false, true};
    if (name == "DRA") return {true, true, true, true};
    throw std::invalid_argument("unknown ablation preset '" + name + "'");
}

std::string AblationMask::name() const {
    for (const char* p : {"DRA1A", "DRA2A", "DRA3Ar", "DRA3An", "DRA"})
        if (*this == preset(p)) return p;
    std::string s = "custom[";
    if (seen) s += 's';
    if (pseudo) s += 'p';
    if (residual) s += 'r';
    if (normality) s += 'n';
    return s + "]";
}

void AblationMask::validate() const {
    if (!seen && !pseudo && !residual)
        throw std::invalid_argument("ablation mask must enable at least one abnormality head");
}

ScoreMap patch_scores(const FeatureMap& map, std::span<const double> w, double b) {
    if (map.ndim() != 3) throw std::invalid_argument("patch_scores expects [c',h',w'] map");
    std::size_t c = map.dim(0), h = map.dim(1), wd = map.dim(2);
    if (w.size() != c)
        throw std::invalid_argument("patch classifier width " + std::to_string(w.size()) +
                                    " does not match feature channels " + std::to_string(c));
    ScoreMap out({h, wd});
    std::size_t hw = h * wd;
    for (std::size_t i = 0; i < hw; ++i) out[i] = b;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double wv = w[ch];
        const double* row = map.data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) out[i] += wv * row[i];
    }
    return out;
}

TopKSelection topk_mil_select(const ScoreMap& scores, double k_fraction) {
    if (scores.size() == 0) throw std::invalid_argument("topk_mil_pool: empty score map");
    if (!(k_fraction > 0.0) || k_fraction > 1.0)
        throw std::invalid_argument("k_fraction must lie in (0,1]");
    std::size_t n = scores.size();
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(n))));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b; // ties: lowest spatial index wins
    });
    idx.resize(k);

    // Selected values are summed in descending order (the sort order), which
    // depends only on the multiset of values, so the pooled value is exactly
    // invariant under permutations of the map.
    double sum = 0.0;
    for (std::size_t i : idx) sum += scores[i];
    return {sum / static_cast<double>(k), std::move(idx)};
}

double topk_mil_pool(const ScoreMap& scores, double k_fraction) {
    return topk_mil_select(scores, k_fraction).value;
}

double mil_head_score(const FeatureMap& map, std::span<const double> w, double b,
                      double k_fraction) {
    return topk_mil_pool(patch_scores(map, w, b), k_fraction);
}

void mil_head_backward(const FeatureMap& map, std::span<const double> w, double b,
                       double k_fraction, double dscore, std::span<double> dw, double& db,
                       FeatureMap* dmap) {
    // Recompute the forward selection so gradient routing matches it exactly,
    // including index-based tie breaks.
    TopKSelection sel = topk_mil_select(patch_scores(map, w, b), k_fraction);
    std::size_t c = map.dim(0), hw = map.dim(1) * map.dim(2);
    double g = dscore / static_cast<double>(sel.indices.size());
    if (dmap && dmap->size() == 0) *dmap = FeatureMap({c, map.dim(1), map.dim(2)});
    for (std::size_t i : sel.indices) {
        db += g;
        for (std::size_t ch = 0; ch < c; ++ch) {
            dw[ch] += g * map.data()[ch * hw + i];
            if (dmap) dmap->data()[ch * hw + i] += g * w[ch];
        }
    }
}

FeatureMap compute_reference_map(const std::vector<FeatureMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("compute_reference_map: empty reference list");
    for (const FeatureMap& m : maps)
        if (!m.same_shape(maps.front()))
            throw std::invalid_argument("compute_reference_map: heterogeneous map shapes");
    std::size_t n = maps.size();
    FeatureMap out = maps.front();
    if (n == 1) return out;
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) vals[j] = maps[j][i];
        std::sort(vals.begin(), vals.end());
        double s = 0.0;
        for (double v : vals) s += v;
        out[i] = s / static_cast<double>(n);
    }
    return out;
}

FeatureMap residual_map(const FeatureMap& m_r, const FeatureMap& m_x) {
    if (!m_r.same_shape(m_x))
        throw std::invalid_argument("residual_map: shape mismatch " + m_r.shape_str() + " vs " +
                                    m_x.shape_str());
    return m_r - m_x;
}

const FeatureMap& ReferenceSet::map_for(std::size_t input_side) const {
    auto it = mean_maps.find(input_side);
    if (it == mean_maps.end())
        throw std::logic_error("reference set has no mean map for input side " +
                               std::to_string(input_side));
    return it->second;
}

double residual_score(const FeatureMap& m_x, const ReferenceSet& refset,
                      std::size_t input_side, std::span<const double> w, double b,
                      double k_fraction) {
    if (!refset.initialized())
        throw std::logic_error("residual_score: reference set not initialized");
    return mil_head_score(residual_map(refset.map_for(input_side), m_x), w, b, k_fraction);
}

namespace {

std::vector<double> global_average_pool(const FeatureMap& map) {
    std::size_t c = map.dim(0), hw = map.dim(1) * map.dim(2);
    std::vector<double> pooled(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* row = map.data() + ch * hw;
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += row[i];
        pooled[ch] = s / static_cast<double>(hw);
    }
    return pooled;
}

} // namespace

double normality_score(const FeatureMap& map, std::span<const double> w1,
                       std::span<const double> b1, std::span<const double> w2, double b2) {
    std::size_t c = map.dim(0);
    std::size_t mid = b1.size();
    if (w1.size() != mid * c)
        throw std::invalid_argument("normality classifier input width does not match c'");
    std::vector<double> pooled = global_average_pool(map);
    std::vector<double> h = nn::linear(pooled, w1, b1, mid);
    double s = b2;
    for (std::size_t i = 0; i < mid; ++i) s += w2[i] * std::max(0.0, h[i]);
    return s;
}

void normality_backward(const FeatureMap& map, std::span<const double> w1,
                        std::span<const double> b1, std::span<const double> w2, double dscore,
                        std::span<double> dw1, std::span<double> db1, std::span<double> dw2,
                        double& db2, FeatureMap* dmap) {
    std::size_t c = map.dim(0), hw = map.dim(1) * map.dim(2);
    std::size_t mid = b1.size();
    std::vector<double> pooled = global_average_pool(map);
    std::vector<double> h = nn::linear(pooled, w1, b1, mid);

    db2 += dscore;
    std::vector<double> dh(mid, 0.0);
    for (std::size_t i = 0; i < mid; ++i) {
        double r = std::max(0.0, h[i]);
        dw2[i] += dscore * r;
        dh[i] = h[i] > 0.0 ? dscore * w2[i] : 0.0;
    }
    std::vector<double> dpooled(c, 0.0);
    nn::linear_backward(pooled, w1, dh, mid, dpooled, dw1, db1);
    if (dmap) {
        if (dmap->size() == 0) *dmap = FeatureMap({c, map.dim(1), map.dim(2)});
        double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double g = dpooled[ch] * inv;
            double* row = dmap->data() + ch * hw;
            for (std::size_t i = 0; i < hw; ++i) row[i] += g;
        }
    }
}

double composite_score(const std::vector<HeadScores>& per_scale, const AblationMask& mask) {
    if (per_scale.empty()) throw std::invalid_argument("composite_score: no per-scale scores");
    auto check = [](bool enabled, const std::optional<double>& v, const char* head) {
        if (enabled && !v.has_value())
            throw std::invalid_argument(std::string("composite_score: enabled head '") + head +
                                        "' has no score");
        if (!enabled && v.has_value())
            throw std::invalid_argument(std::string("composite_score: disabled head '") + head +
                                        "' carries a score");
    };
    double total = 0.0;
    for (const HeadScores& hs : per_scale) {
        check(mask.seen, hs.seen, "seen");
        check(mask.pseudo, hs.pseudo, "pseudo");
        check(mask.residual, hs.residual, "residual");
        check(mask.normality, hs.normality, "normality");
        double s = 0.0;
        if (mask.seen) s += *hs.seen;
        if (mask.pseudo) s += *hs.pseudo;
        if (mask.residual) s += *hs.residual;
        if (mask.normality) s -= *hs.normality;
        total += s;
    }
    return total / static_cast<double>(per_scale.size());
}

} // namespace dra
