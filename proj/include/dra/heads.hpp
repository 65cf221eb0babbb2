#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dra/featurenet.hpp"
#include "dra/tensor.hpp"

namespace dra {

// Patch anomaly scores, one scalar per feature-map location.
using ScoreMap = Tensor; // [h',w']

// Which heads a model variant trains and scores with.
struct AblationMask {
    bool seen = true;
    bool pseudo = true;
    bool residual = true;
    bool normality = true;

    // DRA1A / DRA2A / DRA3Ar / DRA3An / DRA
    static AblationMask preset(const std::string& name);
    std::string name() const;
    void validate() const; // at least one abnormality head
    bool operator==(const AblationMask&) const = default;
};

// The four scalar scores for one image at one pyramid scale. Disabled heads
// are absent, not zero-filled.
struct HeadScores {
    std::optional<double> seen;
    std::optional<double> pseudo;
    std::optional<double> residual;
    std::optional<double> normality;
};

// 1x1 patch classifier: weights w[c'], bias b. Applies the same linear map
// at every spatial location of a [c',h',w'] map.
ScoreMap patch_scores(const FeatureMap& map, std::span<const double> w, double b);

// Mean of the K largest entries, K = max(1, floor(k_fraction * n)).
double topk_mil_pool(const ScoreMap& scores, double k_fraction);

// Selection detail for backpropagation: gradient flows only to the chosen
// entries, ties at the boundary broken by lowest spatial index.
struct TopKSelection {
    double value = 0.0;
    std::vector<std::size_t> indices;
};
TopKSelection topk_mil_select(const ScoreMap& scores, double k_fraction);

// Seen and pseudo heads share machinery but never parameters.
double mil_head_score(const FeatureMap& map, std::span<const double> w, double b,
                      double k_fraction);

// Gradient of mil_head_score wrt (w, b, map). dscore is d(loss)/d(score).
void mil_head_backward(const FeatureMap& map, std::span<const double> w, double b,
                       double k_fraction, double dscore, std::span<double> dw, double& db,
                       FeatureMap* dmap);

// Element-wise mean of f(x_r) over the reference images. Accumulation order
// is value-sorted per element so the result is exactly invariant under
// permutations of the reference list.
FeatureMap compute_reference_map(const std::vector<FeatureMap>& maps);

// m_r - m_x, element-wise.
FeatureMap residual_map(const FeatureMap& m_r, const FeatureMap& m_x);

// Fixed reference data for residual abnormality learning. Write-once: the
// maps are set when the reference images are sampled and never refreshed.
struct ReferenceSet {
    std::size_t n_reference = 0;
    std::vector<std::string> image_ids;        // provenance only
    std::map<std::size_t, FeatureMap> mean_maps; // keyed by input side length

    bool initialized() const { return !mean_maps.empty(); }
    const FeatureMap& map_for(std::size_t input_side) const;
};

double residual_score(const FeatureMap& m_x, const ReferenceSet& refset,
                      std::size_t input_side, std::span<const double> w, double b,
                      double k_fraction);

// Global average pool then a two-layer classifier (c' -> c'/2 -> 1, rectified
// linear between the layers).
double normality_score(const FeatureMap& map, std::span<const double> w1,
                       std::span<const double> b1, std::span<const double> w2, double b2);

void normality_backward(const FeatureMap& map, std::span<const double> w1,
                        std::span<const double> b1, std::span<const double> w2, double dscore,
                        std::span<double> dw1, std::span<double> db1, std::span<double> dw2,
                        double& db2, FeatureMap* dmap);

// Per scale: sum of enabled abnormality scores minus the normality score;
// final score is the mean over scales. Scores present for disabled heads (or
// missing for enabled ones) are a consistency error.
double composite_score(const std::vector<HeadScores>& per_scale, const AblationMask& mask);

} // namespace dra
