#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dra/config.hpp"
#include "dra/featurenet.hpp"
#include "dra/heads.hpp"
#include "dra/params.hpp"
#include "dra/protocols.hpp"

namespace dra {

// Loads images on demand, resizes them to the pipeline input size and caches
// them (8-bit for file-backed data). In-memory images can be injected for
// tests and synthetic pipelines.
class ImageStore {
public:
    explicit ImageStore(std::size_t input_size) : input_size_(input_size) {}

    std::size_t input_size() const { return input_size_; }
    void put(const std::string& id, ImageTensor img);
    ImageTensor get(const SampleRef& ref) const;

private:
    std::size_t input_size_;
    std::map<std::string, ImageTensor> injected_;
    mutable std::map<std::string, std::vector<std::uint8_t>> cache_; // id -> rgb bytes
};

// The multi-head network: shared backbone plus up to four scoring heads with
// disjoint parameters. Heads disabled by the ablation mask are never
// allocated. Scoring is const and safe for concurrent readers.
class Model {
public:
    static Model create(const ExperimentConfig& cfg, bool load_pretrained = true);

    const ExperimentConfig& config() const { return cfg_; }
    const AblationMask& mask() const { return mask_; }
    const Backbone& backbone() const { return *backbone_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    ReferenceSet& refset() { return refset_; }
    const ReferenceSet& refset() const { return refset_; }
    double k_fraction() const { return cfg_.model.k_fraction; }

    // Enabled-head scores for a feature map extracted from an image of side
    // `input_side` (needed to pick the matching reference map).
    HeadScores head_scores(const FeatureMap& m, std::size_t input_side) const;

    // Pyramid scoring: one HeadScores per configured scale.
    std::vector<HeadScores> score_image(const ImageTensor& img) const;
    double composite(const ImageTensor& img) const;

    // Sides the pyramid produces for the configured input size.
    std::vector<std::size_t> pyramid_sides() const;

private:
    Model() = default;

    ExperimentConfig cfg_;
    AblationMask mask_;
    ParamStore params_;
    std::unique_ptr<Backbone> backbone_;
    ReferenceSet refset_;
};

} // namespace dra
