#pragma once

#include <string>
#include <vector>

#include "dra/image.hpp"
#include "dra/params.hpp"
#include "dra/rng.hpp"
#include "dra/tensor.hpp"

namespace dra {

using FeatureMap = Tensor; // [c',h',w']

enum class BackboneArch {
    Tiny,    // 3 stride-2 conv blocks, 64 channels, downsample 8; desk-scale runs
    Resnet18 // residual-18-style, 512 channels, downsample 32; pretrained weights
};

struct BackboneConfig {
    BackboneArch arch = BackboneArch::Tiny;
    std::string weights_path;            // optional pretrained container
    bool imagenet_normalization = false; // channel mean/std applied before conv1

    std::size_t feature_channels() const { return arch == BackboneArch::Tiny ? 64 : 512; }
    std::size_t downsample() const { return arch == BackboneArch::Tiny ? 8 : 32; }
    std::size_t min_input() const { return downsample(); }
    std::string arch_name() const { return arch == BackboneArch::Tiny ? "tiny" : "resnet18"; }
};

BackboneArch parse_arch(const std::string& name);

// Feature extraction network f: X -> M. Parameters live in an external
// ParamStore under "backbone.*" blocks so the trainer can optimize them
// jointly with the heads. Forward passes are const and safe to run
// concurrently; parameter updates need exclusive access.
class Backbone {
public:
    // Allocates and initializes parameter blocks (fan-in-scaled uniform).
    Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& init_rng);

    const BackboneConfig& config() const { return cfg_; }

    // f(x): throws std::invalid_argument on shape mismatch and
    // std::runtime_error on non-finite activations.
    FeatureMap features(const ImageTensor& img, const ParamStore& store) const;

    // Training-mode forward; trace holds the activations backward() needs.
    struct Trace {
        std::vector<Tensor> acts;
    };
    FeatureMap features(const ImageTensor& img, const ParamStore& store, Trace* trace) const;

    // Accumulates d(loss)/d(params) into the flat grad buffer (same layout as
    // the store). dmap is d(loss)/d(feature map).
    void backward(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                  std::vector<double>& grads) const;

    // Names of all backbone parameter blocks, in allocation order.
    const std::vector<std::string>& param_names() const { return param_names_; }

private:
    void build_tiny(ParamStore& store, Rng& rng);
    void build_resnet18(ParamStore& store, Rng& rng);
    FeatureMap forward_tiny(const Tensor& x, const ParamStore& store, Trace* trace) const;
    FeatureMap forward_resnet18(const Tensor& x, const ParamStore& store, Trace* trace) const;
    void backward_tiny(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                       std::vector<double>& grads) const;
    void backward_resnet18(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                           std::vector<double>& grads) const;
    Tensor normalize_input(const ImageTensor& img) const;

    BackboneConfig cfg_;
    std::vector<std::string> param_names_;
};

// Resized copies of the input, one per scale, bilinear resampling. Scales
// must lie in (0,1]; a scale whose output side would fall below min_side is
// a configuration error.
std::vector<ImageTensor> pyramid_views(const ImageTensor& img, const std::vector<double>& scales,
                                       std::size_t min_side = 1);

} // namespace dra
