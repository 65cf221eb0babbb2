#include "dra/featurenet.hpp"

#include <cmath>
#include <stdexcept>

#include "dra/nn.hpp"

namespace dra {

namespace {

constexpr double kImagenetMean[3] = {0.485, 0.456, 0.406};
constexpr double kImagenetStd[3] = {0.229, 0.224, 0.225};

void init_uniform_fan_in(std::span<double> w, std::size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = uniform_real(rng, -bound, bound);
}

struct BlockNames {
    std::string conv1, bn1s, bn1b, conv2, bn2s, bn2b, down, downbns, downbnb;
};

BlockNames block_names(int layer, int block) {
    std::string p = "backbone.layer" + std::to_string(layer) + "." + std::to_string(block) + ".";
    return {p + "conv1.w", p + "bn1.scale", p + "bn1.shift",
            p + "conv2.w", p + "bn2.scale", p + "bn2.shift",
            p + "down.w",  p + "downbn.scale", p + "downbn.shift"};
}

} // namespace

BackboneArch parse_arch(const std::string& name) {
    if (name == "tiny") return BackboneArch::Tiny;
    if (name == "resnet18") return BackboneArch::Resnet18;
    throw std::invalid_argument("unknown backbone '" + name + "' (expected tiny or resnet18)");
}

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& store, Rng& init_rng) : cfg_(cfg) {
    if (cfg_.arch == BackboneArch::Tiny)
        build_tiny(store, init_rng);
    else
        build_resnet18(store, init_rng);
}

void Backbone::build_tiny(ParamStore& store, Rng& rng) {
    auto add_conv = [&](const std::string& name, std::size_t oc, std::size_t ic) {
        store.add(name + ".w", {oc, ic, 3, 3});
        store.add(name + ".b", {oc});
        init_uniform_fan_in(store.view(name + ".w"), ic * 9, rng);
        init_uniform_fan_in(store.view(name + ".b"), ic * 9, rng);
        param_names_.push_back(name + ".w");
        param_names_.push_back(name + ".b");
    };
    add_conv("backbone.conv1", 64, 3);
    add_conv("backbone.conv2", 64, 64);
    add_conv("backbone.conv3", 64, 64);
}

void Backbone::build_resnet18(ParamStore& store, Rng& rng) {
    auto add_conv = [&](const std::string& name, std::size_t oc, std::size_t ic, std::size_t k) {
        store.add(name, {oc, ic, k, k});
        init_uniform_fan_in(store.view(name), ic * k * k, rng);
        param_names_.push_back(name);
    };
    auto add_affine = [&](const std::string& scale, const std::string& shift, std::size_t c) {
        store.add(scale, {c});
        store.add(shift, {c});
        auto s = store.view(scale);
        for (double& v : s) v = 1.0;
        param_names_.push_back(scale);
        param_names_.push_back(shift);
    };

    add_conv("backbone.conv1.w", 64, 3, 7);
    add_affine("backbone.bn1.scale", "backbone.bn1.shift", 64);

    const std::size_t widths[4] = {64, 128, 256, 512};
    std::size_t in_ch = 64;
    for (int layer = 1; layer <= 4; ++layer) {
        std::size_t out_ch = widths[layer - 1];
        for (int block = 0; block < 2; ++block) {
            BlockNames n = block_names(layer, block);
            std::size_t bin = block == 0 ? in_ch : out_ch;
            add_conv(n.conv1, out_ch, bin, 3);
            add_affine(n.bn1s, n.bn1b, out_ch);
            add_conv(n.conv2, out_ch, out_ch, 3);
            add_affine(n.bn2s, n.bn2b, out_ch);
            if (block == 0 && layer > 1) {
                add_conv(n.down, out_ch, bin, 1);
                add_affine(n.downbns, n.downbnb, out_ch);
            }
        }
        in_ch = out_ch;
    }
}

Tensor Backbone::normalize_input(const ImageTensor& img) const {
    if (!cfg_.imagenet_normalization) return img;
    Tensor out = img;
    std::size_t hw = img.dim(1) * img.dim(2);
    for (std::size_t c = 0; c < 3; ++c) {
        double* row = out.data() + c * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] = (row[i] - kImagenetMean[c]) / kImagenetStd[c];
    }
    return out;
}

FeatureMap Backbone::features(const ImageTensor& img, const ParamStore& store) const {
    return features(img, store, nullptr);
}

FeatureMap Backbone::features(const ImageTensor& img, const ParamStore& store,
                              Trace* trace) const {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("backbone input must be [3,h,w], got " + img.shape_str());
    std::size_t ds = cfg_.downsample();
    if (img.dim(1) % ds != 0 || img.dim(2) % ds != 0 || img.dim(1) < ds || img.dim(2) < ds)
        throw std::invalid_argument("input size " + img.shape_str() +
                                    " incompatible with downsample factor " + std::to_string(ds));
    Tensor x = normalize_input(img);
    FeatureMap m = cfg_.arch == BackboneArch::Tiny ? forward_tiny(x, store, trace)
                                                   : forward_resnet18(x, store, trace);
    if (!m.all_finite()) throw std::runtime_error("backbone produced non-finite activations");
    return m;
}

FeatureMap Backbone::forward_tiny(const Tensor& x, const ParamStore& store, Trace* trace) const {
    Tensor cur = x;
    std::vector<Tensor> acts;
    const char* names[3] = {"backbone.conv1", "backbone.conv2", "backbone.conv3"};
    for (int i = 0; i < 3; ++i) {
        if (trace) acts.push_back(cur); // conv input
        Tensor a = nn::conv2d(cur, store.view(std::string(names[i]) + ".w"),
                              store.view(std::string(names[i]) + ".b"), 64, 3, 2, 1);
        if (trace) acts.push_back(a); // pre-activation
        cur = nn::relu(a);
    }
    if (trace) trace->acts = std::move(acts);
    return cur;
}

void Backbone::backward_tiny(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                             std::vector<double>& grads) const {
    auto gview = [&](const std::string& name) {
        const auto& b = store.block(name);
        return std::span<double>(grads.data() + b.offset, b.len);
    };
    const char* names[3] = {"backbone.conv1", "backbone.conv2", "backbone.conv3"};
    Tensor d = dmap;
    for (int i = 2; i >= 0; --i) {
        const Tensor& conv_in = trace.acts[2 * i];
        const Tensor& pre_act = trace.acts[2 * i + 1];
        Tensor da = nn::relu_backward(pre_act, d);
        Tensor dx;
        nn::conv2d_backward(conv_in, store.view(std::string(names[i]) + ".w"), 64, 3, 2, 1, da,
                            i > 0 ? &dx : nullptr, gview(std::string(names[i]) + ".w"),
                            gview(std::string(names[i]) + ".b"));
        if (i > 0) d = std::move(dx);
    }
}

// Residual-18 forward. Trace layout per basic block:
//   [in, a1(conv1 out), b1(affine out), r1, a2(conv2 out), b2, (ds_a), sum]
// The stem contributes [x, a1, b1, r1(pre-pool)].
FeatureMap Backbone::forward_resnet18(const Tensor& x, const ParamStore& store,
                                      Trace* trace) const {
    std::vector<Tensor> acts;
    auto keep = [&](const Tensor& t) {
        if (trace) acts.push_back(t);
    };

    keep(x);
    Tensor a1 = nn::conv2d(x, store.view("backbone.conv1.w"),
                           std::vector<double>(64, 0.0), 64, 7, 2, 3);
    keep(a1);
    Tensor b1 = nn::channel_affine(a1, store.view("backbone.bn1.scale"),
                                   store.view("backbone.bn1.shift"));
    keep(b1);
    Tensor r1 = nn::relu(b1);
    keep(r1);
    Tensor cur = nn::maxpool3x3s2(r1);

    const std::size_t widths[4] = {64, 128, 256, 512};
    for (int layer = 1; layer <= 4; ++layer) {
        std::size_t out_ch = widths[layer - 1];
        for (int block = 0; block < 2; ++block) {
            BlockNames n = block_names(layer, block);
            std::size_t stride = (block == 0 && layer > 1) ? 2 : 1;
            keep(cur);
            Tensor ba1 = nn::conv2d(cur, store.view(n.conv1), std::vector<double>(out_ch, 0.0),
                                    out_ch, 3, stride, 1);
            keep(ba1);
            Tensor bb1 = nn::channel_affine(ba1, store.view(n.bn1s), store.view(n.bn1b));
            keep(bb1);
            Tensor br1 = nn::relu(bb1);
            keep(br1);
            Tensor ba2 = nn::conv2d(br1, store.view(n.conv2), std::vector<double>(out_ch, 0.0),
                                    out_ch, 3, 1, 1);
            keep(ba2);
            Tensor bb2 = nn::channel_affine(ba2, store.view(n.bn2s), store.view(n.bn2b));
            keep(bb2);
            Tensor shortcut;
            if (block == 0 && layer > 1) {
                Tensor dsa = nn::conv2d(cur, store.view(n.down), std::vector<double>(out_ch, 0.0),
                                        out_ch, 1, 2, 0);
                keep(dsa);
                shortcut = nn::channel_affine(dsa, store.view(n.downbns), store.view(n.downbnb));
            } else {
                shortcut = cur;
            }
            Tensor sum = bb2 + shortcut;
            keep(sum);
            cur = nn::relu(sum);
        }
    }
    if (trace) trace->acts = std::move(acts);
    return cur;
}

void Backbone::backward_resnet18(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                                 std::vector<double>& grads) const {
    auto gview = [&](const std::string& name) {
        const auto& b = store.block(name);
        return std::span<double>(grads.data() + b.offset, b.len);
    };

    // Walk the trace backwards, mirroring forward_resnet18.
    std::size_t pos = trace.acts.size();
    auto take = [&]() -> const Tensor& { return trace.acts[--pos]; };

    Tensor d = dmap;
    const std::size_t widths[4] = {64, 128, 256, 512};
    for (int layer = 4; layer >= 1; --layer) {
        std::size_t out_ch = widths[layer - 1];
        for (int block = 1; block >= 0; --block) {
            BlockNames n = block_names(layer, block);
            bool has_down = (block == 0 && layer > 1);
            std::size_t stride = has_down ? 2 : 1;

            const Tensor& sum = take();
            const Tensor* dsa = has_down ? &take() : nullptr;
            const Tensor& bb2 = take();
            const Tensor& ba2 = take();
            const Tensor& br1 = take();
            const Tensor& bb1 = take();
            const Tensor& ba1 = take();
            const Tensor& in = take();
            (void)bb2;

            Tensor dsum = nn::relu_backward(sum, d);

            // main path
            Tensor dba2;
            nn::channel_affine_backward(ba2, store.view(n.bn2s), dsum, &dba2, gview(n.bn2s),
                                        gview(n.bn2b));
            Tensor dbr1;
            nn::conv2d_backward(br1, store.view(n.conv2), out_ch, 3, 1, 1, dba2, &dbr1,
                                gview(n.conv2), std::span<double>());
            Tensor dbb1 = nn::relu_backward(bb1, dbr1);
            Tensor dba1;
            nn::channel_affine_backward(ba1, store.view(n.bn1s), dbb1, &dba1, gview(n.bn1s),
                                        gview(n.bn1b));
            Tensor din;
            nn::conv2d_backward(in, store.view(n.conv1), out_ch, 3, stride, 1, dba1, &din,
                                gview(n.conv1), std::span<double>());

            // shortcut path
            if (has_down) {
                Tensor ddsa;
                nn::channel_affine_backward(*dsa, store.view(n.downbns), dsum, &ddsa,
                                            gview(n.downbns), gview(n.downbnb));
                Tensor din2;
                nn::conv2d_backward(in, store.view(n.down), out_ch, 1, 2, 0, ddsa, &din2,
                                    gview(n.down), std::span<double>());
                din += din2;
            } else {
                din += dsum;
            }
            d = std::move(din);
        }
    }

    const Tensor& r1 = take();
    const Tensor& b1 = take();
    const Tensor& a1 = take();
    const Tensor& x = take();
    Tensor dr1 = nn::maxpool3x3s2_backward(r1, d);
    Tensor db1 = nn::relu_backward(b1, dr1);
    Tensor da1;
    nn::channel_affine_backward(a1, store.view("backbone.bn1.scale"), db1, &da1,
                                gview("backbone.bn1.scale"), gview("backbone.bn1.shift"));
    nn::conv2d_backward(x, store.view("backbone.conv1.w"), 64, 7, 2, 3, da1, nullptr,
                        gview("backbone.conv1.w"), std::span<double>());
}

void Backbone::backward(const Trace& trace, const Tensor& dmap, const ParamStore& store,
                        std::vector<double>& grads) const {
    if (cfg_.arch == BackboneArch::Tiny)
        backward_tiny(trace, dmap, store, grads);
    else
        backward_resnet18(trace, dmap, store, grads);
}

std::vector<ImageTensor> pyramid_views(const ImageTensor& img, const std::vector<double>& scales,
                                       std::size_t min_side) {
    if (scales.empty()) throw std::invalid_argument("pyramid_views: scales must be nonempty");
    check_image(img);
    std::vector<ImageTensor> views;
    views.reserve(scales.size());
    for (double s : scales) {
        if (!(s > 0.0) || s > 1.0)
            throw std::invalid_argument("pyramid scale must lie in (0,1], got " + std::to_string(s));
        auto out_h = static_cast<std::size_t>(std::lround(static_cast<double>(img.dim(1)) * s));
        auto out_w = static_cast<std::size_t>(std::lround(static_cast<double>(img.dim(2)) * s));
        if (out_h < min_side || out_w < min_side)
            throw std::invalid_argument("pyramid scale " + std::to_string(s) +
                                        " produces a view below the backbone minimum of " +
                                        std::to_string(min_side));
        views.push_back(bilinear_resize(img, out_h, out_w));
    }
    return views;
}

} // namespace dra
