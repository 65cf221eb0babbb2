#include "dra/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dra/io.hpp"
#include "dra/rng.hpp"

namespace dra {

void ImageStore::put(const std::string& id, ImageTensor img) {
    check_image(img);
    if (img.dim(1) != input_size_ || img.dim(2) != input_size_)
        img = bilinear_resize(img, input_size_, input_size_);
    injected_[id] = std::move(img);
}

ImageTensor ImageStore::get(const SampleRef& ref) const {
    auto it = injected_.find(ref.id);
    if (it != injected_.end()) return it->second;

    auto cit = cache_.find(ref.id);
    if (cit == cache_.end()) {
        if (ref.path.empty())
            throw std::runtime_error("sample '" + ref.id + "' has no path and was not injected");
        ImageTensor img = io::load_image(ref.path);
        if (img.dim(1) != input_size_ || img.dim(2) != input_size_)
            img = bilinear_resize(img, input_size_, input_size_);
        std::vector<std::uint8_t> bytes(img.size());
        for (std::size_t i = 0; i < img.size(); ++i)
            bytes[i] = static_cast<std::uint8_t>(
                std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
        cit = cache_.emplace(ref.id, std::move(bytes)).first;
    }
    ImageTensor img({3, input_size_, input_size_});
    const std::vector<std::uint8_t>& bytes = cit->second;
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<double>(bytes[i]) / 255.0;
    return img;
}

Model Model::create(const ExperimentConfig& cfg, bool load_pretrained) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.mask_ = AblationMask::preset(cfg.model.preset);

    BackboneConfig bc;
    bc.arch = parse_arch(cfg.model.backbone);
    bc.weights_path = cfg.model.weights;
    bc.imagenet_normalization = cfg.model.imagenet_normalization;

    Rng init = make_stream(cfg.train.seed, "init");
    m.backbone_ = std::make_unique<Backbone>(bc, m.params_, init);

    std::size_t c = bc.feature_channels();
    auto add_mil_head = [&](const std::string& name) {
        m.params_.add("head." + name + ".w", {c});
        m.params_.add("head." + name + ".b", {1});
        double bound = 1.0 / std::sqrt(static_cast<double>(c));
        for (double& v : m.params_.view("head." + name + ".w")) v = uniform_real(init, -bound, bound);
        m.params_.view("head." + name + ".b")[0] = uniform_real(init, -bound, bound);
    };
    if (m.mask_.seen) add_mil_head("seen");
    if (m.mask_.pseudo) add_mil_head("pseudo");
    if (m.mask_.residual) add_mil_head("residual");
    if (m.mask_.normality) {
        std::size_t mid = c / 2;
        m.params_.add("head.normality.w1", {mid, c});
        m.params_.add("head.normality.b1", {mid});
        m.params_.add("head.normality.w2", {mid});
        m.params_.add("head.normality.b2", {1});
        double b1 = 1.0 / std::sqrt(static_cast<double>(c));
        for (double& v : m.params_.view("head.normality.w1")) v = uniform_real(init, -b1, b1);
        for (double& v : m.params_.view("head.normality.b1")) v = uniform_real(init, -b1, b1);
        double b2 = 1.0 / std::sqrt(static_cast<double>(mid));
        for (double& v : m.params_.view("head.normality.w2")) v = uniform_real(init, -b2, b2);
        m.params_.view("head.normality.b2")[0] = uniform_real(init, -b2, b2);
    }

    if (load_pretrained && !cfg.model.weights.empty()) {
        io::Container c_in = io::read_container(cfg.model.weights);
        std::size_t applied = 0;
        for (const io::NamedArray& a : c_in.arrays) {
            if (a.name.rfind("backbone.", 0) != 0) continue;
            if (!m.params_.has(a.name))
                throw std::runtime_error("pretrained container has unknown array '" + a.name +
                                         "' for backbone " + cfg.model.backbone);
            auto dst = m.params_.view(a.name);
            if (dst.size() != a.values.size())
                throw std::runtime_error("pretrained array '" + a.name + "' has wrong size");
            std::copy(a.values.data(), a.values.data() + a.values.size(), dst.begin());
            ++applied;
        }
        if (applied == 0)
            throw std::runtime_error("pretrained container " + cfg.model.weights +
                                     " holds no backbone arrays");
    }
    return m;
}

std::vector<std::size_t> Model::pyramid_sides() const {
    std::vector<std::size_t> sides;
    for (double s : cfg_.model.pyramid_scales)
        sides.push_back(static_cast<std::size_t>(
            std::lround(static_cast<double>(cfg_.data.input_size) * s)));
    return sides;
}

HeadScores Model::head_scores(const FeatureMap& m, std::size_t input_side) const {
    HeadScores hs;
    double k = k_fraction();
    if (mask_.seen)
        hs.seen = mil_head_score(m, params_.view("head.seen.w"), params_.view("head.seen.b")[0], k);
    if (mask_.pseudo)
        hs.pseudo =
            mil_head_score(m, params_.view("head.pseudo.w"), params_.view("head.pseudo.b")[0], k);
    if (mask_.residual)
        hs.residual = residual_score(m, refset_, input_side, params_.view("head.residual.w"),
                                     params_.view("head.residual.b")[0], k);
    if (mask_.normality)
        hs.normality = normality_score(m, params_.view("head.normality.w1"),
                                       params_.view("head.normality.b1"),
                                       params_.view("head.normality.w2"),
                                       params_.view("head.normality.b2")[0]);
    return hs;
}

std::vector<HeadScores> Model::score_image(const ImageTensor& img) const {
    std::vector<ImageTensor> views =
        pyramid_views(img, cfg_.model.pyramid_scales, backbone_->config().min_input());
    std::vector<HeadScores> out;
    out.reserve(views.size());
    for (const ImageTensor& v : views) {
        FeatureMap m = backbone_->features(v, params_);
        out.push_back(head_scores(m, v.dim(1)));
    }
    return out;
}

double Model::composite(const ImageTensor& img) const {
    return composite_score(score_image(img), mask_);
}

} // namespace dra
