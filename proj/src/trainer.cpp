#include "dra/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dra/io.hpp"

namespace dra {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Ordered parallel map: fn(i) for i in [0,n), work split across threads.
// Each index writes only its own slots, so results are identical for any
// thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&]() {
        try {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!err) err = std::current_exception();
        }
    };
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace

EpochSampler::EpochSampler(std::vector<SampleRef> pool) : pool_(std::move(pool)) {
    if (pool_.empty()) throw std::invalid_argument("EpochSampler: empty pool");
    std::sort(pool_.begin(), pool_.end(),
              [](const SampleRef& a, const SampleRef& b) { return a.id < b.id; });
}

const SampleRef& EpochSampler::next(Rng& rng) {
    if (queue_.empty()) {
        queue_.resize(pool_.size());
        for (std::size_t i = 0; i < pool_.size(); ++i) queue_[i] = i;
        shuffle(queue_, rng);
    }
    std::size_t idx = queue_.back();
    queue_.pop_back();
    return pool_[idx];
}

PseudoSource pseudo_source_from_config(const ExperimentConfig& cfg) {
    PseudoSource src;
    src.kind = parse_pseudo_kind(cfg.train.pseudo_source);
    src.pool_path = cfg.train.pool_path;
    src.exclusion_path = cfg.train.exclusion_path;
    // Patches below a couple of feature cells carry no learnable signal.
    src.cutmix.min_area_frac = 0.04;
    return src;
}

namespace {

ImageTensor generate_pseudo(const SplitResult& split, const ImageStore& store,
                            const PseudoSource& source, Rng& rng) {
    PseudoKind kind = source.kind;
    if (kind == PseudoKind::CutpasteMix)
        kind = uniform_int(rng, 0, 1) == 0 ? PseudoKind::Cutmix : PseudoKind::CutpasteScar;

    if (kind == PseudoKind::OutlierPool) {
        OutlierPool p = OutlierPool::open(source, {});
        const std::string& id = p.draw_id(rng);
        ImageTensor img =
            io::load_image((std::filesystem::path(source.pool_path) / id).string());
        return bilinear_resize(img, store.input_size(), store.input_size());
    }

    const SampleRef& base = split.train_normals[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(split.train_normals.size()) - 1))];
    ImageTensor x = store.get(base);
    for (int attempt = 0; attempt < 8; ++attempt) {
        PseudoResult r = kind == PseudoKind::Cutmix ? cutmix(x, rng, source.cutmix)
                                                    : cutpaste_scar(x, rng, source.scar);
        if (r.pasted_area >= 1) return std::move(r.image);
    }
    throw std::runtime_error("pseudo-anomaly generation produced an empty paste region");
}

} // namespace

std::vector<BatchItem> make_batch(const SplitResult& split, const ImageStore& store,
                                  const PseudoSource& source, const AblationMask& mask,
                                  std::size_t batch_size, EpochSampler& normals, Rng& rng) {
    if (batch_size == 0 || batch_size % 4 != 0)
        throw std::invalid_argument("batch_size must be a positive multiple of 4");
    if (split.train_normals.empty()) throw std::invalid_argument("split has no training normals");
    if (mask.seen && split.train_anomalies.empty())
        throw std::invalid_argument(
            "seen head enabled but the split provides no anomaly examples; disable the seen head");

    std::size_t n_seen = mask.seen ? batch_size / 4 : 0;
    std::size_t n_pseudo = mask.pseudo ? batch_size / 4 : 0;
    std::size_t n_normal = batch_size - n_seen - n_pseudo;

    std::vector<BatchItem> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < n_normal; ++i) {
        const SampleRef& ref = normals.next(rng);
        batch.push_back({ref.id, store.get(ref), {Role::Normal}});
    }
    for (std::size_t i = 0; i < n_seen; ++i) {
        const SampleRef& ref = split.train_anomalies[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(split.train_anomalies.size()) - 1))];
        batch.push_back({ref.id, store.get(ref), {Role::SeenAnomaly}});
    }
    for (std::size_t i = 0; i < n_pseudo; ++i) {
        batch.push_back({"pseudo/" + std::to_string(i), generate_pseudo(split, store, source, rng),
                         {Role::PseudoAnomaly}});
    }
    return batch;
}

Trainer::Trainer(Model& model, const ExperimentConfig& cfg)
    : model_(model),
      cfg_(cfg),
      prior_rng_(make_stream(cfg.train.seed, "prior")),
      batch_rng_(make_stream(cfg.train.seed, "batch")) {
    loss_params_.kind = parse_loss_kind(cfg.train.loss);
    loss_params_.margin_a = cfg.train.margin_a;
    loss_params_.focal_gamma = cfg.train.focal_gamma;
    loss_params_.focal_alpha = cfg.train.focal_alpha;
    threads_ = cfg.train.threads
                   ? cfg.train.threads
                   : std::min<std::size_t>(4, std::max(1u, std::thread::hardware_concurrency()));
    adam_m_.assign(model_.params().total(), 0.0);
    adam_v_.assign(model_.params().total(), 0.0);
    block_step_.assign(model_.params().blocks().size(), 0);
}

PriorScoreSet Trainer::next_prior() {
    if (cfg_.train.freeze_prior) {
        if (!frozen_prior_)
            frozen_prior_ = PriorScoreSet::draw(cfg_.train.prior_samples, prior_rng_);
        return *frozen_prior_;
    }
    return PriorScoreSet::draw(cfg_.train.prior_samples, prior_rng_);
}

void Trainer::init_reference_set(const SplitResult& split, const ImageStore& store) {
    if (!model_.mask().residual) return;
    if (split.train_normals.empty())
        throw std::invalid_argument("cannot build a reference set without training normals");

    Rng rng = make_stream(cfg_.train.seed, "refset");
    std::size_t n_ref = cfg_.model.n_reference;
    std::size_t n_pseudo = cfg_.model.mix_reference ? n_ref / 2 : 0;
    std::size_t n_normal = n_ref - n_pseudo;

    // Draw distinct normals where possible.
    std::vector<SampleRef> pool = split.train_normals;
    std::sort(pool.begin(), pool.end(),
              [](const SampleRef& a, const SampleRef& b) { return a.id < b.id; });
    shuffle(pool, rng);
    std::vector<ImageTensor> images;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n_normal; ++i) {
        const SampleRef& ref = pool[i % pool.size()];
        images.push_back(store.get(ref));
        ids.push_back(ref.id);
    }
    PseudoSource source = pseudo_source_from_config(cfg_);
    for (std::size_t i = 0; i < n_pseudo; ++i) {
        images.push_back(generate_pseudo(split, store, source, rng));
        ids.push_back("pseudo_ref/" + std::to_string(i));
    }

    ReferenceSet& rs = model_.refset();
    rs.n_reference = n_ref;
    rs.image_ids = std::move(ids);
    rs.mean_maps.clear();
    for (std::size_t side : model_.pyramid_sides()) {
        std::vector<FeatureMap> maps;
        maps.reserve(images.size());
        for (const ImageTensor& img : images) {
            ImageTensor v = img.dim(1) == side && img.dim(2) == side
                                ? img
                                : bilinear_resize(img, side, side);
            maps.push_back(model_.backbone().features(v, model_.params()));
        }
        rs.mean_maps.emplace(side, compute_reference_map(maps));
    }
}

std::vector<bool> Trainer::active_blocks(
    const std::vector<std::pair<HeadId, std::size_t>>& counts) const {
    auto routed = [&](HeadId id) {
        for (const auto& [h, c] : counts)
            if (h == id) return c > 0;
        return false;
    };
    const auto& blocks = model_.params().blocks();
    std::vector<bool> active(blocks.size(), false);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string& n = blocks[i].name;
        if (n.rfind("backbone.", 0) == 0)
            active[i] = !cfg_.model.freeze_backbone;
        else if (n.rfind("head.seen.", 0) == 0)
            active[i] = routed(HeadId::Seen);
        else if (n.rfind("head.pseudo.", 0) == 0)
            active[i] = routed(HeadId::Pseudo);
        else if (n.rfind("head.residual.", 0) == 0)
            active[i] = routed(HeadId::Residual);
        else if (n.rfind("head.normality.", 0) == 0)
            active[i] = routed(HeadId::Normality);
    }
    return active;
}

void Trainer::apply_gradients(const std::vector<double>& grads,
                              const std::vector<std::pair<HeadId, std::size_t>>& head_counts) {
    ParamStore& ps = model_.params();
    if (grads.size() != ps.total()) throw std::invalid_argument("gradient buffer size mismatch");
    std::vector<bool> active = active_blocks(head_counts);

    double clip_scale = 1.0;
    if (cfg_.train.grad_clip > 0.0) {
        double sq = 0.0;
        const auto& blocks = ps.blocks();
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (!active[i]) continue;
            for (std::size_t j = blocks[i].offset; j < blocks[i].offset + blocks[i].len; ++j)
                sq += grads[j] * grads[j];
        }
        double norm = std::sqrt(sq);
        if (norm > cfg_.train.grad_clip) clip_scale = cfg_.train.grad_clip / norm;
    }

    double lr = cfg_.train.learning_rate;
    double wd = cfg_.train.weight_decay;
    const auto& blocks = ps.blocks();
    std::vector<double>& values = ps.raw();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (!active[i]) continue;
        std::size_t t = ++block_step_[i];
        double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (std::size_t j = blocks[i].offset; j < blocks[i].offset + blocks[i].len; ++j) {
            double g = grads[j] * clip_scale + wd * values[j];
            adam_m_[j] = kBeta1 * adam_m_[j] + (1.0 - kBeta1) * g;
            adam_v_[j] = kBeta2 * adam_v_[j] + (1.0 - kBeta2) * g * g;
            values[j] -= lr * (adam_m_[j] / c1) / (std::sqrt(adam_v_[j] / c2) + kAdamEps);
        }
    }
}

StepStats Trainer::train_step(const std::vector<BatchItem>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const AblationMask& mask = model_.mask();
    if (mask.residual && !model_.refset().initialized())
        throw std::logic_error("residual head enabled but reference set not initialized");

    const ParamStore& ps = model_.params();
    std::size_t input_side = batch.front().image.dim(1);
    double k = model_.k_fraction();

    struct SampleWork {
        Backbone::Trace trace;
        FeatureMap fmap;
        FeatureMap rmap; // residual map, when that head sees the sample
        HeadScores scores;
    };
    std::vector<SampleWork> work(batch.size());

    // Phase 1: forward, in parallel over samples.
    parallel_for(batch.size(), threads_, [&](std::size_t i) {
        SampleWork& w = work[i];
        w.fmap = model_.backbone().features(batch[i].image, ps, &w.trace);
        Role role = batch[i].label.role;
        if (mask.seen && head_target(role, HeadId::Seen))
            w.scores.seen = mil_head_score(w.fmap, ps.view("head.seen.w"),
                                           ps.view("head.seen.b")[0], k);
        if (mask.pseudo && head_target(role, HeadId::Pseudo))
            w.scores.pseudo = mil_head_score(w.fmap, ps.view("head.pseudo.w"),
                                             ps.view("head.pseudo.b")[0], k);
        if (mask.residual && head_target(role, HeadId::Residual)) {
            w.rmap = residual_map(model_.refset().map_for(input_side), w.fmap);
            w.scores.residual = mil_head_score(w.rmap, ps.view("head.residual.w"),
                                               ps.view("head.residual.b")[0], k);
        }
        if (mask.normality && head_target(role, HeadId::Normality))
            w.scores.normality = normality_score(w.fmap, ps.view("head.normality.w1"),
                                                 ps.view("head.normality.b1"),
                                                 ps.view("head.normality.w2"),
                                                 ps.view("head.normality.b2")[0]);
    });

    // Phase 2: routing and loss (serial).
    std::vector<RoutedSample> routed(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        routed[i] = {batch[i].label, work[i].scores};
    PriorScoreSet prior = next_prior();
    RoutedTotal rt = route_and_total(routed, mask, loss_params_, prior);
    if (!std::isfinite(rt.total)) {
        std::ostringstream os;
        os << "non-finite training loss; per-head means:";
        for (auto [h, m] : rt.head_means) os << " " << head_name(h) << "=" << m;
        throw std::runtime_error(os.str());
    }

    // Phase 3: backward, in parallel, one gradient buffer per sample.
    std::vector<std::vector<double>> sample_grads(batch.size());
    parallel_for(batch.size(), threads_, [&](std::size_t i) {
        SampleWork& w = work[i];
        const HeadScores& g = rt.score_grads[i];
        std::vector<double>& grads = sample_grads[i];
        grads.assign(ps.total(), 0.0);
        auto gview = [&](const std::string& name) {
            const auto& b = ps.block(name);
            return std::span<double>(grads.data() + b.offset, b.len);
        };
        FeatureMap dmap({w.fmap.dim(0), w.fmap.dim(1), w.fmap.dim(2)});
        bool any = false;
        if (g.seen) {
            mil_head_backward(w.fmap, ps.view("head.seen.w"), ps.view("head.seen.b")[0], k,
                              *g.seen, gview("head.seen.w"), gview("head.seen.b")[0], &dmap);
            any = true;
        }
        if (g.pseudo) {
            mil_head_backward(w.fmap, ps.view("head.pseudo.w"), ps.view("head.pseudo.b")[0], k,
                              *g.pseudo, gview("head.pseudo.w"), gview("head.pseudo.b")[0], &dmap);
            any = true;
        }
        if (g.residual) {
            FeatureMap drmap({w.rmap.dim(0), w.rmap.dim(1), w.rmap.dim(2)});
            mil_head_backward(w.rmap, ps.view("head.residual.w"), ps.view("head.residual.b")[0],
                              k, *g.residual, gview("head.residual.w"),
                              gview("head.residual.b")[0], &drmap);
            // m_r is constant: d(residual)/d(fmap) = -1.
            for (std::size_t j = 0; j < dmap.size(); ++j) dmap[j] -= drmap[j];
            any = true;
        }
        if (g.normality) {
            double& db2 = gview("head.normality.b2")[0];
            normality_backward(w.fmap, ps.view("head.normality.w1"), ps.view("head.normality.b1"),
                               ps.view("head.normality.w2"), *g.normality,
                               gview("head.normality.w1"), gview("head.normality.b1"),
                               gview("head.normality.w2"), db2, &dmap);
            any = true;
        }
        if (any && !cfg_.model.freeze_backbone)
            model_.backbone().backward(w.trace, dmap, ps, grads);
    });

    // Phase 4: ordered reduction, then the masked optimizer step.
    std::vector<double> grads(ps.total(), 0.0);
    for (const std::vector<double>& sg : sample_grads)
        for (std::size_t j = 0; j < grads.size(); ++j) grads[j] += sg[j];
    apply_gradients(grads, rt.head_counts);

    StepStats stats;
    stats.total_loss = rt.total;
    stats.head_means = rt.head_means;
    stats.head_counts = rt.head_counts;
    return stats;
}

SplitResult build_split(const DatasetCatalog& catalog, const ExperimentConfig& cfg) {
    Rng rng = make_stream(cfg.train.seed, "split");
    std::size_t shots = cfg.protocol.shots;
    bool nested = shots == 1;
    std::size_t base_shots = nested ? 10 : shots;
    SplitResult split =
        cfg.protocol.protocol == "hard"
            ? sample_hard(catalog, base_shots, cfg.protocol.seen_class, rng,
                          cfg.protocol.normal_split_ratio)
            : sample_general(catalog, base_shots, rng, cfg.protocol.normal_split_ratio);
    if (nested) {
        Rng nest_rng = make_stream(cfg.train.seed, "nest");
        split = nest_one_from_ten(split, nest_rng);
    }
    return split;
}

FitResult fit(const SplitResult& split, ImageStore& store, const ExperimentConfig& cfg) {
    Model model = Model::create(cfg);
    Trainer trainer(model, cfg);
    trainer.init_reference_set(split, store);

    PseudoSource source = pseudo_source_from_config(cfg);
    EpochSampler normals(split.train_normals);

    std::vector<TrainLogEntry> log;
    for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::map<HeadId, double> head_sums;
        for (std::size_t it = 0; it < cfg.train.iterations_per_epoch; ++it) {
            std::vector<BatchItem> batch =
                make_batch(split, store, source, model.mask(), cfg.train.batch_size, normals,
                           trainer.batch_rng());
            StepStats stats = trainer.train_step(batch);
            loss_sum += stats.total_loss;
            for (auto [h, m] : stats.head_means) head_sums[h] += m;
        }
        TrainLogEntry e;
        e.epoch = epoch;
        double denom = static_cast<double>(std::max<std::size_t>(1, cfg.train.iterations_per_epoch));
        e.mean_loss = loss_sum / denom;
        for (auto& [h, s] : head_sums) e.head_means.emplace_back(h, s / denom);
        log.push_back(std::move(e));
    }
    return {std::move(model), std::move(log)};
}

std::string format_training_log(const std::vector<TrainLogEntry>& log) {
    std::ostringstream os;
    os << "epoch\tmean_loss\tper_head\n";
    for (const TrainLogEntry& e : log) {
        os << e.epoch << "\t" << e.mean_loss << "\t";
        for (std::size_t i = 0; i < e.head_means.size(); ++i)
            os << (i ? "," : "") << head_name(e.head_means[i].first) << "="
               << e.head_means[i].second;
        os << "\n";
    }
    return os.str();
}

void checkpoint_save(const Model& model, const std::string& path) {
    io::Container c;
    c.config_echo = model.config().canonical();
    for (const auto& b : model.params().blocks()) {
        io::NamedArray a;
        a.name = b.name;
        a.values = Tensor(b.dims);
        auto src = model.params().view(b);
        std::copy(src.begin(), src.end(), a.values.data());
        c.arrays.push_back(std::move(a));
    }
    for (const auto& [side, map] : model.refset().mean_maps) {
        io::NamedArray a;
        a.name = "refset.mr." + std::to_string(side);
        a.values = map;
        c.arrays.push_back(std::move(a));
    }
    io::write_container(path, c);
}

Model checkpoint_load(const std::string& path, const std::string& preset_override) {
    io::Container c = io::read_container(path);
    ExperimentConfig cfg = ExperimentConfig::from_ini_text(c.config_echo, path + "#config");
    if (!preset_override.empty()) cfg.model.preset = preset_override;
    // Parameters come from the checkpoint itself, not the pretrained path.
    Model model = Model::create(cfg, /*load_pretrained=*/false);

    for (const auto& b : model.params().blocks()) {
        const Tensor* src = c.find(b.name);
        if (!src)
            throw std::runtime_error(path + ": incompatible checkpoint, missing array '" + b.name +
                                     "' (was it trained with a different ablation preset?)");
        if (src->size() != b.len)
            throw std::runtime_error(path + ": incompatible checkpoint, array '" + b.name +
                                     "' has wrong size");
        auto dst = model.params().view(b);
        std::copy(src->data(), src->data() + src->size(), dst.begin());
    }
    if (model.mask().residual) {
        ReferenceSet& rs = model.refset();
        rs.mean_maps.clear();
        for (const io::NamedArray& a : c.arrays) {
            if (a.name.rfind("refset.mr.", 0) != 0) continue;
            std::size_t side = static_cast<std::size_t>(std::stoull(a.name.substr(10)));
            rs.mean_maps.emplace(side, a.values);
        }
        rs.n_reference = cfg.model.n_reference;
        if (!rs.initialized())
            throw std::runtime_error(path +
                                     ": incompatible checkpoint, residual head enabled but no "
                                     "reference maps stored");
    }
    return model;
}

} // namespace dra
