#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dra/losses.hpp"
#include "dra/model.hpp"
#include "dra/pseudogen.hpp"
#include "dra/protocols.hpp"

namespace dra {

struct BatchItem {
    std::string id;
    ImageTensor image;
    RoutingLabel label;
};

// Draws without replacement until the pool is exhausted, then reshuffles.
class EpochSampler {
public:
    explicit EpochSampler(std::vector<SampleRef> pool);
    const SampleRef& next(Rng& rng);
    std::size_t pool_size() const { return pool_.size(); }

private:
    std::vector<SampleRef> pool_;
    std::vector<std::size_t> queue_;
};

PseudoSource pseudo_source_from_config(const ExperimentConfig& cfg);

// Batch composition: one half normals, one quarter seen anomalies (sampled
// with replacement from the M examples), one quarter freshly generated pseudo
// anomalies. Quotas of disabled heads are reassigned to normals.
std::vector<BatchItem> make_batch(const SplitResult& split, const ImageStore& store,
                                  const PseudoSource& source, const AblationMask& mask,
                                  std::size_t batch_size, EpochSampler& normals, Rng& rng);

struct StepStats {
    double total_loss = 0.0;
    std::vector<std::pair<HeadId, double>> head_means;
    std::vector<std::pair<HeadId, std::size_t>> head_counts;
};

// Owns the optimizer state, prior stream and reference-set initialization for
// one model. Single writer: train_step requires exclusive access to the model.
class Trainer {
public:
    Trainer(Model& model, const ExperimentConfig& cfg);

    // Samples the reference images (optionally mixed with pseudo anomalies),
    // computes the per-scale mean feature maps once, and freezes them.
    void init_reference_set(const SplitResult& split, const ImageStore& store);

    StepStats train_step(const std::vector<BatchItem>& batch);

    // Low-level optimizer entry: applies one masked adaptive-moment step for
    // the given gradient, updating only the listed heads (and the backbone
    // unless frozen). Exposed for parameter-disjointness tests.
    void apply_gradients(const std::vector<double>& grads,
                         const std::vector<std::pair<HeadId, std::size_t>>& head_counts);

    Rng& batch_rng() { return batch_rng_; }

private:
    PriorScoreSet next_prior();
    std::vector<bool> active_blocks(const std::vector<std::pair<HeadId, std::size_t>>& counts) const;

    Model& model_;
    ExperimentConfig cfg_;
    LossParams loss_params_;
    std::size_t threads_;
    std::vector<double> adam_m_, adam_v_;
    std::vector<std::size_t> block_step_;
    Rng prior_rng_;
    Rng batch_rng_;
    std::optional<PriorScoreSet> frozen_prior_;
};

struct TrainLogEntry {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::vector<std::pair<HeadId, double>> head_means;
};

struct FitResult {
    Model model;
    std::vector<TrainLogEntry> log;
};

// The split is a pure function of (catalog, protocol parameters, seed).
// One-shot splits nest inside the corresponding ten-shot split, evaluated on
// exactly the same test data.
SplitResult build_split(const DatasetCatalog& catalog, const ExperimentConfig& cfg);

// Joint training: epochs x iterations_per_epoch steps over batches composed
// by make_batch, reference set initialized once up front.
FitResult fit(const SplitResult& split, ImageStore& store, const ExperimentConfig& cfg);

std::string format_training_log(const std::vector<TrainLogEntry>& log);

void checkpoint_save(const Model& model, const std::string& path);
Model checkpoint_load(const std::string& path, const std::string& preset_override = "");

} // namespace dra
