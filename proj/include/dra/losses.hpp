#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dra/heads.hpp"
#include "dra/rng.hpp"

namespace dra {

enum class LossKind { Deviation, Bce, Focal };
LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind k);

enum class Role { Normal, SeenAnomaly, PseudoAnomaly };

// Labels route each sample to heads: the seen head trains on
// {normal:0, seen:1}, the pseudo head on {normal:0, pseudo:1}, and the
// residual and normality heads on everything with anomalies as 1.
struct RoutingLabel {
    Role role = Role::Normal;
};

enum class HeadId { Seen, Pseudo, Residual, Normality };
std::string head_name(HeadId h);

// Binary target for `role` at `head`, or nullopt when the role does not feed
// that head.
std::optional<int> head_target(Role role, HeadId head);

// Reference score sample drawn from a Gaussian prior; deviations are
// Z-scores against its statistics.
struct PriorScoreSet {
    std::vector<double> samples;
    double mu = 0.0;
    double sigma = 0.0; // population standard deviation

    static PriorScoreSet draw(std::size_t n, Rng& rng, double mean = 0.0, double stddev = 1.0);
    static PriorScoreSet from_samples(std::vector<double> samples);
};

// (score - mu) / sigma. Throws on a degenerate prior (sigma == 0).
double deviation(double score, const PriorScoreSet& prior);

// (1-y)*|dev| + y*max(0, a - dev)
double deviation_loss(double score, int y, const PriorScoreSet& prior, double a);
// Returns {loss, dloss/dscore}.
std::pair<double, double> deviation_loss_grad(double score, int y, const PriorScoreSet& prior,
                                              double a);

double bce_loss(double score, int y);
std::pair<double, double> bce_loss_grad(double score, int y);

double focal_loss(double score, int y, double gamma, double alpha);
std::pair<double, double> focal_loss_grad(double score, int y, double gamma, double alpha);

struct LossParams {
    LossKind kind = LossKind::Deviation;
    double margin_a = 5.0;     // deviation-loss confidence interval
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
};

std::pair<double, double> loss_and_grad(double score, int y, const LossParams& lp,
                                        const PriorScoreSet& prior);

// One sample's enabled-head scores plus its routing label.
struct RoutedSample {
    RoutingLabel label;
    HeadScores scores;
};

struct RoutedTotal {
    double total = 0.0;
    // Per-head mean loss and routed-sample count (enabled heads only).
    std::vector<std::pair<HeadId, double>> head_means;
    std::vector<std::pair<HeadId, std::size_t>> head_counts;
    // d(total)/d(score) per sample and head, aligned with the input batch.
    std::vector<HeadScores> score_grads;
};

// Joint objective: sum over heads of the mean per-head loss across the
// samples routed to that head. Heads with no routed samples contribute zero.
RoutedTotal route_and_total(const std::vector<RoutedSample>& batch, const AblationMask& mask,
                            const LossParams& lp, const PriorScoreSet& prior);

// Aggregation helper behind route_and_total: total = sum of per-head means.
double total_from_head_losses(const std::vector<std::vector<double>>& per_head_losses);

} // namespace dra
