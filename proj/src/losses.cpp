#include "dra/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dra {

namespace {
constexpr double kProbEps = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_prob(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }
} // namespace

LossKind parse_loss_kind(const std::string& name) {
    if (name == "deviation") return LossKind::Deviation;
    if (name == "bce") return LossKind::Bce;
    if (name == "focal") return LossKind::Focal;
    throw std::invalid_argument("unknown loss '" + name + "' (expected deviation, bce or focal)");
}

std::string loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::Deviation: return "deviation";
        case LossKind::Bce: return "bce";
        case LossKind::Focal: return "focal";
    }
    return "?";
}

std::string head_name(HeadId h) {
    switch (h) {
        case HeadId::Seen: return "seen";
        case HeadId::Pseudo: return "pseudo";
        case HeadId::Residual: return "residual";
        case HeadId::Normality: return "normality";
    }
    return "?";
}

std::optional<int> head_target(Role role, HeadId head) {
    switch (head) {
        case HeadId::Seen:
            if (role == Role::Normal) return 0;
            if (role == Role::SeenAnomaly) return 1;
            return std::nullopt;
        case HeadId::Pseudo:
            if (role == Role::Normal) return 0;
            if (role == Role::PseudoAnomaly) return 1;
            return std::nullopt;
        case HeadId::Residual:
        case HeadId::Normality:
            return role == Role::Normal ? 0 : 1;
    }
    return std::nullopt;
}

PriorScoreSet PriorScoreSet::draw(std::size_t n, Rng& rng, double mean, double stddev) {
    std::vector<double> s(n);
    for (double& v : s) v = normal(rng, mean, stddev);
    return from_samples(std::move(s));
}

PriorScoreSet PriorScoreSet::from_samples(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("prior score set must be nonempty");
    PriorScoreSet p;
    p.samples = std::move(samples);
    double sum = 0.0;
    for (double v : p.samples) sum += v;
    p.mu = sum / static_cast<double>(p.samples.size());
    double sq = 0.0;
    for (double v : p.samples) sq += (v - p.mu) * (v - p.mu);
    p.sigma = std::sqrt(sq / static_cast<double>(p.samples.size()));
    return p;
}

double deviation(double score, const PriorScoreSet& prior) {
    if (prior.samples.empty()) throw std::logic_error("deviation: prior not initialized");
    if (prior.sigma == 0.0) throw std::domain_error("deviation: degenerate prior (sigma = 0)");
    return (score - prior.mu) / prior.sigma;
}

double deviation_loss(double score, int y, const PriorScoreSet& prior, double a) {
    return deviation_loss_grad(score, y, prior, a).first;
}

std::pair<double, double> deviation_loss_grad(double score, int y, const PriorScoreSet& prior,
                                              double a) {
    if (!(a > 0.0)) throw std::invalid_argument("deviation loss margin must be positive");
    if (!std::isfinite(score)) throw std::domain_error("deviation loss: non-finite score");
    double dev = deviation(score, prior);
    if (y == 0) {
        double sign = dev >= 0.0 ? 1.0 : -1.0;
        return {std::abs(dev), sign / prior.sigma};
    }
    double slack = a - dev;
    if (slack > 0.0) return {slack, -1.0 / prior.sigma};
    return {0.0, 0.0};
}

double bce_loss(double score, int y) { return bce_loss_grad(score, y).first; }

std::pair<double, double> bce_loss_grad(double score, int y) {
    double p = clamp_prob(sigmoid(score));
    double loss = y ? -std::log(p) : -std::log(1.0 - p);
    // d/ds through the clamp: zero once the probability saturates.
    double raw = sigmoid(score);
    double grad = 0.0;
    if (raw > kProbEps && raw < 1.0 - kProbEps) grad = raw - static_cast<double>(y);
    return {loss, grad};
}

double focal_loss(double score, int y, double gamma, double alpha) {
    return focal_loss_grad(score, y, gamma, alpha).first;
}

std::pair<double, double> focal_loss_grad(double score, int y, double gamma, double alpha) {
    if (gamma < 0.0) throw std::invalid_argument("focal gamma must be >= 0");
    double raw = sigmoid(score);
    double p = clamp_prob(raw);
    bool saturated = raw <= kProbEps || raw >= 1.0 - kProbEps;
    double dp = p * (1.0 - p); // ds -> dp
    if (y) {
        double mod = std::pow(1.0 - p, gamma);
        double loss = -alpha * mod * std::log(p);
        if (saturated) return {loss, 0.0};
        double dmod = gamma > 0.0 ? -gamma * std::pow(1.0 - p, gamma - 1.0) : 0.0;
        double dloss_dp = -alpha * (dmod * std::log(p) + mod / p);
        return {loss, dloss_dp * dp};
    }
    double mod = std::pow(p, gamma);
    double loss = -(1.0 - alpha) * mod * std::log(1.0 - p);
    if (saturated) return {loss, 0.0};
    double dmod = gamma > 0.0 ? gamma * std::pow(p, gamma - 1.0) : 0.0;
    double dloss_dp = -(1.0 - alpha) * (dmod * std::log(1.0 - p) - mod / (1.0 - p));
    return {loss, dloss_dp * dp};
}

std::pair<double, double> loss_and_grad(double score, int y, const LossParams& lp,
                                        const PriorScoreSet& prior) {
    switch (lp.kind) {
        case LossKind::Deviation: return deviation_loss_grad(score, y, prior, lp.margin_a);
        case LossKind::Bce: return bce_loss_grad(score, y);
        case LossKind::Focal: return focal_loss_grad(score, y, lp.focal_gamma, lp.focal_alpha);
    }
    throw std::logic_error("unreachable loss kind");
}

double total_from_head_losses(const std::vector<std::vector<double>>& per_head_losses) {
    double total = 0.0;
    for (const auto& losses : per_head_losses) {
        if (losses.empty()) continue;
        double s = 0.0;
        for (double v : losses) s += v;
        total += s / static_cast<double>(losses.size());
    }
    return total;
}

RoutedTotal route_and_total(const std::vector<RoutedSample>& batch, const AblationMask& mask,
                            const LossParams& lp, const PriorScoreSet& prior) {
    mask.validate();
    struct HeadAcc {
        HeadId id;
        bool enabled;
        double loss_sum = 0.0;
        std::size_t count = 0;
        std::vector<std::pair<std::size_t, double>> grads; // (sample index, dloss/dscore)
    };
    HeadAcc accs[4] = {{HeadId::Seen, mask.seen, 0.0, 0, {}},
                       {HeadId::Pseudo, mask.pseudo, 0.0, 0, {}},
                       {HeadId::Residual, mask.residual, 0.0, 0, {}},
                       {HeadId::Normality, mask.normality, 0.0, 0, {}}};

    auto score_of = [](const HeadScores& hs, HeadId id) -> const std::optional<double>& {
        switch (id) {
            case HeadId::Seen: return hs.seen;
            case HeadId::Pseudo: return hs.pseudo;
            case HeadId::Residual: return hs.residual;
            case HeadId::Normality: return hs.normality;
        }
        throw std::logic_error("unreachable head id");
    };

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const RoutedSample& s = batch[i];
        for (HeadAcc& acc : accs) {
            std::optional<int> y = head_target(s.label.role, acc.id);
            const std::optional<double>& sc = score_of(s.scores, acc.id);
            if (!acc.enabled) {
                if (sc.has_value())
                    throw std::invalid_argument("sample routed to disabled head '" +
                                                head_name(acc.id) + "'");
                continue;
            }
            if (!y.has_value()) {
                if (sc.has_value())
                    throw std::invalid_argument("sample of role not fed to head '" +
                                                head_name(acc.id) + "' carries a score");
                continue;
            }
            if (!sc.has_value())
                throw std::invalid_argument("sample missing score for enabled head '" +
                                            head_name(acc.id) + "'");
            auto [loss, grad] = loss_and_grad(*sc, *y, lp, prior);
            acc.loss_sum += loss;
            acc.count += 1;
            acc.grads.emplace_back(i, grad);
        }
    }

    RoutedTotal out;
    out.score_grads.resize(batch.size());
    for (HeadAcc& acc : accs) {
        if (!acc.enabled) continue;
        double mean = acc.count ? acc.loss_sum / static_cast<double>(acc.count) : 0.0;
        out.total += mean;
        out.head_means.emplace_back(acc.id, mean);
        out.head_counts.emplace_back(acc.id, acc.count);
        if (acc.count == 0) continue;
        double inv = 1.0 / static_cast<double>(acc.count);
        for (auto [idx, g] : acc.grads) {
            HeadScores& hs = out.score_grads[idx];
            double val = g * inv;
            switch (acc.id) {
                case HeadId::Seen: hs.seen = val; break;
                case HeadId::Pseudo: hs.pseudo = val; break;
                case HeadId::Residual: hs.residual = val; break;
                case HeadId::Normality: hs.normality = val; break;
            }
        }
    }
    return out;
}

} // namespace dra
