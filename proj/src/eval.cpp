#include "dra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dra {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace

std::vector<ScoredExample> score_dataset(const Model& model, const SplitResult& split,
                                         const ImageStore& store) {
    std::vector<ScoredExample> out;
    out.reserve(split.test_normals.size() + split.test_anomalies.size());
    const std::vector<double>& scales = model.config().model.pyramid_scales;

    auto score_one = [&](const SampleRef& ref, int label) {
        ScoredExample ex;
        ex.id = ref.id;
        ex.label = label;
        ex.anomaly_class = ref.anomaly_class;
        std::vector<HeadScores> per_scale;
        try {
            per_scale = model.score_image(store.get(ref));
        } catch (const std::exception& e) {
            throw std::runtime_error("scoring failed for sample '" + ref.id + "': " + e.what());
        }
        for (std::size_t i = 0; i < per_scale.size(); ++i)
            ex.per_scale.emplace_back(scales[i], per_scale[i]);
        ex.composite = composite_score(per_scale, model.mask());
        out.push_back(std::move(ex));
    };

    for (const SampleRef& r : split.test_normals) score_one(r, 0);
    for (const SampleRef& r : split.test_anomalies) score_one(r, 1);
    return out;
}

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw std::invalid_argument("auc: size mismatch");
    std::size_t n = labels.size();
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(l);
    }
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc undefined: need at least one positive and one negative");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("auc: non-finite score");

    // Average ranks with ties sharing the mean rank of their block.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k]) rank_sum += rank[k];
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc(const std::vector<ScoredExample>& scored) {
    std::vector<int> labels;
    std::vector<double> scores;
    labels.reserve(scored.size());
    scores.reserve(scored.size());
    for (const ScoredExample& e : scored) {
        labels.push_back(e.label);
        scores.push_back(e.composite);
    }
    return auc(labels, scores);
}

std::vector<GroupSummary> aggregate_runs(const std::vector<RunReport>& reports) {
    std::map<std::tuple<std::string, std::string, std::string, std::size_t, std::string>,
             std::vector<double>>
        groups;
    for (const RunReport& r : reports)
        groups[{r.dataset, r.subset, r.protocol, r.shots, r.preset}].push_back(r.auc);

    std::vector<GroupSummary> out;
    for (const auto& [key, aucs] : groups) {
        GroupSummary g;
        std::tie(g.dataset, g.subset, g.protocol, g.shots, g.preset) = key;
        g.n_runs = aucs.size();
        g.low_replication = aucs.size() < 2;
        double sum = 0.0;
        for (double a : aucs) sum += a;
        g.mean_auc = sum / static_cast<double>(aucs.size());
        double sq = 0.0;
        for (double a : aucs) sq += (a - g.mean_auc) * (a - g.mean_auc);
        g.std_auc = std::sqrt(sq / static_cast<double>(aucs.size()));
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<GroupSummary> aggregate_datasets(const std::vector<GroupSummary>& subsets) {
    std::map<std::tuple<std::string, std::string, std::size_t, std::string>,
             std::vector<const GroupSummary*>>
        groups;
    for (const GroupSummary& g : subsets)
        groups[{g.dataset, g.protocol, g.shots, g.preset}].push_back(&g);
    std::vector<GroupSummary> out;
    for (const auto& [key, members] : groups) {
        GroupSummary g;
        std::tie(g.dataset, g.protocol, g.shots, g.preset) = key;
        g.subset = "mean";
        g.n_runs = 0;
        double sum = 0.0, sq = 0.0;
        for (const GroupSummary* m : members) {
            sum += m->mean_auc;
            sq += m->std_auc * m->std_auc;
            g.n_runs += m->n_runs;
        }
        double k = static_cast<double>(members.size());
        g.mean_auc = sum / k;
        g.std_auc = std::sqrt(sq) / k; // uniform weights over subsets
        out.push_back(std::move(g));
    }
    return out;
}

std::string scores_table(const std::vector<ScoredExample>& scored, const AblationMask& mask,
                         const std::vector<double>& scales) {
    std::ostringstream os;
    os << "id\tlabel\tclass\tcomposite";
    auto head_cols = [&](const char* head, bool enabled) {
        if (!enabled) return;
        for (double s : scales) os << "\t" << head << "@" << fmt(s);
    };
    head_cols("seen", mask.seen);
    head_cols("pseudo", mask.pseudo);
    head_cols("residual", mask.residual);
    head_cols("normality", mask.normality);
    os << "\n";
    for (const ScoredExample& e : scored) {
        os << e.id << "\t" << e.label << "\t" << (e.anomaly_class.empty() ? "-" : e.anomaly_class)
           << "\t" << fmt(e.composite);
        auto emit = [&](bool enabled, auto pick) {
            if (!enabled) return;
            for (const auto& [scale, hs] : e.per_scale) os << "\t" << fmt(*pick(hs));
        };
        emit(mask.seen, [](const HeadScores& h) { return h.seen; });
        emit(mask.pseudo, [](const HeadScores& h) { return h.pseudo; });
        emit(mask.residual, [](const HeadScores& h) { return h.residual; });
        emit(mask.normality, [](const HeadScores& h) { return h.normality; });
        os << "\n";
    }
    return os.str();
}

std::string report_table_header() {
    return "dataset\tsubset\tprotocol\tshots\tpreset\tseed\tauc\tseconds\tconfig_hash\n";
}

std::string report_table_row(const RunReport& r) {
    std::ostringstream os;
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
    os << r.dataset << "\t" << r.subset << "\t" << r.protocol << "\t" << r.shots << "\t"
       << r.preset << "\t" << r.seed << "\t" << fmt(r.auc) << "\t" << fmt(r.seconds) << "\t"
       << hash << "\n";
    return os.str();
}

std::string aggregate_table(const std::vector<GroupSummary>& groups) {
    std::ostringstream os;
    os << "dataset\tsubset\tprotocol\tshots\tpreset\tmean_auc\tstd_auc\tn_runs\n";
    for (const GroupSummary& g : groups) {
        os << g.dataset << "\t" << g.subset << "\t" << g.protocol << "\t" << g.shots << "\t"
           << g.preset << "\t" << fmt(g.mean_auc) << "\t" << fmt(g.std_auc) << "\t" << g.n_runs;
        if (g.low_replication) os << "\t# low replication";
        os << "\n";
    }
    return os.str();
}

std::string score_histogram_svg(const std::vector<ScoredExample>& scored, std::size_t bins) {
    if (scored.empty() || bins == 0) return "<svg xmlns=\"http://www.w3.org/2000/svg\"/>";
    double lo = scored.front().composite, hi = lo;
    for (const ScoredExample& e : scored) {
        lo = std::min(lo, e.composite);
        hi = std::max(hi, e.composite);
    }
    if (hi <= lo) hi = lo + 1.0;
    std::vector<double> h0(bins, 0.0), h1(bins, 0.0);
    for (const ScoredExample& e : scored) {
        std::size_t b = std::min(bins - 1, static_cast<std::size_t>((e.composite - lo) /
                                                                    (hi - lo) * bins));
        (e.label ? h1 : h0)[b] += 1.0;
    }
    double peak = 1.0;
    for (std::size_t i = 0; i < bins; ++i) peak = std::max({peak, h0[i], h1[i]});

    const double W = 640, H = 280, pad = 32;
    double bw = (W - 2 * pad) / static_cast<double>(bins);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto bars = [&](const std::vector<double>& h, const char* color, double shift) {
        for (std::size_t i = 0; i < bins; ++i) {
            if (h[i] <= 0.0) continue;
            double bh = (H - 2 * pad) * h[i] / peak;
            os << "<rect x=\"" << fmt(pad + bw * i + shift) << "\" y=\"" << fmt(H - pad - bh)
               << "\" width=\"" << fmt(bw * 0.42) << "\" height=\"" << fmt(bh) << "\" fill=\""
               << color << "\" fill-opacity=\"0.8\"/>\n";
        }
    };
    bars(h0, "#3b6fb6", 0.0);
    bars(h1, "#c0392b", bw * 0.46);
    os << "<text x=\"" << pad << "\" y=\"18\" font-size=\"12\">anomaly score distribution "
       << "(blue: normal, red: anomaly), range [" << fmt(lo) << ", " << fmt(hi) << "]</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace dra
