#include "dra/pseudogen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace dra {

PseudoKind parse_pseudo_kind(const std::string& name) {
    if (name == "cutmix") return PseudoKind::Cutmix;
    if (name == "cutpaste_scar") return PseudoKind::CutpasteScar;
    if (name == "cutpaste_mix") return PseudoKind::CutpasteMix;
    if (name == "outlier_pool") return PseudoKind::OutlierPool;
    throw std::invalid_argument("unknown pseudo-anomaly source '" + name + "'");
}

std::string pseudo_kind_name(PseudoKind k) {
    switch (k) {
        case PseudoKind::Cutmix: return "cutmix";
        case PseudoKind::CutpasteScar: return "cutpaste_scar";
        case PseudoKind::CutpasteMix: return "cutpaste_mix";
        case PseudoKind::OutlierPool: return "outlier_pool";
    }
    return "?";
}

RectMask random_rect_mask(std::size_t h, std::size_t w, Rng& rng, double min_area_frac,
                          double max_area_frac) {
    if (h < 8 || w < 8) throw std::invalid_argument("random_rect_mask: image must be >= 8x8");
    if (!(min_area_frac > 0.0) || max_area_frac > 1.0 || min_area_frac > max_area_frac)
        throw std::invalid_argument("random_rect_mask: bad area bounds");
    double total = static_cast<double>(h * w);
    // Feasibility: some box satisfies the bounds.
    bool feasible = false;
    for (std::size_t bh = 1; bh <= h && !feasible; ++bh) {
        double lo = std::ceil(min_area_frac * total / static_cast<double>(bh));
        double hi = std::floor(max_area_frac * total / static_cast<double>(bh));
        if (lo <= hi && lo <= static_cast<double>(w) && hi >= 1.0) feasible = true;
    }
    if (!feasible)
        throw std::invalid_argument("random_rect_mask: area bounds infeasible for image size");

    for (int tries = 0; tries < 10000; ++tries) {
        std::size_t bh = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(h)));
        std::size_t bw = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(w)));
        double frac = static_cast<double>(bh * bw) / total;
        if (frac < min_area_frac || frac > max_area_frac) continue;
        RectMask m;
        m.image_h = h;
        m.image_w = w;
        m.height = bh;
        m.width = bw;
        m.top = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - bh)));
        m.left = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - bw)));
        return m;
    }
    throw std::runtime_error("random_rect_mask: sampling failed");
}

JitterFactors sample_jitter(const JitterRanges& r, Rng& rng) {
    // Near-identity draws would paste a patch indistinguishable from the
    // source and label it anomalous; resample until the jitter is effective.
    for (int tries = 0; tries < 64; ++tries) {
        JitterFactors f;
        f.brightness = uniform_real(rng, r.factor_lo, r.factor_hi);
        f.contrast = uniform_real(rng, r.factor_lo, r.factor_hi);
        f.saturation = uniform_real(rng, r.factor_lo, r.factor_hi);
        f.hue = uniform_real(rng, r.hue_lo, r.hue_hi);
        double strength = std::max({std::abs(f.brightness - 1.0), std::abs(f.contrast - 1.0),
                                    std::abs(f.saturation - 1.0), std::abs(f.hue) * 5.0});
        if (strength >= 0.25 || (r.factor_lo == 1.0 && r.factor_hi == 1.0)) return f;
    }
    JitterFactors f;
    f.brightness = r.factor_lo;
    return f;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    double d = mx - mn;
    s = mx == 0.0 ? 0.0 : d / mx;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / d + 2.0) / 6.0;
    } else {
        h = ((r - g) / d + 4.0) / 6.0;
    }
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    double hh = std::fmod(h, 1.0) * 6.0;
    int sector = static_cast<int>(std::floor(hh)) % 6;
    double f = hh - std::floor(hh);
    double p = v * (1.0 - s);
    double q = v * (1.0 - s * f);
    double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Color jitter on a patch stored as [3, n] pixel values. Each component is a
// no-op when its factor is at identity, so a fully-identity jitter is a
// bitwise passthrough.
void jitter_patch(std::vector<double>& px, std::size_t n, const JitterFactors& f) {
    if (f.identity()) return;
    if (f.brightness != 1.0)
        for (double& v : px) v *= f.brightness;
    if (f.contrast != 1.0) {
        double mean = 0.0;
        for (double v : px) mean += v;
        mean /= static_cast<double>(px.size());
        for (double& v : px) v = mean + (v - mean) * f.contrast;
    }
    if (f.saturation != 1.0) {
        for (std::size_t i = 0; i < n; ++i) {
            double r = px[i], g = px[n + i], b = px[2 * n + i];
            double gray = (r + g + b) / 3.0;
            px[i] = gray + (r - gray) * f.saturation;
            px[n + i] = gray + (g - gray) * f.saturation;
            px[2 * n + i] = gray + (b - gray) * f.saturation;
        }
    }
    if (f.hue != 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            double h, s, v;
            rgb_to_hsv(std::clamp(px[i], 0.0, 1.0), std::clamp(px[n + i], 0.0, 1.0),
                       std::clamp(px[2 * n + i], 0.0, 1.0), h, s, v);
            h = std::fmod(h + f.hue + 1.0, 1.0);
            hsv_to_rgb(h, s, v, px[i], px[n + i], px[2 * n + i]);
        }
    }
    for (double& v : px) v = std::clamp(v, 0.0, 1.0);
}

} // namespace

PseudoResult apply_cutmix(const ImageTensor& x, const RectMask& mask, const JitterFactors& jit,
                          std::ptrdiff_t dy, std::ptrdiff_t dx) {
    std::size_t h = x.dim(1), w = x.dim(2);
    if (mask.image_h != h || mask.image_w != w)
        throw std::invalid_argument("apply_cutmix: mask does not match image size");

    std::size_t n = mask.area();
    std::vector<double> patch(3 * n);
    std::size_t p = 0;
    for (std::size_t y = mask.top; y < mask.top + mask.height; ++y)
        for (std::size_t xx = mask.left; xx < mask.left + mask.width; ++xx, ++p) {
            patch[p] = x.at(0, y, xx);
            patch[n + p] = x.at(1, y, xx);
            patch[2 * n + p] = x.at(2, y, xx);
        }
    jitter_patch(patch, n, jit);

    PseudoResult out;
    out.image = x;
    out.pasted.assign(h * w, 0);
    p = 0;
    for (std::size_t py = 0; py < mask.height; ++py)
        for (std::size_t px = 0; px < mask.width; ++px, ++p) {
            std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(mask.top + py) + dy;
            std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(mask.left + px) + dx;
            if (ty < 0 || tx < 0 || ty >= static_cast<std::ptrdiff_t>(h) ||
                tx >= static_cast<std::ptrdiff_t>(w))
                continue;
            out.image.at(0, ty, tx) = patch[p];
            out.image.at(1, ty, tx) = patch[n + p];
            out.image.at(2, ty, tx) = patch[2 * n + p];
            out.pasted[static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx)] = 1;
        }
    for (std::uint8_t m : out.pasted) out.pasted_area += m;
    return out;
}

PseudoResult cutmix(const ImageTensor& x, Rng& rng, const CutmixParams& params) {
    check_image(x);
    std::size_t h = x.dim(1), w = x.dim(2);
    RectMask mask = random_rect_mask(h, w, rng, params.min_area_frac, params.max_area_frac);
    JitterFactors jit =
        params.identity_jitter ? JitterFactors{} : sample_jitter(params.jitter, rng);

    std::ptrdiff_t dy = 0, dx = 0;
    if (!params.identity_translation) {
        bool ok = false;
        for (int t = 0; t < params.max_retries; ++t) {
            dy = uniform_int(rng, -static_cast<std::int64_t>(mask.top + mask.height - 1),
                             static_cast<std::int64_t>(h - 1 - mask.top));
            dx = uniform_int(rng, -static_cast<std::int64_t>(mask.left + mask.width - 1),
                             static_cast<std::int64_t>(w - 1 - mask.left));
            // Count how much of the translated box stays inside the image.
            std::ptrdiff_t t0 = static_cast<std::ptrdiff_t>(mask.top) + dy;
            std::ptrdiff_t l0 = static_cast<std::ptrdiff_t>(mask.left) + dx;
            std::ptrdiff_t t1 = t0 + static_cast<std::ptrdiff_t>(mask.height);
            std::ptrdiff_t l1 = l0 + static_cast<std::ptrdiff_t>(mask.width);
            std::ptrdiff_t ih = std::min<std::ptrdiff_t>(t1, h) - std::max<std::ptrdiff_t>(t0, 0);
            std::ptrdiff_t iw = std::min<std::ptrdiff_t>(l1, w) - std::max<std::ptrdiff_t>(l0, 0);
            double inside = ih > 0 && iw > 0 ? static_cast<double>(ih * iw) : 0.0;
            if (inside >= params.min_inside_frac * static_cast<double>(mask.area())) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::runtime_error("cutmix: could not place translated patch");
    }
    return apply_cutmix(x, mask, jit, dy, dx);
}

PseudoResult cutpaste_scar(const ImageTensor& x, Rng& rng, const ScarParams& params) {
    check_image(x);
    std::size_t h = x.dim(1), w = x.dim(2);
    if (h < 8 || w < 8) throw std::invalid_argument("cutpaste_scar: image must be >= 8x8");
    if (params.min_len < 2 || params.min_width < 1)
        throw std::invalid_argument("cutpaste_scar: scar floor is 2x10 px");

    std::size_t len = std::min<std::size_t>(
        w - 2, static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(params.min_len),
                                                    static_cast<std::int64_t>(params.max_len))));
    std::size_t wid = std::min<std::size_t>(
        h - 2,
        static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(params.min_width),
                                             static_cast<std::int64_t>(params.max_width))));

    // Source rectangle.
    std::size_t sy = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - wid)));
    std::size_t sx = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - len)));
    std::size_t n = wid * len;
    std::vector<double> patch(3 * n);
    std::size_t p = 0;
    for (std::size_t y = sy; y < sy + wid; ++y)
        for (std::size_t xx = sx; xx < sx + len; ++xx, ++p) {
            patch[p] = x.at(0, y, xx);
            patch[n + p] = x.at(1, y, xx);
            patch[2 * n + p] = x.at(2, y, xx);
        }
    JitterFactors jit =
        params.identity_jitter ? JitterFactors{} : sample_jitter(params.jitter, rng);
    jitter_patch(patch, n, jit);

    double angle = uniform_real(rng, -params.max_angle_deg, params.max_angle_deg) * M_PI / 180.0;
    double ca = std::cos(angle), sa = std::sin(angle);

    // Target center; keep the rotated scar's bounding box inside the image.
    double half_diag = 0.5 * std::sqrt(static_cast<double>(len * len + wid * wid));
    std::size_t margin = static_cast<std::size_t>(std::ceil(half_diag));
    if (2 * margin >= h || 2 * margin >= w)
        margin = std::min(h, w) / 2 - 1; // small images: allow clipping instead
    double cy = static_cast<double>(
        uniform_int(rng, static_cast<std::int64_t>(margin), static_cast<std::int64_t>(h - 1 - margin)));
    double cx = static_cast<double>(
        uniform_int(rng, static_cast<std::int64_t>(margin), static_cast<std::int64_t>(w - 1 - margin)));

    PseudoResult out;
    out.image = x;
    out.pasted.assign(h * w, 0);

    // Rasterize: for every pixel near the target, inverse-rotate into scar
    // coordinates and sample the patch with nearest-neighbor lookup.
    std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(std::ceil(half_diag)) + 1;
    for (std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(cy) - radius;
         ty <= static_cast<std::ptrdiff_t>(cy) + radius; ++ty) {
        if (ty < 0 || ty >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(cx) - radius;
             tx <= static_cast<std::ptrdiff_t>(cx) + radius; ++tx) {
            if (tx < 0 || tx >= static_cast<std::ptrdiff_t>(w)) continue;
            double ry = static_cast<double>(ty) - cy;
            double rx = static_cast<double>(tx) - cx;
            // inverse rotation
            double py = ry * ca + rx * sa + static_cast<double>(wid) / 2.0;
            double px = -ry * sa + rx * ca + static_cast<double>(len) / 2.0;
            if (py < 0.0 || px < 0.0 || py >= static_cast<double>(wid) ||
                px >= static_cast<double>(len))
                continue;
            std::size_t iy = std::min<std::size_t>(wid - 1, static_cast<std::size_t>(py));
            std::size_t ix = std::min<std::size_t>(len - 1, static_cast<std::size_t>(px));
            std::size_t pi = iy * len + ix;
            out.image.at(0, ty, tx) = patch[pi];
            out.image.at(1, ty, tx) = patch[n + pi];
            out.image.at(2, ty, tx) = patch[2 * n + pi];
            out.pasted[static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx)] = 1;
        }
    }
    for (std::uint8_t m : out.pasted) out.pasted_area += m;
    if (out.pasted_area == 0) throw std::runtime_error("cutpaste_scar: empty paste region");
    return out;
}

OutlierPool OutlierPool::open(const PseudoSource& source,
                              const std::vector<std::string>& target_ids) {
    namespace fs = std::filesystem;
    if (source.pool_path.empty())
        throw std::invalid_argument("outlier_pool selected but no pool path configured");
    if (!fs::is_directory(source.pool_path))
        throw std::invalid_argument("outlier pool directory not found: " + source.pool_path);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(source.pool_path))
        if (e.is_regular_file()) ids.push_back(e.path().filename().string());
    std::vector<std::string> excluded = target_ids;
    if (!source.exclusion_path.empty()) {
        std::ifstream in(source.exclusion_path);
        if (!in) throw std::invalid_argument("cannot read exclusion list " + source.exclusion_path);
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (!line.empty()) excluded.push_back(line);
        }
    }
    return OutlierPool(std::move(ids), excluded);
}

OutlierPool::OutlierPool(std::vector<std::string> ids, const std::vector<std::string>& excluded) {
    std::set<std::string> ex(excluded.begin(), excluded.end());
    for (std::string& id : ids)
        if (!ex.count(id)) ids_.push_back(std::move(id));
    std::sort(ids_.begin(), ids_.end());
    if (ids_.empty())
        throw std::invalid_argument("outlier pool is empty after exclusion filtering");
}

const std::string& OutlierPool::draw_id(Rng& rng) const {
    return ids_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(ids_.size()) - 1))];
}

} // namespace dra
