#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dra/image.hpp"
#include "dra/rng.hpp"

namespace dra {

// Axis-aligned rectangle mask: exactly the box region is 1.
struct RectMask {
    std::size_t image_h = 0, image_w = 0;
    std::size_t top = 0, left = 0, height = 0, width = 0;

    std::size_t area() const { return height * width; }
    bool at(std::size_t y, std::size_t x) const {
        return y >= top && y < top + height && x >= left && x < left + width;
    }
};

struct JitterRanges {
    double factor_lo = 0.5, factor_hi = 1.5; // brightness/contrast/saturation
    double hue_lo = -0.1, hue_hi = 0.1;      // fraction of a full hue turn
};

struct CutmixParams {
    double min_area_frac = 0.01;
    double max_area_frac = 0.25;
    JitterRanges jitter;
    bool identity_jitter = false;      // force C = identity (bitwise passthrough)
    bool identity_translation = false; // force T = identity
    double min_inside_frac = 0.5;      // translated box must stay this far inside
    int max_retries = 64;
};

struct ScarParams {
    std::size_t min_len = 10, max_len = 16;
    std::size_t min_width = 2, max_width = 4;
    double max_angle_deg = 45.0;
    JitterRanges jitter;
    bool identity_jitter = false;
};

enum class PseudoKind { Cutmix, CutpasteScar, CutpasteMix, OutlierPool };
PseudoKind parse_pseudo_kind(const std::string& name);
std::string pseudo_kind_name(PseudoKind k);

struct PseudoSource {
    PseudoKind kind = PseudoKind::Cutmix;
    std::string pool_path;      // directory of images, outlier_pool only
    std::string exclusion_path; // optional text file of excluded identifiers
    CutmixParams cutmix;
    ScarParams scar;
};

// Pasted image plus the effective paste mask, so callers can verify Eq.-style
// bookkeeping and only assign a pseudo label when the region is nonempty.
struct PseudoResult {
    ImageTensor image;
    std::vector<std::uint8_t> pasted; // h*w, 1 where the output was written
    std::size_t pasted_area = 0;
};

// Uniformly random box with area/(h*w) inside [min_area_frac, max_area_frac].
RectMask random_rect_mask(std::size_t h, std::size_t w, Rng& rng, double min_area_frac = 0.01,
                          double max_area_frac = 0.25);

struct JitterFactors {
    double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
    bool identity() const {
        return brightness == 1.0 && contrast == 1.0 && saturation == 1.0 && hue == 0.0;
    }
};
JitterFactors sample_jitter(const JitterRanges& r, Rng& rng);

// Deterministic core of cutmix: cut the masked patch, jitter, translate by
// (dy,dx), paste. Exposed so tests can pin mask and translation.
PseudoResult apply_cutmix(const ImageTensor& x, const RectMask& mask, const JitterFactors& jit,
                          std::ptrdiff_t dy, std::ptrdiff_t dx);

PseudoResult cutmix(const ImageTensor& x, Rng& rng, const CutmixParams& params);
PseudoResult cutpaste_scar(const ImageTensor& x, Rng& rng, const ScarParams& params);

// Directory-backed outlier-exposure pool with identifier exclusion.
class OutlierPool {
public:
    // ids = file names; excluded ids are dropped from the index.
    OutlierPool(std::vector<std::string> ids, const std::vector<std::string>& excluded);
    static OutlierPool open(const PseudoSource& source,
                            const std::vector<std::string>& target_ids);

    std::size_t size() const { return ids_.size(); }
    const std::string& draw_id(Rng& rng) const;

private:
    std::vector<std::string> ids_;
};

} // namespace dra
