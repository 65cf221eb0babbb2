#include "dra/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dra {

void check_image(const ImageTensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3)
        throw std::invalid_argument("image must have shape [3,h,w], got " + t.shape_str());
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = t[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument("image values must be finite and in [0,1]");
    }
}

ImageTensor make_image(std::size_t h, std::size_t w, double value) {
    ImageTensor img({3, h, w});
    img.fill(value);
    return img;
}

ImageTensor bilinear_resize(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.ndim() != 3) throw std::invalid_argument("bilinear_resize expects [c,h,w]");
    std::size_t c = img.dim(0), in_h = img.dim(1), in_w = img.dim(2);
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("bilinear_resize: zero output size");
    ImageTensor out({c, out_h, out_w});
    double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        double y0f = std::floor(fy);
        double wy = fy - y0f;
        std::ptrdiff_t y0 = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y0f), 0,
                                                       static_cast<std::ptrdiff_t>(in_h) - 1);
        std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(y0 + 1, static_cast<std::ptrdiff_t>(in_h) - 1);
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            double x0f = std::floor(fx);
            double wx = fx - x0f;
            std::ptrdiff_t x0 = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x0f), 0,
                                                           static_cast<std::ptrdiff_t>(in_w) - 1);
            std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(x0 + 1, static_cast<std::ptrdiff_t>(in_w) - 1);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double v00 = img.at(ch, y0, x0);
                double v01 = img.at(ch, y0, x1);
                double v10 = img.at(ch, y1, x0);
                double v11 = img.at(ch, y1, x1);
                double top = v00 + (v01 - v00) * wx;
                double bot = v10 + (v11 - v10) * wx;
                out.at(ch, y, x) = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

double image_mean(const ImageTensor& img) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) s += img[i];
    return img.size() ? s / static_cast<double>(img.size()) : 0.0;
}

} // namespace dra
