#include "dra/nn.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <stdexcept>

namespace dra::nn {

void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < k) throw std::invalid_argument("conv2d: input smaller than kernel");
    return (in + 2 * pad - k) / stride + 1;
}

// cols is [ic*k*k, oh*ow]; zero-padded border samples stay 0.
void im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t oh, std::size_t ow, std::vector<double>& cols) {
    std::size_t ic = x.dim(0), h = x.dim(1), w = x.dim(2);
    cols.assign(ic * k * k * oh * ow, 0.0);
    for (std::size_t c = 0; c < ic; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* dst = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const double* src = x.data() + (c * h + iy) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        dst[oy * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_acc(const std::vector<double>& cols, std::size_t ic, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow,
                Tensor& dx) {
    for (std::size_t c = 0; c < ic; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* src = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    double* dst = dx.data() + (c * h + iy) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, std::span<const double> w, std::span<const double> bias,
              std::size_t oc, std::size_t k, std::size_t stride, std::size_t pad) {
    if (x.ndim() != 3) throw std::invalid_argument("conv2d expects [c,h,w] input");
    std::size_t ic = x.dim(0);
    if (w.size() != oc * ic * k * k)
        throw std::invalid_argument("conv2d: weight size does not match configuration");
    if (bias.size() != oc) throw std::invalid_argument("conv2d: bias size mismatch");
    std::size_t oh = conv_out(x.dim(1), k, stride, pad);
    std::size_t ow = conv_out(x.dim(2), k, stride, pad);

    std::vector<double> cols;
    im2col(x, k, stride, pad, oh, ow, cols);

    Tensor y({oc, oh, ow});
    for (std::size_t o = 0; o < oc; ++o) {
        double* row = y.data() + o * oh * ow;
        std::fill(row, row + oh * ow, bias[o]);
    }
    matmul_acc(w.data(), cols.data(), y.data(), oc, ic * k * k, oh * ow);
    return y;
}

void conv2d_backward(const Tensor& x, std::span<const double> w, std::size_t oc, std::size_t k,
                     std::size_t stride, std::size_t pad, const Tensor& dy, Tensor* dx,
                     std::span<double> dw, std::span<double> dbias) {
    std::size_t ic = x.dim(0);
    std::size_t oh = dy.dim(1), ow = dy.dim(2);
    std::size_t kk = ic * k * k;

    std::vector<double> cols;
    im2col(x, k, stride, pad, oh, ow, cols);

    // dW[o, p] += sum_j dy[o, j] * cols[p, j]
    for (std::size_t o = 0; o < oc; ++o) {
        const double* dyrow = dy.data() + o * oh * ow;
        if (!dbias.empty()) {
            double bsum = 0.0;
            for (std::size_t j = 0; j < oh * ow; ++j) bsum += dyrow[j];
            dbias[o] += bsum;
        }
        double* dwrow = dw.data() + o * kk;
        for (std::size_t p = 0; p < kk; ++p) {
            const double* crow = cols.data() + p * oh * ow;
            double s = 0.0;
            for (std::size_t j = 0; j < oh * ow; ++j) s += dyrow[j] * crow[j];
            dwrow[p] += s;
        }
    }

    if (dx) {
        // dcols[p, j] = sum_o w[o, p] * dy[o, j], then scatter back.
        std::vector<double> dcols(kk * oh * ow, 0.0);
        for (std::size_t o = 0; o < oc; ++o) {
            const double* wrow = w.data() + o * kk;
            const double* dyrow = dy.data() + o * oh * ow;
            for (std::size_t p = 0; p < kk; ++p) {
                double wv = wrow[p];
                if (wv == 0.0) continue;
                double* drow = dcols.data() + p * oh * ow;
                for (std::size_t j = 0; j < oh * ow; ++j) drow[j] += wv * dyrow[j];
            }
        }
        *dx = Tensor({ic, x.dim(1), x.dim(2)});
        col2im_acc(dcols, ic, x.dim(1), x.dim(2), k, stride, pad, oh, ow, *dx);
    }
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (x[i] <= 0.0) dx[i] = 0.0;
    return dx;
}

Tensor maxpool3x3s2(const Tensor& x) {
    std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::size_t oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
    Tensor y({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * 2) + ky - 1;
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * 2) + kx - 1;
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                            ix >= static_cast<std::ptrdiff_t>(w))
                            continue;
                        best = std::max(best, x.at(ch, iy, ix));
                    }
                y.at(ch, oy, ox) = best;
            }
    return y;
}

Tensor maxpool3x3s2_backward(const Tensor& x, const Tensor& dy) {
    std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::size_t oh = dy.dim(1), ow = dy.dim(2);
    Tensor dx({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::ptrdiff_t by = 0, bx = 0;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * 2) + ky - 1;
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * 2) + kx - 1;
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                            ix >= static_cast<std::ptrdiff_t>(w))
                            continue;
                        double v = x.at(ch, iy, ix);
                        if (v > best) {
                            best = v;
                            by = iy;
                            bx = ix;
                        }
                    }
                dx.at(ch, by, bx) += dy.at(ch, oy, ox);
            }
    return dx;
}

Tensor channel_affine(const Tensor& x, std::span<const double> scale,
                      std::span<const double> shift) {
    std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (scale.size() != c || shift.size() != c)
        throw std::invalid_argument("channel_affine: parameter size mismatch");
    Tensor y = x;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = scale[ch], b = shift[ch];
        double* row = y.data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] = row[i] * s + b;
    }
    return y;
}

void channel_affine_backward(const Tensor& x, std::span<const double> scale, const Tensor& dy,
                             Tensor* dx, std::span<double> dscale, std::span<double> dshift) {
    std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (dx) *dx = Tensor({x.dim(0), x.dim(1), x.dim(2)});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xrow = x.data() + ch * hw;
        const double* dyrow = dy.data() + ch * hw;
        double ds = 0.0, db = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            ds += dyrow[i] * xrow[i];
            db += dyrow[i];
        }
        dscale[ch] += ds;
        dshift[ch] += db;
        if (dx) {
            double s = scale[ch];
            double* dxrow = dx->data() + ch * hw;
            for (std::size_t i = 0; i < hw; ++i) dxrow[i] = dyrow[i] * s;
        }
    }
}

std::vector<double> linear(std::span<const double> x, std::span<const double> w,
                           std::span<const double> b, std::size_t out_dim) {
    std::size_t in_dim = x.size();
    if (w.size() != out_dim * in_dim || b.size() != out_dim)
        throw std::invalid_argument("linear: parameter size mismatch");
    std::vector<double> y(out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double* row = w.data() + o * in_dim;
        double s = b[o];
        for (std::size_t i = 0; i < in_dim; ++i) s += row[i] * x[i];
        y[o] = s;
    }
    return y;
}

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::size_t out_dim, std::span<double> dx,
                     std::span<double> dw, std::span<double> db) {
    std::size_t in_dim = x.size();
    assert(dy.size() == out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) {
        double g = dy[o];
        db[o] += g;
        const double* wrow = w.data() + o * in_dim;
        double* dwrow = dw.data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
            dwrow[i] += g * x[i];
            if (!dx.empty()) dx[i] += g * wrow[i];
        }
    }
}

} // namespace dra::nn
