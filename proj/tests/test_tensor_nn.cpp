#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dra/nn.hpp"
#include "oracles.hpp"

using namespace dra;

TEST_CASE("conv2d computes a hand-worked example") {
    // 1x3x3 input, one 3x3 kernel, stride 1, pad 1: center output is the
    // full correlation, corners see the zero padding.
    Tensor x({1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i + 1);
    std::vector<double> w(9, 1.0);
    std::vector<double> b = {0.5};
    Tensor y = nn::conv2d(x, w, b, 1, 3, 1, 1);
    REQUIRE(y.dims() == std::vector<std::size_t>({1, 3, 3}));
    CHECK(y.at(0, 1, 1) == doctest::Approx(45.5)); // 1+..+9 + bias
    CHECK(y.at(0, 0, 0) == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
}

TEST_CASE("conv2d stride-2 output geometry") {
    Rng rng(7);
    Tensor x = oracles::random_tensor({3, 32, 32}, rng);
    std::vector<double> w(8 * 3 * 9), b(8, 0.0);
    for (double& v : w) v = uniform_real(rng, -0.2, 0.2);
    Tensor y = nn::conv2d(x, w, b, 8, 3, 2, 1);
    CHECK(y.dims() == std::vector<std::size_t>({8, 16, 16}));
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(11);
    Tensor x = oracles::random_tensor({2, 6, 6}, rng);
    std::size_t oc = 3, k = 3;
    std::vector<double> w(oc * 2 * k * k), b(oc);
    for (double& v : w) v = uniform_real(rng, -0.5, 0.5);
    for (double& v : b) v = uniform_real(rng, -0.5, 0.5);
    // random linear functional of the output
    Tensor y0 = nn::conv2d(x, w, b, oc, k, 2, 1);
    Tensor c = oracles::random_tensor(y0.dims(), rng);
    auto loss = [&](const Tensor& xx, const std::vector<double>& ww,
                    const std::vector<double>& bb) {
        Tensor y = nn::conv2d(xx, ww, bb, oc, k, 2, 1);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
        return s;
    };

    Tensor dx;
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
    nn::conv2d_backward(x, w, oc, k, 2, 1, c, &dx, dw, db);

    for (int t = 0; t < 12; ++t) {
        std::size_t wi = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w.size()) - 1));
        double fd = oracles::central_diff(
            [&](double v) {
                std::vector<double> ww = w;
                ww[wi] = v;
                return loss(x, ww, b);
            },
            w[wi]);
        CHECK(dw[wi] == doctest::Approx(fd).epsilon(1e-6));
    }
    for (int t = 0; t < 12; ++t) {
        std::size_t xi = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(x.size()) - 1));
        double fd = oracles::central_diff(
            [&](double v) {
                Tensor xx = x;
                xx[xi] = v;
                return loss(xx, w, b);
            },
            x[xi]);
        CHECK(dx[xi] == doctest::Approx(fd).epsilon(1e-6));
    }
    double fd_b = oracles::central_diff(
        [&](double v) {
            std::vector<double> bb = b;
            bb[1] = v;
            return loss(x, w, bb);
        },
        b[1]);
    CHECK(db[1] == doctest::Approx(fd_b).epsilon(1e-6));
}

TEST_CASE("linear and its backward agree with finite differences") {
    Rng rng(13);
    std::vector<double> x(5), w(3 * 5), b(3);
    for (double& v : x) v = uniform_real(rng, -1, 1);
    for (double& v : w) v = uniform_real(rng, -1, 1);
    for (double& v : b) v = uniform_real(rng, -1, 1);
    std::vector<double> dy = {0.3, -0.7, 1.1};
    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                    const std::vector<double>& bb) {
        std::vector<double> y = nn::linear(xx, ww, bb, 3);
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += dy[i] * y[i];
        return s;
    };
    std::vector<double> dx(5, 0.0), dw(w.size(), 0.0), db(3, 0.0);
    nn::linear_backward(x, w, dy, 3, dx, dw, db);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double fd = oracles::central_diff(
            [&](double v) {
                auto xx = x;
                xx[i] = v;
                return loss(xx, w, b);
            },
            x[i]);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-7));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        double fd = oracles::central_diff(
            [&](double v) {
                auto ww = w;
                ww[i] = v;
                return loss(x, ww, b);
            },
            w[i]);
        CHECK(dw[i] == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("relu backward masks by forward input") {
    Tensor x({1, 1, 4});
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.0;
    x[3] = -0.5;
    Tensor dy({1, 1, 4});
    dy.fill(1.0);
    Tensor dx = nn::relu_backward(x, dy);
    CHECK(dx[0] == 0.0);
    CHECK(dx[1] == 0.0);
    CHECK(dx[2] == 1.0);
    CHECK(dx[3] == 0.0);
}

TEST_CASE("maxpool3x3s2 forward/backward") {
    Rng rng(17);
    Tensor x = oracles::random_tensor({2, 8, 8}, rng);
    Tensor y = nn::maxpool3x3s2(x);
    CHECK(y.dims() == std::vector<std::size_t>({2, 4, 4}));
    // every output equals the max over its window
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t oy = 0; oy < 4; ++oy)
            for (std::size_t ox = 0; ox < 4; ++ox) {
                double best = -1e300;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * 2 + ky;
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * 2 + kx;
                        if (iy < 0 || ix < 0 || iy >= 8 || ix >= 8) continue;
                        best = std::max(best, x.at(c, iy, ix));
                    }
                CHECK(y.at(c, oy, ox) == best);
            }
    Tensor dy({2, 4, 4});
    dy.fill(1.0);
    Tensor dx = nn::maxpool3x3s2_backward(x, dy);
    double total = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) total += dx[i];
    CHECK(total == doctest::Approx(32.0)); // one unit per output cell
}

TEST_CASE("channel_affine backward matches finite differences") {
    Rng rng(19);
    Tensor x = oracles::random_tensor({3, 4, 4}, rng);
    std::vector<double> scale = {0.5, -1.2, 2.0}, shift = {0.1, 0.0, -0.3};
    Tensor dy = oracles::random_tensor({3, 4, 4}, rng);
    auto loss = [&](const Tensor& xx, const std::vector<double>& sc,
                    const std::vector<double>& sh) {
        Tensor y = nn::channel_affine(xx, sc, sh);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += dy[i] * y[i];
        return s;
    };
    Tensor dx;
    std::vector<double> dscale(3, 0.0), dshift(3, 0.0);
    nn::channel_affine_backward(x, scale, dy, &dx, dscale, dshift);
    for (std::size_t c = 0; c < 3; ++c) {
        double fd = oracles::central_diff(
            [&](double v) {
                auto sc = scale;
                sc[c] = v;
                return loss(x, sc, shift);
            },
            scale[c]);
        CHECK(dscale[c] == doctest::Approx(fd).epsilon(1e-7));
    }
    std::size_t xi = 22;
    double fd = oracles::central_diff(
        [&](double v) {
            Tensor xx = x;
            xx[xi] = v;
            return loss(xx, scale, shift);
        },
        x[xi]);
    CHECK(dx[xi] == doctest::Approx(fd).epsilon(1e-7));
}
