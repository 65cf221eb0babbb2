#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dra/featurenet.hpp"
#include "dra/io.hpp"
#include "oracles.hpp"

using namespace dra;

namespace {

struct Net {
    ParamStore store;
    Backbone backbone;
    Net(BackboneArch arch, std::uint64_t seed = 1)
        : backbone(make(arch), store, rng_init(seed)) {}

private:
    static BackboneConfig make(BackboneArch arch) {
        BackboneConfig c;
        c.arch = arch;
        return c;
    }
    static Rng& rng_init(std::uint64_t seed) {
        static Rng rng(0);
        rng.seed(splitmix64(seed));
        return rng;
    }
};

} // namespace

TEST_CASE("feature map geometry follows the backbone configuration") {
    Rng rng(3);
    SUBCASE("tiny backbone: downsample 8, 64 channels") {
        Net n(BackboneArch::Tiny);
        for (std::size_t side : {16u, 32u, 48u, 64u}) {
            FeatureMap m = n.backbone.features(oracles::random_image(side, rng), n.store);
            CHECK(m.dims() == std::vector<std::size_t>({64, side / 8, side / 8}));
        }
    }
    SUBCASE("residual-18 backbone: 224 -> 512x7x7, 448 -> 512x14x14") {
        Net n(BackboneArch::Resnet18);
        FeatureMap m224 = n.backbone.features(oracles::random_image(224, rng), n.store);
        CHECK(m224.dims() == std::vector<std::size_t>({512, 7, 7}));
        FeatureMap m448 = n.backbone.features(oracles::random_image(448, rng), n.store);
        CHECK(m448.dims() == std::vector<std::size_t>({512, 14, 14}));
    }
}

TEST_CASE("extract_features is deterministic") {
    Rng rng(5);
    Net n(BackboneArch::Tiny);
    ImageTensor img = oracles::random_image(32, rng);
    FeatureMap a = n.backbone.features(img, n.store);
    FeatureMap b = n.backbone.features(img, n.store);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("extract_features rejects incompatible inputs") {
    Rng rng(6);
    Net n(BackboneArch::Tiny);
    CHECK_THROWS_AS(n.backbone.features(oracles::random_image(30, rng), n.store),
                    std::invalid_argument); // 30 % 8 != 0
    Tensor bad({1, 32, 32});
    CHECK_THROWS_AS(n.backbone.features(bad, n.store), std::invalid_argument);
}

TEST_CASE("backbone gradient matches central finite differences") {
    Rng rng(9);
    Net n(BackboneArch::Tiny);
    ImageTensor img = oracles::random_image(16, rng);

    Backbone::Trace trace;
    FeatureMap m = n.backbone.features(img, n.store, &trace);
    Tensor c = oracles::random_tensor(m.dims(), rng);
    std::vector<double> grads(n.store.total(), 0.0);
    n.backbone.backward(trace, c, n.store, grads);

    auto scalar = [&]() {
        FeatureMap mm = n.backbone.features(img, n.store);
        double s = 0.0;
        for (std::size_t i = 0; i < mm.size(); ++i) s += c[i] * mm[i];
        return s;
    };
    int checked = 0;
    for (int t = 0; t < 40 && checked < 20; ++t) {
        std::size_t wi = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(n.store.total()) - 1));
        double orig = n.store.raw()[wi];
        double h = 1e-5;
        n.store.raw()[wi] = orig + h;
        double fp = scalar();
        n.store.raw()[wi] = orig - h;
        double fm = scalar();
        n.store.raw()[wi] = orig;
        double fd = (fp - fm) / (2.0 * h);
        if (std::abs(fd) < 1e-8) continue; // dead path (rectifier off)
        ++checked;
        CHECK(std::abs(grads[wi] - fd) / std::max(std::abs(fd), 1e-10) < 1e-3);
    }
    CHECK(checked >= 10);
}

TEST_CASE("pyramid_views follows the two-layer pyramid convention") {
    Rng rng(21);
    ImageTensor img = oracles::random_image(448, rng);
    auto views = pyramid_views(img, {1.0, 0.5});
    REQUIRE(views.size() == 2);
    CHECK(views[0].dims() == std::vector<std::size_t>({3, 448, 448}));
    CHECK(views[1].dims() == std::vector<std::size_t>({3, 224, 224}));
}

TEST_CASE("pyramid_views at scale 1.0 reproduces the input") {
    Rng rng(22);
    ImageTensor img = oracles::random_image(32, rng);
    auto views = pyramid_views(img, {1.0});
    REQUIRE(views.size() == 1);
    CHECK(max_abs_diff(views[0], img) <= 1e-12);
}

TEST_CASE("pyramid_views of a constant image stays constant") {
    ImageTensor img = make_image(32, 32, 0.37);
    auto views = pyramid_views(img, {0.5});
    for (std::size_t i = 0; i < views[0].size(); ++i) CHECK(views[0][i] == doctest::Approx(0.37));
}

TEST_CASE("pyramid_views validates scales") {
    Rng rng(23);
    ImageTensor img = oracles::random_image(32, rng);
    CHECK_THROWS_AS(pyramid_views(img, {}), std::invalid_argument);
    CHECK_THROWS_AS(pyramid_views(img, {1.5}), std::invalid_argument);
    CHECK_THROWS_AS(pyramid_views(img, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(pyramid_views(img, {0.1}, 8), std::invalid_argument); // 3px < min 8
}

TEST_CASE("backbone weights round-trip through the container format") {
    Rng rng(31);
    Net a(BackboneArch::Tiny, 77);

    io::Container c;
    c.config_echo = "tiny";
    for (const auto& b : a.store.blocks()) {
        io::NamedArray arr;
        arr.name = b.name;
        arr.values = Tensor(b.dims);
        auto src = a.store.view(b);
        std::copy(src.begin(), src.end(), arr.values.data());
        c.arrays.push_back(std::move(arr));
    }
    std::string path = "/tmp/dra_test_backbone.draw";
    io::write_container(path, c);
    io::Container back = io::read_container(path);
    CHECK(back.config_echo == "tiny");
    REQUIRE(back.arrays.size() == c.arrays.size());

    Net b(BackboneArch::Tiny, 99); // different init
    for (const auto& blk : b.store.blocks()) {
        const Tensor* src = back.find(blk.name);
        REQUIRE(src != nullptr);
        auto dst = b.store.view(blk);
        std::copy(src->data(), src->data() + src->size(), dst.begin());
    }
    ImageTensor img = oracles::random_image(32, rng);
    CHECK(max_abs_diff(a.backbone.features(img, a.store), b.backbone.features(img, b.store)) ==
          0.0);
}
