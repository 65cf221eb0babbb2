#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dra/io.hpp"
#include "dra/protocols.hpp"
#include "oracles.hpp"

using namespace dra;
namespace fs = std::filesystem;

namespace {

DatasetCatalog toy_catalog(std::size_t normals, const std::vector<std::pair<std::string, std::size_t>>& classes) {
    DatasetCatalog cat;
    cat.name = "toy";
    for (std::size_t i = 0; i < normals; ++i)
        cat.normal_pool.push_back({"n" + std::to_string(i), "", ""});
    for (const auto& [cls, count] : classes)
        for (std::size_t i = 0; i < count; ++i)
            cat.anomalies[cls].push_back({cls + "/" + std::to_string(i), "", cls});
    return cat;
}

std::set<std::string> ids_of(const std::vector<SampleRef>& v) {
    std::set<std::string> s;
    for (const SampleRef& r : v) s.insert(r.id);
    return s;
}

} // namespace

TEST_CASE("split_normals") {
    SUBCASE("100 normals at ratio 3/4 give 75 train and 25 test") {
        DatasetCatalog cat = toy_catalog(100, {{"a", 2}, {"b", 2}});
        Rng rng(1);
        auto [train, test] = split_normals(cat, 0.75, rng);
        CHECK(train.size() == 75);
        CHECK(test.size() == 25);
        std::set<std::string> all = ids_of(train);
        for (const SampleRef& t : test) CHECK(all.insert(t.id).second); // disjoint
    }
    SUBCASE("pre-split catalogs are returned unchanged") {
        DatasetCatalog cat;
        cat.presplit_normals = true;
        cat.normal_train = {{"t0", "", ""}, {"t1", "", ""}};
        cat.normal_test = {{"e0", "", ""}};
        Rng rng(2);
        auto [train, test] = split_normals(cat, 0.5, rng);
        CHECK(train.size() == 2);
        CHECK(test.size() == 1);
    }
    SUBCASE("same seed gives the same split") {
        DatasetCatalog cat = toy_catalog(40, {{"a", 2}, {"b", 2}});
        Rng a(7), b(7);
        auto sa = split_normals(cat, 0.75, a);
        auto sb = split_normals(cat, 0.75, b);
        CHECK(ids_of(sa.first) == ids_of(sb.first));
    }
    SUBCASE("fewer than two normals is an error") {
        DatasetCatalog cat = toy_catalog(1, {{"a", 2}, {"b", 2}});
        Rng rng(3);
        CHECK_THROWS_AS(split_normals(cat, 0.75, rng), std::invalid_argument);
    }
}

TEST_CASE("sample_general") {
    DatasetCatalog cat = toy_catalog(40, {{"a", 30}, {"b", 30}, {"c", 30}});
    SUBCASE("draws shots anomalies and removes them from the test pool") {
        Rng rng(4);
        SplitResult s = sample_general(cat, 10, rng);
        CHECK(s.train_anomalies.size() == 10);
        CHECK(s.test_anomalies.size() == 80);
        std::set<std::string> train_ids = ids_of(s.train_anomalies);
        for (const SampleRef& t : s.test_anomalies) CHECK(train_ids.count(t.id) == 0);
    }
    SUBCASE("consuming every anomaly flags a degenerate split") {
        Rng rng(5);
        SplitResult s = sample_general(cat, 90, rng);
        CHECK(s.test_anomalies.empty());
        CHECK(s.degenerate_test);
    }
    SUBCASE("asking for more anomalies than exist is an error") {
        Rng rng(6);
        CHECK_THROWS_AS(sample_general(cat, 91, rng), std::invalid_argument);
    }
}

TEST_CASE("sample_hard") {
    DatasetCatalog cat = toy_catalog(40, {{"a", 30}, {"b", 30}, {"c", 30}});
    SUBCASE("removes the entire seen class from the test set") {
        Rng rng(7);
        SplitResult s = sample_hard(cat, 10, "a", rng);
        CHECK(s.train_anomalies.size() == 10);
        CHECK(s.test_anomalies.size() == 60);
        for (const SampleRef& t : s.test_anomalies) CHECK(t.anomaly_class != "a");
        for (const SampleRef& t : s.train_anomalies) CHECK(t.anomaly_class == "a");
    }
    SUBCASE("one-shot test data matches the ten-shot test data") {
        Rng a(8), b(8);
        SplitResult ten = sample_hard(cat, 10, "b", a);
        SplitResult one = sample_hard(cat, 1, "b", b);
        CHECK(ids_of(one.test_anomalies) == ids_of(ten.test_anomalies));
    }
    SUBCASE("single-class catalogs are not applicable") {
        DatasetCatalog single = toy_catalog(40, {{"a", 30}});
        Rng rng(9);
        CHECK_THROWS_AS(sample_hard(single, 10, "a", rng), std::invalid_argument);
    }
    SUBCASE("unknown seen class is an error") {
        Rng rng(10);
        CHECK_THROWS_AS(sample_hard(cat, 10, "zzz", rng), std::invalid_argument);
    }
}

TEST_CASE("nest_one_from_ten") {
    DatasetCatalog cat = toy_catalog(40, {{"a", 30}, {"b", 30}});
    Rng rng(11);
    SplitResult ten = sample_general(cat, 10, rng);
    SUBCASE("the single anomaly comes from the parent ten, test sets id-exact") {
        Rng nrng(12);
        SplitResult one = nest_one_from_ten(ten, nrng);
        REQUIRE(one.train_anomalies.size() == 1);
        CHECK(ids_of(ten.train_anomalies).count(one.train_anomalies[0].id) == 1);
        CHECK(ids_of(one.test_anomalies) == ids_of(ten.test_anomalies));
        CHECK(ids_of(one.test_normals) == ids_of(ten.test_normals));
        CHECK(one.shots == 1);
    }
    SUBCASE("same seed picks the same example") {
        Rng a(13), b(13);
        CHECK(nest_one_from_ten(ten, a).train_anomalies[0].id ==
              nest_one_from_ten(ten, b).train_anomalies[0].id);
    }
    SUBCASE("wrong shot count is an input error") {
        Rng nrng(14);
        SplitResult five = sample_general(cat, 5, nrng);
        CHECK_THROWS_AS(nest_one_from_ten(five, nrng), std::invalid_argument);
    }
}

TEST_CASE("splits are pure functions of catalog, parameters and seed") {
    DatasetCatalog cat = toy_catalog(30, {{"a", 20}, {"b", 20}});
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        SplitResult s = sample_hard(cat, 10, "a", rng);
        std::string sig;
        for (const SampleRef& r : s.train_anomalies) sig += r.id + "|";
        for (const SampleRef& r : s.train_normals) sig += r.id + "|";
        return sig;
    };
    CHECK(run(42) == run(42));
    CHECK(run(42) != run(43));
}

TEST_CASE("ingest_directory reads the MVTec-style layout") {
    fs::path root = fs::temp_directory_path() / "dra_test_ingest";
    fs::remove_all(root);
    fs::create_directories(root / "train" / "good");
    fs::create_directories(root / "test" / "good");
    fs::create_directories(root / "test" / "holes");
    fs::create_directories(root / "test" / "cuts");
    fs::create_directories(root / "test" / "emptycls");

    ImageTensor img = make_image(16, 16, 0.5);
    int files = 0;
    auto put = [&](const fs::path& dir, int n) {
        for (int i = 0; i < n; ++i) {
            io::save_ppm((dir / (std::to_string(i) + ".ppm")).string(), img);
            ++files;
        }
    };
    put(root / "train" / "good", 4);
    put(root / "test" / "good", 2);
    put(root / "test" / "holes", 3);
    put(root / "test" / "cuts", 2);
    std::ofstream(root / "test" / "cuts" / "empty.ppm"); // unreadable: zero bytes

    DatasetCatalog cat = ingest_directory(root.string());
    CHECK(cat.presplit_normals);
    CHECK(cat.normal_train.size() == 4);
    CHECK(cat.normal_test.size() == 2);
    REQUIRE(cat.anomalies.size() == 2); // empty class omitted
    CHECK(cat.anomalies.at("holes").size() == 3);
    CHECK(cat.anomalies.at("cuts").size() == 2); // zero-byte file skipped
    CHECK(cat.anomaly_count() + cat.normal_train.size() + cat.normal_test.size() ==
          static_cast<std::size_t>(files));

    SUBCASE("missing train/good is a layout error") {
        CHECK_THROWS_AS(ingest_directory((root / "test").string()), std::invalid_argument);
    }

    SUBCASE("manifest round-trip preserves the catalog") {
        fs::path mpath = root / "catalog.tsv";
        export_manifest(cat, mpath.string());
        DatasetCatalog back = import_manifest(mpath.string());
        CHECK(back.presplit_normals == cat.presplit_normals);
        CHECK(ids_of(back.normal_train) == ids_of(cat.normal_train));
        CHECK(ids_of(back.normal_test) == ids_of(cat.normal_test));
        REQUIRE(back.anomalies.size() == cat.anomalies.size());
        for (const auto& [cls, v] : cat.anomalies)
            CHECK(ids_of(back.anomalies.at(cls)) == ids_of(v));
        // paths resolve to readable files
        io::load_image(back.normal_train[0].path);
    }
    fs::remove_all(root);
}

TEST_CASE("synth_generate") {
    fs::path root = fs::temp_directory_path() / "dra_test_synth";
    fs::remove_all(root);
    SynthSpec spec;
    spec.out_dir = root.string();
    spec.seed = 3;
    spec.normal_train = 12;
    spec.normal_test = 5;
    spec.per_class = 4;

    DatasetCatalog cat = synth_generate(spec);
    SUBCASE("catalog counts match the request") {
        CHECK(cat.normal_train.size() == 12);
        CHECK(cat.normal_test.size() == 5);
        REQUIRE(cat.anomalies.size() == 3);
        for (const auto& [cls, v] : cat.anomalies) CHECK(v.size() == 4);
    }
    SUBCASE("images load and are in range") {
        ImageTensor img = io::load_image(cat.anomalies.at("blob")[0].path);
        CHECK(img.dims() == std::vector<std::size_t>({3, 32, 32}));
        check_image(img);
    }
    SUBCASE("same seed renders byte-identical trees") {
        fs::path root2 = fs::temp_directory_path() / "dra_test_synth2";
        fs::remove_all(root2);
        SynthSpec spec2 = spec;
        spec2.out_dir = root2.string();
        synth_generate(spec2);
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (!e.is_regular_file() || e.path().extension() != ".ppm") continue;
            fs::path rel = fs::relative(e.path(), root);
            CHECK(io::read_text_file(e.path().string()) ==
                  io::read_text_file((root2 / rel).string()));
        }
        fs::remove_all(root2);
    }
    SUBCASE("defect recipes use one distinct kind per class") {
        std::string recipes = io::read_text_file((root / "recipes.tsv").string());
        std::istringstream in(recipes);
        std::string line;
        std::getline(in, line); // header
        std::map<std::string, std::set<std::string>> kinds_by_class;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string id, role, cls, recipe;
            std::getline(ls, id, '\t');
            std::getline(ls, role, '\t');
            std::getline(ls, cls, '\t');
            std::getline(ls, recipe, '\t');
            std::string kind = recipe.substr(5, recipe.find(';') - 5);
            kinds_by_class[cls].insert(kind);
        }
        CHECK(kinds_by_class["-"] == std::set<std::string>{"background"});
        CHECK(kinds_by_class["blob"] == std::set<std::string>{"blob"});
        CHECK(kinds_by_class["scratch"] == std::set<std::string>{"scratch"});
        CHECK(kinds_by_class["checker"] == std::set<std::string>{"checker"});
    }
    SUBCASE("fewer than one class is a config error") {
        SynthSpec bad = spec;
        bad.classes.clear();
        CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
    }
    fs::remove_all(root);
}
