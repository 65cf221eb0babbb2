#include "dra/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dra/io.hpp"

namespace fs = std::filesystem;

namespace dra {

std::size_t DatasetCatalog::anomaly_count() const {
    std::size_t n = 0;
    for (const auto& [cls, v] : anomalies) n += v.size();
    return n;
}

std::vector<std::string> DatasetCatalog::class_names() const {
    std::vector<std::string> names;
    for (const auto& [cls, v] : anomalies) names.push_back(cls);
    return names;
}

std::vector<std::string> DatasetCatalog::all_ids() const {
    std::vector<std::string> ids;
    for (const auto& v : {normal_train, normal_test, normal_pool})
        for (const SampleRef& s : v) ids.push_back(s.id);
    for (const auto& [cls, v] : anomalies)
        for (const SampleRef& s : v) ids.push_back(s.id);
    return ids;
}

namespace {

std::vector<SampleRef> sorted_by_id(std::vector<SampleRef> v) {
    std::sort(v.begin(), v.end(),
              [](const SampleRef& a, const SampleRef& b) { return a.id < b.id; });
    return v;
}

} // namespace

std::pair<std::vector<SampleRef>, std::vector<SampleRef>> split_normals(
    const DatasetCatalog& catalog, double ratio, Rng& rng) {
    if (catalog.presplit_normals) {
        // Original split honored; the ratio does not apply.
        return {catalog.normal_train, catalog.normal_test};
    }
    if (!(ratio > 0.0) || !(ratio < 1.0))
        throw std::invalid_argument("normal split ratio must lie in (0,1)");
    if (catalog.normal_pool.size() < 2)
        throw std::invalid_argument("need at least 2 normal samples to split");
    std::vector<SampleRef> pool = sorted_by_id(catalog.normal_pool);
    shuffle(pool, rng);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(pool.size())));
    n_train = std::max<std::size_t>(1, std::min(n_train, pool.size() - 1));
    std::vector<SampleRef> train(pool.begin(), pool.begin() + n_train);
    std::vector<SampleRef> test(pool.begin() + n_train, pool.end());
    return {sorted_by_id(std::move(train)), sorted_by_id(std::move(test))};
}

SplitResult sample_general(const DatasetCatalog& catalog, std::size_t shots, Rng& rng,
                           double normal_ratio) {
    if (shots == 0) throw std::invalid_argument("shots must be >= 1");
    std::size_t total = catalog.anomaly_count();
    if (shots > total)
        throw std::invalid_argument("requested " + std::to_string(shots) + " anomaly examples but only " +
                                    std::to_string(total) + " exist");

    SplitResult out;
    out.protocol = "general";
    out.shots = shots;
    std::tie(out.train_normals, out.test_normals) = split_normals(catalog, normal_ratio, rng);

    std::vector<SampleRef> pool;
    for (const auto& [cls, v] : catalog.anomalies)
        for (const SampleRef& s : v) pool.push_back(s);
    pool = sorted_by_id(std::move(pool));
    shuffle(pool, rng);
    out.train_anomalies.assign(pool.begin(), pool.begin() + shots);
    out.test_anomalies.assign(pool.begin() + shots, pool.end());
    out.train_anomalies = sorted_by_id(std::move(out.train_anomalies));
    out.test_anomalies = sorted_by_id(std::move(out.test_anomalies));
    if (out.test_anomalies.empty()) {
        out.degenerate_test = true;
        std::cerr << "warning: all anomalies consumed by training split; test set has no anomalies\n";
    }
    return out;
}

SplitResult sample_hard(const DatasetCatalog& catalog, std::size_t shots,
                        const std::string& seen_class, Rng& rng, double normal_ratio) {
    if (catalog.anomalies.size() < 2)
        throw std::invalid_argument(
            "hard setting needs at least two anomaly classes (dataset has " +
            std::to_string(catalog.anomalies.size()) + ")");
    auto it = catalog.anomalies.find(seen_class);
    if (it == catalog.anomalies.end())
        throw std::invalid_argument("seen class '" + seen_class + "' not in catalog");
    if (it->second.size() < shots)
        throw std::invalid_argument("seen class '" + seen_class + "' has only " +
                                    std::to_string(it->second.size()) + " samples, need " +
                                    std::to_string(shots));

    SplitResult out;
    out.protocol = "hard";
    out.shots = shots;
    out.seen_class = seen_class;
    std::tie(out.train_normals, out.test_normals) = split_normals(catalog, normal_ratio, rng);

    std::vector<SampleRef> seen_pool = sorted_by_id(it->second);
    shuffle(seen_pool, rng);
    out.train_anomalies.assign(seen_pool.begin(), seen_pool.begin() + shots);
    out.train_anomalies = sorted_by_id(std::move(out.train_anomalies));
    // The entire seen class is removed from the test set.
    for (const auto& [cls, v] : catalog.anomalies) {
        if (cls == seen_class) continue;
        for (const SampleRef& s : v) out.test_anomalies.push_back(s);
    }
    out.test_anomalies = sorted_by_id(std::move(out.test_anomalies));
    return out;
}

SplitResult nest_one_from_ten(const SplitResult& ten_split, Rng& rng) {
    if (ten_split.train_anomalies.size() != 10)
        throw std::invalid_argument("nest_one_from_ten expects a ten-shot split, got " +
                                    std::to_string(ten_split.train_anomalies.size()));
    SplitResult out = ten_split;
    out.shots = 1;
    std::size_t pick = static_cast<std::size_t>(uniform_int(rng, 0, 9));
    out.train_anomalies = {ten_split.train_anomalies[pick]};
    return out;
}

// ---- ingestion ---------------------------------------------------------------

namespace {

bool looks_like_image(const fs::path& p) {
    static const std::set<std::string> exts = {".ppm", ".png", ".jpg", ".jpeg", ".bmp",
                                               ".tif", ".tiff"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), ::tolower);
    return exts.count(e) > 0;
}

std::vector<SampleRef> scan_dir(const fs::path& dir, const fs::path& root,
                                const std::string& cls) {
    std::vector<SampleRef> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
        if (!looks_like_image(f)) continue;
        std::error_code ec;
        auto size = fs::file_size(f, ec);
        if (ec || size == 0) {
            std::cerr << "warning: skipping unreadable image " << f.string() << "\n";
            continue;
        }
        SampleRef s;
        s.id = fs::relative(f, root).generic_string();
        s.path = f.string();
        s.anomaly_class = cls;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

DatasetCatalog ingest_directory(const std::string& root) {
    fs::path r(root);
    if (!fs::is_directory(r / "train" / "good"))
        throw std::invalid_argument("dataset layout error: missing " + (r / "train" / "good").string());
    DatasetCatalog cat;
    cat.name = r.filename().string();
    cat.root = root;
    cat.presplit_normals = true;
    cat.normal_train = scan_dir(r / "train" / "good", r, "");
    if (fs::is_directory(r / "test" / "good")) cat.normal_test = scan_dir(r / "test" / "good", r, "");

    if (fs::is_directory(r / "test")) {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(r / "test"))
            if (e.is_directory() && e.path().filename() != "good") dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const fs::path& d : dirs) {
            std::string cls = d.filename().string();
            std::vector<SampleRef> samples = scan_dir(d, r, cls);
            if (samples.empty()) {
                std::cerr << "warning: anomaly class directory " << d.string()
                          << " has no readable images; class omitted\n";
                continue;
            }
            cat.anomalies[cls] = std::move(samples);
        }
    }
    return cat;
}

void export_manifest(const DatasetCatalog& catalog, const std::string& path) {
    std::ostringstream os;
    os << "# dra-catalog v1\tname=" << catalog.name
       << "\tpresplit=" << (catalog.presplit_normals ? 1 : 0) << "\n";
    os << "id\tpath\trole\tclass\n";
    // Paths under the catalog root are stored relative so the tree can move.
    auto rel = [&](const std::string& p) -> std::string {
        if (!catalog.root.empty()) {
            std::error_code ec;
            fs::path r = fs::relative(p, catalog.root, ec);
            if (!ec && !r.empty() && r.generic_string().rfind("..", 0) != 0)
                return r.generic_string();
        }
        return p;
    };
    auto emit = [&](const std::vector<SampleRef>& v, const char* role) {
        for (const SampleRef& s : v)
            os << s.id << "\t" << rel(s.path) << "\t" << role << "\t"
               << (s.anomaly_class.empty() ? "-" : s.anomaly_class) << "\n";
    };
    emit(catalog.normal_train, "normal_train");
    emit(catalog.normal_test, "normal_test");
    emit(catalog.normal_pool, "normal");
    for (const auto& [cls, v] : catalog.anomalies) emit(v, "anomaly");
    io::write_text_file(path, os.str());
}

DatasetCatalog import_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest " + path);
    DatasetCatalog cat;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# dra-catalog v1", 0) != 0)
        throw std::runtime_error(path + ": not a dra catalog manifest");
    {
        std::istringstream hs(line);
        std::string tok;
        while (std::getline(hs, tok, '\t')) {
            if (tok.rfind("name=", 0) == 0) cat.name = tok.substr(5);
            if (tok.rfind("presplit=", 0) == 0) cat.presplit_normals = tok.substr(9) == "1";
        }
    }
    cat.root = fs::path(path).parent_path().string();
    std::getline(in, line); // column header
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        SampleRef s;
        std::string role, cls;
        if (!std::getline(ls, s.id, '\t') || !std::getline(ls, s.path, '\t') ||
            !std::getline(ls, role, '\t') || !std::getline(ls, cls, '\t'))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed manifest row");
        if (!s.path.empty() && fs::path(s.path).is_relative())
            s.path = (fs::path(cat.root) / s.path).string();
        if (cls != "-") s.anomaly_class = cls;
        if (role == "normal_train") cat.normal_train.push_back(std::move(s));
        else if (role == "normal_test") cat.normal_test.push_back(std::move(s));
        else if (role == "normal") cat.normal_pool.push_back(std::move(s));
        else if (role == "anomaly") cat.anomalies[cls].push_back(std::move(s));
        else throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown role " + role);
    }
    return cat;
}

// ---- synthetic data ------------------------------------------------------------

namespace {

struct Recipe {
    std::string id;
    std::string role;
    std::string cls;
    std::string params;
};

// Dataset-wide texture style, like a single inspected material: all normal
// images share colors, wave frequencies and amplitudes; individual images
// vary only in phase and pixel noise. Local edits are then out of
// distribution rather than lost in cross-image variation.
struct SynthStyle {
    double base[3];
    double amp[3];
    double fx, fy;   // coarse wave, wavelength above the patch scale
    double fx2, fy2; // fine detail
};

SynthStyle derive_style(std::uint64_t seed) {
    Rng rng = make_stream(seed, "style");
    SynthStyle s{};
    for (std::size_t c = 0; c < 3; ++c) {
        s.base[c] = uniform_real(rng, 0.4, 0.6);
        s.amp[c] = uniform_real(rng, 0.22, 0.30);
    }
    s.fx = uniform_real(rng, 1.0, 2.5);
    s.fy = uniform_real(rng, 1.0, 2.5);
    s.fx2 = uniform_real(rng, 5.0, 9.0);
    s.fy2 = uniform_real(rng, 5.0, 9.0);
    return s;
}

ImageTensor render_background(std::size_t size, Rng& rng, const SynthStyle& s) {
    ImageTensor img({3, size, size});
    double phase = uniform_real(rng, 0.0, 2.0 * M_PI);
    double phase2 = uniform_real(rng, 0.0, 2.0 * M_PI);
    double inv = 1.0 / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double wave = std::sin(2.0 * M_PI * (s.fx * x + s.fy * y) * inv + phase);
            double fine = 0.04 * std::sin(2.0 * M_PI * (s.fx2 * x + s.fy2 * y) * inv + phase2);
            for (std::size_t c = 0; c < 3; ++c) {
                double v = s.base[c] + s.amp[c] * wave + fine + uniform_real(rng, -0.02, 0.02);
                img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    return img;
}

std::string render_blob(ImageTensor& img, Rng& rng) {
    std::size_t size = img.dim(1);
    double scale = static_cast<double>(size) / 32.0;
    double r = uniform_real(rng, 3.0, 6.0) * scale;
    double margin = r + 1.0;
    double cy = uniform_real(rng, margin, static_cast<double>(size) - margin);
    double cx = uniform_real(rng, margin, static_cast<double>(size) - margin);
    double col[3] = {uniform_real(rng, 0.75, 1.0), uniform_real(rng, 0.0, 0.25),
                     uniform_real(rng, 0.0, 0.25)};
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= r * r)
                for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
    std::ostringstream os;
    os << "kind=blob;r=" << r << ";cy=" << cy << ";cx=" << cx << ";red=" << col[0];
    return os.str();
}

std::string render_scratch(ImageTensor& img, Rng& rng) {
    std::size_t size = img.dim(1);
    double theta = uniform_real(rng, 0.0, M_PI);
    double nx = std::sin(theta), ny = std::cos(theta); // line normal
    double py = uniform_real(rng, 4.0, static_cast<double>(size) - 4.0);
    double px = uniform_real(rng, 4.0, static_cast<double>(size) - 4.0);
    double thick = uniform_real(rng, 1.0, 2.0) * static_cast<double>(size) / 32.0;
    double col[3] = {uniform_real(rng, 0.0, 0.15), uniform_real(rng, 0.0, 0.15),
                     uniform_real(rng, 0.0, 0.15)};
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double d = std::abs((static_cast<double>(x) - px) * nx +
                                (static_cast<double>(y) - py) * ny);
            if (d <= thick * 0.5 + 0.25)
                for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
    std::ostringstream os;
    os << "kind=scratch;theta=" << theta << ";thick=" << thick << ";dark=" << col[0];
    return os.str();
}

std::string render_checker(ImageTensor& img, Rng& rng) {
    std::size_t size = img.dim(1);
    double scale = static_cast<double>(size) / 32.0;
    std::size_t k = static_cast<std::size_t>(
        std::lround(static_cast<double>(uniform_int(rng, 6, 10)) * scale));
    std::size_t cell = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(2.0 * scale)));
    std::size_t top = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(size - k - 1)));
    std::size_t left = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(size - k - 1)));
    double c1[3] = {uniform_real(rng, 0.85, 1.0), uniform_real(rng, 0.75, 0.9),
                    uniform_real(rng, 0.05, 0.2)};
    double c2[3] = {uniform_real(rng, 0.05, 0.2), uniform_real(rng, 0.15, 0.3),
                    uniform_real(rng, 0.85, 1.0)};
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
            bool odd = ((y / cell) + (x / cell)) % 2 == 1;
            const double* col = odd ? c2 : c1;
            for (std::size_t c = 0; c < 3; ++c) img.at(c, top + y, left + x) = col[c];
        }
    std::ostringstream os;
    os << "kind=checker;k=" << k << ";cell=" << cell << ";top=" << top << ";left=" << left;
    return os.str();
}

std::string render_defect(const std::string& cls, ImageTensor& img, Rng& rng) {
    if (cls == "blob") return render_blob(img, rng);
    if (cls == "scratch") return render_scratch(img, rng);
    if (cls == "checker") return render_checker(img, rng);
    throw std::invalid_argument("unknown synthetic defect class '" + cls +
                                "' (supported: blob, scratch, checker)");
}

} // namespace

DatasetCatalog synth_generate(const SynthSpec& spec) {
    if (spec.classes.empty()) throw std::invalid_argument("synth_generate: need >= 1 anomaly class");
    if (spec.image_size < 16) throw std::invalid_argument("synth_generate: image_size must be >= 16");
    if (spec.out_dir.empty()) throw std::invalid_argument("synth_generate: out_dir required");

    fs::create_directories(fs::path(spec.out_dir) / "train" / "good");
    fs::create_directories(fs::path(spec.out_dir) / "test" / "good");
    for (const std::string& cls : spec.classes)
        fs::create_directories(fs::path(spec.out_dir) / "test" / cls);

    DatasetCatalog cat;
    cat.name = fs::path(spec.out_dir).filename().string();
    cat.root = spec.out_dir;
    cat.presplit_normals = true;

    std::vector<Recipe> recipes;
    char buf[16];
    SynthStyle style = derive_style(spec.seed);

    auto emit = [&](const std::string& rel, const std::string& role, const std::string& cls) {
        // One independent stream per image id: generation order never matters.
        Rng rng = make_stream(spec.seed, rel);
        ImageTensor img = render_background(spec.image_size, rng, style);
        std::string params = "kind=background";
        if (!cls.empty()) params = render_defect(cls, img, rng);
        fs::path full = fs::path(spec.out_dir) / rel;
        io::save_ppm(full.string(), img);
        SampleRef s{rel, full.string(), cls};
        recipes.push_back({rel, role, cls.empty() ? "-" : cls, params});
        return s;
    };

    for (std::size_t i = 0; i < spec.normal_train; ++i) {
        std::snprintf(buf, sizeof buf, "%05zu", i);
        cat.normal_train.push_back(emit(std::string("train/good/") + buf + ".ppm", "normal_train", ""));
    }
    for (std::size_t i = 0; i < spec.normal_test; ++i) {
        std::snprintf(buf, sizeof buf, "%05zu", i);
        cat.normal_test.push_back(emit(std::string("test/good/") + buf + ".ppm", "normal_test", ""));
    }
    for (const std::string& cls : spec.classes) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            std::snprintf(buf, sizeof buf, "%05zu", i);
            cat.anomalies[cls].push_back(
                emit("test/" + cls + "/" + buf + ".ppm", "anomaly", cls));
        }
    }

    std::ostringstream os;
    os << "id\trole\tclass\trecipe\n";
    for (const Recipe& r : recipes)
        os << r.id << "\t" << r.role << "\t" << r.cls << "\t" << r.params << "\n";
    io::write_text_file((fs::path(spec.out_dir) / "recipes.tsv").string(), os.str());
    export_manifest(cat, (fs::path(spec.out_dir) / "catalog.tsv").string());
    return cat;
}

} // namespace dra
