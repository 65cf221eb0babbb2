#include "dra/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef DRA_WITH_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#endif

namespace dra::io {

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
    if (s.size() < suf.size()) return false;
    std::string tail = s.substr(s.size() - suf.size());
    std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
    return tail == suf;
}

std::uint8_t quantize(double v) {
    double q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(q);
}

} // namespace

void save_ppm(const std::string& path, const ImageTensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("save_ppm expects [3,h,w]");
    std::size_t h = img.dim(1), w = img.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(3 * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) row[3 * x + c] = quantize(img.at(c, y, x));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

ImageTensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error(path + ": not a P6 PPM file");
    // Skip whitespace/comments between header tokens.
    auto next_int = [&]() {
        int ch;
        while ((ch = in.peek()) != EOF) {
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        std::size_t v;
        in >> v;
        return v;
    };
    std::size_t w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw std::runtime_error(path + ": only 8-bit PPM supported");
    in.get(); // single whitespace after maxval
    std::vector<std::uint8_t> buf(3 * h * w);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw std::runtime_error(path + ": truncated PPM data");
    ImageTensor img({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<double>(buf[(y * w + x) * 3 + c]) / 255.0;
    return img;
}

ImageTensor load_image(const std::string& path) {
    if (has_suffix(path, ".ppm")) return load_ppm(path);
#ifdef DRA_WITH_OPENCV
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot decode image " + path);
    ImageTensor img({3, static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols)});
    for (int y = 0; y < m.rows; ++y) {
        const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV decodes BGR
            img.at(0, y, x) = static_cast<double>(row[x][2]) / 255.0;
            img.at(1, y, x) = static_cast<double>(row[x][1]) / 255.0;
            img.at(2, y, x) = static_cast<double>(row[x][0]) / 255.0;
        }
    }
    return img;
#else
    throw std::runtime_error("cannot load " + path + ": built without OpenCV, use .ppm inputs");
#endif
}

// ---- weight container -------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'R', 'A', 'W'};

class Hasher {
public:
    void update(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 1099511628211ull;
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ull;
};

template <typename T>
void put(std::ostream& out, Hasher& hash, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    hash.update(&v, sizeof(T));
}

void put_bytes(std::ostream& out, Hasher& hash, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    hash.update(p, n);
}

template <typename T>
T get(std::istream& in, Hasher& hash) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("corrupt container: truncated");
    hash.update(&v, sizeof(T));
    return v;
}

void get_bytes(std::istream& in, Hasher& hash, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw std::runtime_error("corrupt container: truncated");
    hash.update(p, n);
}

} // namespace

const Tensor* Container::find(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return &a.values;
    return nullptr;
}

void write_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, 4);
    Hasher hash;
    put<std::uint32_t>(out, hash, c.version);
    put<std::uint64_t>(out, hash, c.config_echo.size());
    put_bytes(out, hash, c.config_echo.data(), c.config_echo.size());
    put<std::uint32_t>(out, hash, static_cast<std::uint32_t>(c.arrays.size()));
    for (const NamedArray& a : c.arrays) {
        put<std::uint32_t>(out, hash, static_cast<std::uint32_t>(a.name.size()));
        put_bytes(out, hash, a.name.data(), a.name.size());
        put<std::uint32_t>(out, hash, static_cast<std::uint32_t>(a.values.ndim()));
        for (std::size_t d : a.values.dims()) put<std::uint64_t>(out, hash, d);
        put_bytes(out, hash, a.values.data(), a.values.size() * sizeof(double));
    }
    std::uint64_t sum = hash.value();
    out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    if (!out) throw std::runtime_error("short write to " + path);
}

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a DRA weight container");
    Hasher hash;
    Container c;
    c.version = get<std::uint32_t>(in, hash);
    if (c.version != kContainerVersion)
        throw std::runtime_error(path + ": incompatible container version " +
                                 std::to_string(c.version) + " (expected " +
                                 std::to_string(kContainerVersion) + ")");
    std::uint64_t cfg_len = get<std::uint64_t>(in, hash);
    c.config_echo.resize(cfg_len);
    get_bytes(in, hash, c.config_echo.data(), cfg_len);
    std::uint32_t n = get<std::uint32_t>(in, hash);
    c.arrays.resize(n);
    for (NamedArray& a : c.arrays) {
        std::uint32_t name_len = get<std::uint32_t>(in, hash);
        a.name.resize(name_len);
        get_bytes(in, hash, a.name.data(), name_len);
        std::uint32_t ndim = get<std::uint32_t>(in, hash);
        std::vector<std::size_t> dims(ndim);
        for (std::uint32_t i = 0; i < ndim; ++i)
            dims[i] = static_cast<std::size_t>(get<std::uint64_t>(in, hash));
        a.values = Tensor(dims);
        get_bytes(in, hash, a.values.data(), a.values.size() * sizeof(double));
    }
    std::uint64_t expect = hash.value();
    std::uint64_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!in || stored != expect)
        throw std::runtime_error(path + ": corrupt container (checksum mismatch)");
    return c;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("short write to " + path);
}

} // namespace dra::io
