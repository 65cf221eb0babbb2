#include "dra/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dra/featurenet.hpp"
#include "dra/heads.hpp"
#include "dra/io.hpp"
#include "dra/losses.hpp"
#include "dra/pseudogen.hpp"
#include "dra/rng.hpp"

namespace dra {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
    throw std::runtime_error("config error at " + origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, const std::string& origin, std::size_t line) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail(origin, line, "expected a number, got '" + v + "'");
    }
}

std::size_t parse_size(const std::string& v, const std::string& origin, std::size_t line) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        fail(origin, line, "expected a non-negative integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& origin, std::size_t line) {
    try {
        std::size_t pos = 0;
        unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        fail(origin, line, "expected an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& origin, std::size_t line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(origin, line, "expected a boolean, got '" + v + "'");
}

std::vector<double> parse_scales(const std::string& v, const std::string& origin,
                                 std::size_t line) {
    std::vector<double> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(parse_double(tok, origin, line));
    }
    if (out.empty()) fail(origin, line, "pyramid_scales must list at least one scale");
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void ExperimentConfig::set(const std::string& section, const std::string& key,
                           const std::string& value, const std::string& origin,
                           std::size_t line) {
    if (section == "data") {
        if (key == "dataset_root") data.dataset_root = value;
        else if (key == "dataset_name") data.dataset_name = value;
        else if (key == "input_size") data.input_size = parse_size(value, origin, line);
        else fail(origin, line, "unknown key '" + key + "' in [data]");
    } else if (section == "model") {
        if (key == "backbone") model.backbone = value;
        else if (key == "weights") model.weights = value;
        else if (key == "imagenet_normalization") model.imagenet_normalization = parse_bool(value, origin, line);
        else if (key == "freeze_backbone") model.freeze_backbone = parse_bool(value, origin, line);
        else if (key == "pyramid_scales") model.pyramid_scales = parse_scales(value, origin, line);
        else if (key == "k_fraction") model.k_fraction = parse_double(value, origin, line);
        else if (key == "n_reference") model.n_reference = parse_size(value, origin, line);
        else if (key == "mix_reference") model.mix_reference = parse_bool(value, origin, line);
        else if (key == "preset") model.preset = value;
        else fail(origin, line, "unknown key '" + key + "' in [model]");
    } else if (section == "train") {
        if (key == "epochs") train.epochs = parse_size(value, origin, line);
        else if (key == "iterations_per_epoch") train.iterations_per_epoch = parse_size(value, origin, line);
        else if (key == "batch_size") train.batch_size = parse_size(value, origin, line);
        else if (key == "learning_rate") train.learning_rate = parse_double(value, origin, line);
        else if (key == "weight_decay") train.weight_decay = parse_double(value, origin, line);
        else if (key == "loss") train.loss = value;
        else if (key == "margin_a") train.margin_a = parse_double(value, origin, line);
        else if (key == "focal_gamma") train.focal_gamma = parse_double(value, origin, line);
        else if (key == "focal_alpha") train.focal_alpha = parse_double(value, origin, line);
        else if (key == "prior_samples") train.prior_samples = parse_size(value, origin, line);
        else if (key == "freeze_prior") train.freeze_prior = parse_bool(value, origin, line);
        else if (key == "pseudo_source") train.pseudo_source = value;
        else if (key == "pool_path") train.pool_path = value;
        else if (key == "exclusion_path") train.exclusion_path = value;
        else if (key == "seed") train.seed = parse_u64(value, origin, line);
        else if (key == "grad_clip") train.grad_clip = parse_double(value, origin, line);
        else if (key == "threads") train.threads = parse_size(value, origin, line);
        else fail(origin, line, "unknown key '" + key + "' in [train]");
    } else if (section == "protocol") {
        if (key == "protocol") protocol.protocol = value;
        else if (key == "shots") protocol.shots = parse_size(value, origin, line);
        else if (key == "seen_class") protocol.seen_class = value;
        else if (key == "normal_split_ratio") protocol.normal_split_ratio = parse_double(value, origin, line);
        else fail(origin, line, "unknown key '" + key + "' in [protocol]");
    } else if (section == "eval") {
        if (key == "out_dir") eval.out_dir = value;
        else if (key == "replications") eval.replications = parse_size(value, origin, line);
        else if (key == "plot") eval.plot = parse_bool(value, origin, line);
        else fail(origin, line, "unknown key '" + key + "' in [eval]");
    } else {
        fail(origin, line, "unknown section [" + section + "]");
    }
}

ExperimentConfig ExperimentConfig::from_ini_text(const std::string& text,
                                                 const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(origin, lineno, "unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section.empty()) fail(origin, lineno, "key outside of any [section]");
        cfg.set(section, key, value, origin, lineno);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_ini_file(const std::string& path) {
    return from_ini_text(io::read_text_file(path), path);
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    os << "[data]\n";
    os << "dataset_root = " << data.dataset_root << "\n";
    os << "dataset_name = " << data.dataset_name << "\n";
    os << "input_size = " << data.input_size << "\n";
    os << "[model]\n";
    os << "backbone = " << model.backbone << "\n";
    os << "weights = " << model.weights << "\n";
    os << "imagenet_normalization = " << (model.imagenet_normalization ? "true" : "false") << "\n";
    os << "freeze_backbone = " << (model.freeze_backbone ? "true" : "false") << "\n";
    os << "pyramid_scales = ";
    for (std::size_t i = 0; i < model.pyramid_scales.size(); ++i)
        os << (i ? "," : "") << fmt_double(model.pyramid_scales[i]);
    os << "\n";
    os << "k_fraction = " << fmt_double(model.k_fraction) << "\n";
    os << "n_reference = " << model.n_reference << "\n";
    os << "mix_reference = " << (model.mix_reference ? "true" : "false") << "\n";
    os << "preset = " << model.preset << "\n";
    os << "[train]\n";
    os << "epochs = " << train.epochs << "\n";
    os << "iterations_per_epoch = " << train.iterations_per_epoch << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "learning_rate = " << fmt_double(train.learning_rate) << "\n";
    os << "weight_decay = " << fmt_double(train.weight_decay) << "\n";
    os << "loss = " << train.loss << "\n";
    os << "margin_a = " << fmt_double(train.margin_a) << "\n";
    os << "focal_gamma = " << fmt_double(train.focal_gamma) << "\n";
    os << "focal_alpha = " << fmt_double(train.focal_alpha) << "\n";
    os << "prior_samples = " << train.prior_samples << "\n";
    os << "freeze_prior = " << (train.freeze_prior ? "true" : "false") << "\n";
    os << "pseudo_source = " << train.pseudo_source << "\n";
    os << "pool_path = " << train.pool_path << "\n";
    os << "exclusion_path = " << train.exclusion_path << "\n";
    os << "seed = " << train.seed << "\n";
    os << "grad_clip = " << fmt_double(train.grad_clip) << "\n";
    os << "threads = " << train.threads << "\n";
    os << "[protocol]\n";
    os << "protocol = " << protocol.protocol << "\n";
    os << "shots = " << protocol.shots << "\n";
    os << "seen_class = " << protocol.seen_class << "\n";
    os << "normal_split_ratio = " << fmt_double(protocol.normal_split_ratio) << "\n";
    os << "[eval]\n";
    os << "out_dir = " << eval.out_dir << "\n";
    os << "replications = " << eval.replications << "\n";
    os << "plot = " << (eval.plot ? "true" : "false") << "\n";
    return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }

void ExperimentConfig::validate() const {
    AblationMask::preset(model.preset).validate();
    parse_loss_kind(train.loss);
    parse_pseudo_kind(train.pseudo_source);
    if (protocol.protocol != "general" && protocol.protocol != "hard")
        throw std::runtime_error("protocol must be 'general' or 'hard', got '" +
                                 protocol.protocol + "'");
    if (protocol.protocol == "hard" && protocol.seen_class.empty())
        throw std::runtime_error("hard protocol requires seen_class");
    if (train.batch_size == 0 || train.batch_size % 4 != 0)
        throw std::runtime_error("batch_size must be a positive multiple of 4 "
                                 "(batch composition granularity)");
    if (train.learning_rate < 0.0) throw std::runtime_error("learning_rate must be >= 0");
    if (train.weight_decay < 0.0) throw std::runtime_error("weight_decay must be >= 0");
    if (!(model.k_fraction > 0.0) || model.k_fraction > 1.0)
        throw std::runtime_error("k_fraction must lie in (0,1]");
    if (model.n_reference < 1) throw std::runtime_error("n_reference must be >= 1");
    if (!(train.margin_a > 0.0)) throw std::runtime_error("margin_a must be > 0");
    if (data.input_size == 0) throw std::runtime_error("input_size must be > 0");
    parse_arch(model.backbone);
}

} // namespace dra
