#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dra {

// Experiment configuration, mirroring the [data]/[model]/[train]/[protocol]/
// [eval] sections of the config file. Keys are the CLI flag names with
// dashes replaced by underscores.
struct ExperimentConfig {
    struct Data {
        std::string dataset_root;
        std::string dataset_name; // defaults to the root directory name
        std::size_t input_size = 32;
    } data;

    struct Model {
        std::string backbone = "tiny"; // tiny | resnet18
        std::string weights;           // optional pretrained container
        bool imagenet_normalization = false;
        bool freeze_backbone = false;
        std::vector<double> pyramid_scales = {1.0, 0.5};
        double k_fraction = 0.10;
        std::size_t n_reference = 5;
        bool mix_reference = true; // mix pseudo-abnormal samples into the reference set
        std::string preset = "DRA";
    } model;

    struct Train {
        std::size_t epochs = 30;
        std::size_t iterations_per_epoch = 20;
        std::size_t batch_size = 48;
        double learning_rate = 1e-3;
        double weight_decay = 1e-2;
        std::string loss = "deviation"; // deviation | bce | focal
        double margin_a = 5.0;
        double focal_gamma = 2.0;
        double focal_alpha = 0.25;
        std::size_t prior_samples = 5000;
        bool freeze_prior = false; // freeze mu/sigma after the first draw
        std::string pseudo_source = "cutmix";
        std::string pool_path;
        std::string exclusion_path;
        std::uint64_t seed = 1;
        double grad_clip = 0.0; // 0 disables
        std::size_t threads = 0; // 0 = auto
    } train;

    struct Protocol {
        std::string protocol = "general"; // general | hard
        std::size_t shots = 10;
        std::string seen_class;
        double normal_split_ratio = 0.75;
    } protocol;

    struct Eval {
        std::string out_dir = "runs";
        std::size_t replications = 3;
        bool plot = false;
    } eval;

    // Parses "[section]\nkey = value" text. Errors carry the line number.
    static ExperimentConfig from_ini_text(const std::string& text, const std::string& origin);
    static ExperimentConfig from_ini_file(const std::string& path);

    void set(const std::string& section, const std::string& key, const std::string& value,
             const std::string& origin, std::size_t line);

    // Canonical echo: every field, fixed order, doubles at full precision.
    // Parsing the echo reproduces the config exactly.
    std::string canonical() const;
    std::uint64_t hash() const; // FNV-1a over canonical()

    void validate() const;
};

} // namespace dra
