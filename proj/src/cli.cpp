#include "dra/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dra/eval.hpp"
#include "dra/io.hpp"
#include "dra/selftest.hpp"
#include "dra/trainer.hpp"

namespace fs = std::filesystem;

namespace dra {

namespace {

struct CommonOpts {
    std::string config_file;
    std::string dataset_root;
    std::string out_dir;
    std::string protocol;
    std::string seen_class;
    std::string preset;
    std::string loss;
    std::string pseudo_source;
    std::string backbone;
    std::string weights;
    long long shots = -1;
    long long seed = -1;
    long long epochs = -1;
    long long iterations_per_epoch = -1;
    long long batch_size = -1;
    long long input_size = -1;
    long long n_reference = -1;
    long long threads = -1;
    double learning_rate = -1.0;
    double weight_decay = -1.0;
    double k_fraction = -1.0;
    bool freeze_backbone = false;
    bool plot = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_file, "config file (INI sections: data/model/train/protocol/eval)");
    cmd->add_option("--dataset-root", o.dataset_root, "dataset directory (MVTec-style layout) or catalog .tsv");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--protocol", o.protocol, "general | hard")
        ->check(CLI::IsMember({"general", "hard"}));
    cmd->add_option("--shots", o.shots, "anomaly examples for training (1 or 10)");
    cmd->add_option("--seen-class", o.seen_class, "seen anomaly class (hard setting)");
    cmd->add_option("--seed", o.seed, "experiment seed");
    cmd->add_option("--preset", o.preset, "ablation preset")
        ->check(CLI::IsMember({"DRA1A", "DRA2A", "DRA3Ar", "DRA3An", "DRA"}));
    cmd->add_option("--loss", o.loss, "deviation | bce | focal")
        ->check(CLI::IsMember({"deviation", "bce", "focal"}));
    cmd->add_option("--pseudo-source", o.pseudo_source,
                    "cutmix | cutpaste_scar | cutpaste_mix | outlier_pool");
    cmd->add_option("--backbone", o.backbone, "tiny | resnet18");
    cmd->add_option("--weights", o.weights, "pretrained backbone container");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--iterations-per-epoch", o.iterations_per_epoch, "iterations per epoch");
    cmd->add_option("--batch-size", o.batch_size, "batch size (multiple of 4)");
    cmd->add_option("--input-size", o.input_size, "square input side after resizing");
    cmd->add_option("--n-reference", o.n_reference, "reference set size");
    cmd->add_option("--threads", o.threads, "worker threads (0 = auto)");
    cmd->add_option("--learning-rate", o.learning_rate, "optimizer learning rate");
    cmd->add_option("--weight-decay", o.weight_decay, "optimizer weight decay");
    cmd->add_option("--k-fraction", o.k_fraction, "top-K MIL fraction");
    cmd->add_flag("--freeze-backbone", o.freeze_backbone, "do not update backbone weights");
    cmd->add_flag("--plot", o.plot, "write a score-distribution SVG next to the scores table");
}

ExperimentConfig build_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_file.empty()) cfg = ExperimentConfig::from_ini_file(o.config_file);
    if (!o.dataset_root.empty()) cfg.data.dataset_root = o.dataset_root;
    if (!o.out_dir.empty()) cfg.eval.out_dir = o.out_dir;
    if (!o.protocol.empty()) cfg.protocol.protocol = o.protocol;
    if (!o.seen_class.empty()) cfg.protocol.seen_class = o.seen_class;
    if (!o.preset.empty()) cfg.model.preset = o.preset;
    if (!o.loss.empty()) cfg.train.loss = o.loss;
    if (!o.pseudo_source.empty()) cfg.train.pseudo_source = o.pseudo_source;
    if (!o.backbone.empty()) cfg.model.backbone = o.backbone;
    if (!o.weights.empty()) cfg.model.weights = o.weights;
    if (o.shots >= 0) cfg.protocol.shots = static_cast<std::size_t>(o.shots);
    if (o.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(o.seed);
    if (o.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(o.epochs);
    if (o.iterations_per_epoch >= 0)
        cfg.train.iterations_per_epoch = static_cast<std::size_t>(o.iterations_per_epoch);
    if (o.batch_size >= 0) cfg.train.batch_size = static_cast<std::size_t>(o.batch_size);
    if (o.input_size >= 0) cfg.data.input_size = static_cast<std::size_t>(o.input_size);
    if (o.n_reference >= 0) cfg.model.n_reference = static_cast<std::size_t>(o.n_reference);
    if (o.threads >= 0) cfg.train.threads = static_cast<std::size_t>(o.threads);
    if (o.learning_rate >= 0.0) cfg.train.learning_rate = o.learning_rate;
    if (o.weight_decay >= 0.0) cfg.train.weight_decay = o.weight_decay;
    if (o.k_fraction >= 0.0) cfg.model.k_fraction = o.k_fraction;
    if (o.freeze_backbone) cfg.model.freeze_backbone = true;
    if (o.plot) cfg.eval.plot = true;
    if (cfg.data.dataset_name.empty() && !cfg.data.dataset_root.empty())
        cfg.data.dataset_name = fs::path(cfg.data.dataset_root).filename().string();
    return cfg;
}

DatasetCatalog load_catalog(const ExperimentConfig& cfg) {
    if (cfg.data.dataset_root.empty())
        throw std::runtime_error("no dataset: pass --dataset-root or set [data] dataset_root");
    if (fs::is_regular_file(cfg.data.dataset_root))
        return import_manifest(cfg.data.dataset_root);
    return ingest_directory(cfg.data.dataset_root);
}

std::string run_tag(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << cfg.data.dataset_name << "_" << cfg.protocol.protocol << "_" << cfg.protocol.shots
       << "shot_" << cfg.model.preset << "_seed" << cfg.train.seed;
    return os.str();
}

void append_report(const std::string& path, const RunReport& r) {
    bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + path);
    if (fresh) out << report_table_header();
    out << report_table_row(r);
}

RunReport evaluate_model(const Model& model, const DatasetCatalog& catalog,
                         const std::string& out_dir, bool plot) {
    const ExperimentConfig& cfg = model.config();
    SplitResult split = build_split(catalog, cfg);
    ImageStore store(cfg.data.input_size);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<ScoredExample> scored = score_dataset(model, split, store);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    RunReport report;
    report.dataset = cfg.data.dataset_name;
    report.subset = cfg.protocol.protocol == "hard" ? cfg.protocol.seen_class : "-";
    report.protocol = cfg.protocol.protocol;
    report.shots = cfg.protocol.shots;
    report.preset = cfg.model.preset;
    report.seed = cfg.train.seed;
    report.auc = auc(scored);
    report.seconds = seconds;
    report.config_hash = cfg.hash();

    fs::create_directories(out_dir);
    std::string tag = run_tag(cfg);
    io::write_text_file((fs::path(out_dir) / ("scores_" + tag + ".tsv")).string(),
                        scores_table(scored, model.mask(), cfg.model.pyramid_scales));
    if (plot)
        io::write_text_file((fs::path(out_dir) / ("scores_" + tag + ".svg")).string(),
                            score_histogram_svg(scored));
    append_report((fs::path(out_dir) / "results.tsv").string(), report);
    return report;
}

int cmd_train(const CommonOpts& o) {
    ExperimentConfig cfg = build_config(o);
    cfg.validate();
    DatasetCatalog catalog = load_catalog(cfg);
    SplitResult split = build_split(catalog, cfg);
    ImageStore store(cfg.data.input_size);

    auto t0 = std::chrono::steady_clock::now();
    FitResult result = fit(split, store, cfg);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(cfg.eval.out_dir);
    std::string tag = run_tag(cfg);
    std::string ckpt = (fs::path(cfg.eval.out_dir) / (tag + ".draw")).string();
    checkpoint_save(result.model, ckpt);
    io::write_text_file((fs::path(cfg.eval.out_dir) / ("train_log_" + tag + ".tsv")).string(),
                        format_training_log(result.log));
    std::cout << "trained " << tag << " in " << seconds << "s, checkpoint: " << ckpt << "\n";
    if (!result.log.empty())
        std::cout << "first-epoch loss " << result.log.front().mean_loss << ", last-epoch loss "
                  << result.log.back().mean_loss << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint) {
    if (checkpoint.empty())
        throw std::runtime_error("eval needs --checkpoint <file> (no model to evaluate)");
    if (!fs::exists(checkpoint))
        throw std::runtime_error("missing model: checkpoint '" + checkpoint + "' does not exist");
    Model model = checkpoint_load(checkpoint, o.preset);
    ExperimentConfig cfg = model.config();
    if (!o.dataset_root.empty()) cfg.data.dataset_root = o.dataset_root;
    DatasetCatalog catalog = load_catalog(cfg);
    std::string out_dir = o.out_dir.empty() ? cfg.eval.out_dir : o.out_dir;
    RunReport r = evaluate_model(model, catalog, out_dir, o.plot || cfg.eval.plot);
    std::cout << "auc " << r.auc << " (" << run_tag(model.config()) << ")\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o, std::vector<long long> seeds) {
    ExperimentConfig base = build_config(o);
    if (seeds.empty()) seeds = {1, 2, 3};
    DatasetCatalog catalog = load_catalog(base);
    const char* presets[] = {"DRA1A", "DRA2A", "DRA3Ar", "DRA3An", "DRA"};

    std::vector<RunReport> reports;
    for (long long seed : seeds) {
        for (const char* preset : presets) {
            ExperimentConfig cfg = base;
            cfg.train.seed = static_cast<std::uint64_t>(seed);
            cfg.model.preset = preset;
            cfg.validate();
            SplitResult split = build_split(catalog, cfg); // shared across presets per seed
            ImageStore store(cfg.data.input_size);
            auto t0 = std::chrono::steady_clock::now();
            FitResult result = fit(split, store, cfg);
            double train_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            fs::create_directories(cfg.eval.out_dir);
            std::string tag = run_tag(cfg);
            checkpoint_save(result.model,
                            (fs::path(cfg.eval.out_dir) / (tag + ".draw")).string());
            io::write_text_file(
                (fs::path(cfg.eval.out_dir) / ("train_log_" + tag + ".tsv")).string(),
                format_training_log(result.log));
            RunReport r = evaluate_model(result.model, catalog, cfg.eval.out_dir,
                                         cfg.eval.plot || o.plot);
            std::cout << "preset " << preset << " seed " << seed << ": auc " << r.auc << " ("
                      << train_s << "s train)\n";
            reports.push_back(std::move(r));
        }
    }
    std::vector<GroupSummary> groups = aggregate_runs(reports);
    std::string agg = aggregate_table(groups);
    io::write_text_file((fs::path(base.eval.out_dir) / "aggregate.tsv").string(), agg);
    std::cout << agg;
    return 0;
}

int cmd_synth(const std::string& out_dir, long long seed, long long size, long long normal_train,
              long long normal_test, std::vector<std::string> classes, long long per_class) {
    SynthSpec spec;
    spec.out_dir = out_dir;
    spec.seed = static_cast<std::uint64_t>(seed);
    if (size > 0) spec.image_size = static_cast<std::size_t>(size);
    if (normal_train > 0) spec.normal_train = static_cast<std::size_t>(normal_train);
    if (normal_test > 0) spec.normal_test = static_cast<std::size_t>(normal_test);
    if (!classes.empty()) spec.classes = std::move(classes);
    if (per_class > 0) spec.per_class = static_cast<std::size_t>(per_class);
    DatasetCatalog cat = synth_generate(spec);
    std::cout << "synthetic dataset at " << out_dir << ": " << cat.normal_train.size()
              << " train normals, " << cat.normal_test.size() << " test normals, "
              << cat.anomalies.size() << " anomaly classes x " << spec.per_class << "\n";
    return 0;
}

} // namespace

int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"DRA: open-set supervised anomaly detection (seen / pseudo / latent-residual "
                 "abnormality heads)"};
    app.require_subcommand(1);

    CommonOpts train_o, eval_o, ablate_o;
    std::string checkpoint;
    std::vector<long long> seeds;

    CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
    add_common_flags(train, train_o);

    CLI::App* eval = app.add_subcommand("eval", "score a test split with a trained checkpoint");
    add_common_flags(eval, eval_o);
    eval->add_option("--checkpoint", checkpoint, "trained model container");

    CLI::App* ablate = app.add_subcommand("ablate", "sweep the five head presets over shared splits");
    add_common_flags(ablate, ablate_o);
    ablate->add_option("--seeds", seeds, "seeds to replicate (default 1 2 3)");

    std::string synth_out = "synthetic";
    long long synth_seed = 0, synth_size = 0, synth_ntrain = 0, synth_ntest = 0, synth_per = 0;
    std::vector<std::string> synth_classes;
    CLI::App* synth = app.add_subcommand("synth", "render a synthetic defect dataset");
    synth->add_option("--out-dir", synth_out, "output directory");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--size", synth_size, "image side length (default 32)");
    synth->add_option("--normal-train", synth_ntrain, "training normals (default 200)");
    synth->add_option("--normal-test", synth_ntest, "test normals (default 66)");
    synth->add_option("--classes", synth_classes, "defect classes (blob scratch checker)");
    synth->add_option("--per-class", synth_per, "anomalies per class (default 40)");

    CLI::App* selftest = app.add_subcommand("selftest", "run the oracle/invariant quick suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed()) return cmd_train(train_o);
        if (eval->parsed()) return cmd_eval(eval_o, checkpoint);
        if (ablate->parsed()) return cmd_ablate(ablate_o, seeds);
        if (synth->parsed())
            return cmd_synth(synth_out, synth_seed, synth_size, synth_ntrain, synth_ntest,
                             synth_classes, synth_per);
        if (selftest->parsed()) return run_selftest(std::cout) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace dra
