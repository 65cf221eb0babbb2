#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dra/rng.hpp"

namespace dra {

struct SampleRef {
    std::string id;            // unique within a catalog; relative path for file-backed data
    std::string path;          // absolute or root-relative file path; empty for in-memory
    std::string anomaly_class; // empty for normal samples

    bool operator==(const SampleRef&) const = default;
};

// Catalog of one dataset: normal ids (pre-split or pooled) plus anomalies
// grouped by class. Immutable after construction.
struct DatasetCatalog {
    std::string name;
    std::string root; // file root, empty for in-memory catalogs
    bool presplit_normals = false;
    std::vector<SampleRef> normal_train; // when presplit
    std::vector<SampleRef> normal_test;  // when presplit
    std::vector<SampleRef> normal_pool;  // when not presplit
    std::map<std::string, std::vector<SampleRef>> anomalies;

    std::size_t anomaly_count() const;
    std::vector<std::string> class_names() const;
    std::vector<std::string> all_ids() const;
};

struct SplitResult {
    std::vector<SampleRef> train_normals;
    std::vector<SampleRef> test_normals;
    std::vector<SampleRef> train_anomalies;
    std::vector<SampleRef> test_anomalies;
    // protocol metadata
    std::string protocol; // "general" or "hard"
    std::size_t shots = 0;
    std::string seen_class;      // hard setting only
    bool degenerate_test = false; // shots consumed every anomaly
};

// Disjoint random split of the normal samples with |train|/|total| ~ ratio
// (floor). Pre-split catalogs are returned unchanged regardless of ratio.
std::pair<std::vector<SampleRef>, std::vector<SampleRef>> split_normals(
    const DatasetCatalog& catalog, double ratio, Rng& rng);

// General setting: `shots` anomalies drawn uniformly from the union of all
// classes and removed from the test pool.
SplitResult sample_general(const DatasetCatalog& catalog, std::size_t shots, Rng& rng,
                           double normal_ratio = 0.75);

// Hard setting: anomalies drawn from seen_class only; the entire class is
// removed from the test set. Requires at least two anomaly classes.
SplitResult sample_hard(const DatasetCatalog& catalog, std::size_t shots,
                        const std::string& seen_class, Rng& rng, double normal_ratio = 0.75);

// One-shot split nested inside a ten-shot split: the single training anomaly
// comes from the parent's ten and the test sets are copied id-exactly.
SplitResult nest_one_from_ten(const SplitResult& ten_split, Rng& rng);

// MVTec-style directory layout: root/train/good, root/test/good,
// root/test/<class>. Unreadable files are skipped with a warning on stderr.
DatasetCatalog ingest_directory(const std::string& root);

// Catalog manifest: TSV with columns id, path, role, class.
void export_manifest(const DatasetCatalog& catalog, const std::string& path);
DatasetCatalog import_manifest(const std::string& path);

// ---- synthetic desk-scale data ----------------------------------------------

struct SynthSpec {
    std::size_t image_size = 32;
    std::size_t normal_train = 200;
    std::size_t normal_test = 66;
    std::vector<std::string> classes = {"blob", "scratch", "checker"};
    std::size_t per_class = 40;
    std::uint64_t seed = 0;
    std::string out_dir;
};

// Renders the dataset into out_dir with the MVTec-style layout, writes a
// recipes.tsv with per-image defect parameters, and returns the catalog.
// Byte-identical output for identical specs.
DatasetCatalog synth_generate(const SynthSpec& spec);

} // namespace dra
