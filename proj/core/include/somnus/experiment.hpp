#pragma once

#include <optional>
#include <string>
#include <vector>

#include "somnus/config.hpp"
#include "somnus/model.hpp"
#include "somnus/train.hpp"

namespace somnus {

struct RunArtifacts {
    RunRecord record;
    std::string metrics_path;  // line-delimited JSON events, deterministic
    std::string summary_path;  // final summary JSON, deterministic
    std::string timing_path;   // wall-clock times, intentionally separate
    std::string model_path;    // trained weights
};

// Loads datasets and bundle, builds the graph, trains, and writes all run
// artifacts under cfg.output_dir. The metrics and summary files are pure
// functions of (config, input files); timing lives in its own file.
RunArtifacts run_training(const RunConfig& cfg);

// Graph assembly as run_training performs it, without training. Dataset
// paths are optional; when absent the config's explicit geometry is used.
BlockGraph build_from_config(const RunConfig& cfg, const Dataset* train_set);

void save_model(const BlockGraph& graph, const RunConfig& cfg, const std::string& path);

struct LoadedModel {
    RunConfig cfg;
    BundlePtr bundle;
    BlockGraph graph;
};
LoadedModel load_model(const std::string& path);

enum class AblationSuite { block_count, chain_kind, bundle_kind, freeze };

AblationSuite ablation_suite_from_string(const std::string& s);

struct AblationCell {
    std::string name;
    std::string config_hash;
    bool failed = false;
    std::string error;
    RunRecord record;
};

// Runs the suite's grid of configurations derived from `base`, one output
// directory per cell under out_dir. A failing cell is recorded and the grid
// continues. Cells run in parallel threads only when SOMNUS_THREADS > 1;
// results are keyed by cell, so scheduling never changes the table.
std::vector<AblationCell> run_ablation(AblationSuite suite, const RunConfig& base,
                                       const std::string& out_dir);

std::string ablation_table_json(const std::vector<AblationCell>& cells);

// Accuracy / #Params / FLOPs rows in the style of a model-comparison table.
std::string comparison_table_json(const std::vector<RunRecord>& records);

}  // namespace somnus
