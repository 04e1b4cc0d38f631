#include "somnus/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "somnus/error.hpp"
#include "somnus/serialize.hpp"

namespace somnus {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

Dataset load_for_task(const std::string& path, TaskKind task, const char* role) {
    if (path.empty()) {
        throw ConfigError(std::string("run: data.") + role + " path is required");
    }
    Dataset d = load_dataset(path);
    if (d.kind != task) {
        throw ConfigError(path + ": dataset is " + to_string(d.kind) +
                          " but the model task is " + to_string(task));
    }
    return d;
}

// Dataset-determined geometry wins; explicit config values must agree.
ModelConfig adopt_geometry(const RunConfig& cfg, const Dataset& train_set) {
    ModelConfig m = cfg.model;
    if (cfg.explicit_classes && cfg.model.classes != train_set.classes) {
        throw ConfigError("run: config says " + std::to_string(cfg.model.classes) +
                          " classes but the dataset has " +
                          std::to_string(train_set.classes));
    }
    m.classes = train_set.classes;
    if (m.task == TaskKind::visual) {
        if (cfg.explicit_input && cfg.model.input != train_set.image_shape) {
            throw ConfigError("run: config input " + shape_str(cfg.model.input) +
                              " != dataset image shape " +
                              shape_str(train_set.image_shape));
        }
        m.input = train_set.image_shape;
    } else {
        if (cfg.explicit_seq && cfg.model.seq_len != train_set.seq_len) {
            throw ConfigError("run: config seq_len " + std::to_string(cfg.model.seq_len) +
                              " != dataset " + std::to_string(train_set.seq_len));
        }
        if (cfg.explicit_vocab && cfg.model.vocab != train_set.vocab_size) {
            throw ConfigError("run: config vocab " + std::to_string(cfg.model.vocab) +
                              " != dataset " + std::to_string(train_set.vocab_size));
        }
        m.seq_len = train_set.seq_len;
        m.vocab = train_set.vocab_size;
    }
    return m;
}

BundlePtr resolve_bundle(const ModelConfig& model, const BundleSource& source) {
    switch (source.kind) {
        case BundleSource::Kind::none:
            return nullptr;
        case BundleSource::Kind::path: {
            BundlePtr b = load_bundle(source.path);
            if (model.task == TaskKind::textual && b->kind() == BundleKind::textual) {
                const auto& arch = b->textual_arch();
                if (arch.vocab != model.vocab || arch.seq_len != model.seq_len) {
                    throw ConfigError(source.path + ": bundle was pretrained for vocab " +
                                      std::to_string(arch.vocab) + " / seq_len " +
                                      std::to_string(arch.seq_len) +
                                      ", model needs " + std::to_string(model.vocab) +
                                      " / " + std::to_string(model.seq_len));
                }
            }
            return b;
        }
        case BundleSource::Kind::stub:
            return std::make_shared<AutoencoderBundle>(AutoencoderBundle::make_stub(
                source.stub, BlockGraph::block_shape_for(model)));
    }
    return nullptr;
}

RunConfig adopted_config(const RunConfig& cfg, const Dataset* train_set) {
    RunConfig adj = cfg;
    if (train_set) adj.model = adopt_geometry(cfg, *train_set);
    return adj;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::string metrics_jsonl(const RunRecord& rec) {
    std::string out;
    auto event = [&out](int epoch, const char* split, const char* metric, double value) {
        ojson e;
        e["epoch"] = epoch;
        e["split"] = split;
        e["metric"] = metric;
        e["value"] = value;
        out += e.dump();
        out += "\n";
    };
    event(0, "train", "loss", rec.initial_train_loss);
    event(0, "test", "accuracy", rec.initial_test_accuracy);
    for (std::size_t i = 0; i < rec.epochs.size(); ++i) {
        const int e = static_cast<int>(i) + 1;
        event(e, "train", "loss", rec.epochs[i].train_loss);
        event(e, "train", "accuracy", rec.epochs[i].train_accuracy);
        event(e, "test", "accuracy", rec.epochs[i].test_accuracy);
    }
    return out;
}

std::string summary_json(const RunConfig& cfg, const RunRecord& rec) {
    ojson s;
    s["model"] = rec.model_id;
    s["config_hash"] = rec.config_hash;
    s["aborted"] = rec.aborted;
    s["abort_reason"] = rec.abort_reason;
    s["epochs_completed"] = rec.epochs.size();
    s["initial"] = {{"train_loss", rec.initial_train_loss},
                    {"test_accuracy", rec.initial_test_accuracy}};
    ojson fin;
    fin["train_loss"] = rec.final_train_loss();
    if (!rec.epochs.empty()) {
        fin["train_accuracy"] = rec.epochs.back().train_accuracy;
    } else {
        fin["train_accuracy"] = nullptr;
    }
    fin["test_accuracy"] = rec.final_test_accuracy();
    s["final"] = std::move(fin);
    s["cost"] = ojson::parse(rec.cost.to_json());
    s["config"] = ojson::parse(cfg.to_json_text());
    return s.dump(2) + "\n";
}

std::string timing_json(const RunRecord& rec) {
    ojson t;
    t["total_wall_seconds"] = rec.total_wall_seconds;
    ojson per = ojson::array();
    for (const auto& e : rec.epochs) per.push_back(e.wall_seconds);
    t["epoch_wall_seconds"] = std::move(per);
    return t.dump(2) + "\n";
}

std::size_t grid_parallelism() {
    const char* env = std::getenv("SOMNUS_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
}

}  // namespace

BlockGraph build_from_config(const RunConfig& cfg, const Dataset* train_set) {
    const RunConfig adj = adopted_config(cfg, train_set);
    BundlePtr bundle = resolve_bundle(adj.model, adj.bundle);
    return BlockGraph::build(adj.model, std::move(bundle), adj.seed);
}

RunArtifacts run_training(const RunConfig& cfg) {
    Dataset train_set = load_for_task(cfg.train_data, cfg.model.task, "train");
    Dataset test_set = load_for_task(cfg.test_data, cfg.model.task, "test");
    if (train_set.classes != test_set.classes) {
        throw ConfigError("run: train/test class counts differ (" +
                          std::to_string(train_set.classes) + " vs " +
                          std::to_string(test_set.classes) + ")");
    }
    const RunConfig adj = adopted_config(cfg, &train_set);
    BundlePtr bundle = resolve_bundle(adj.model, adj.bundle);
    BlockGraph graph = BlockGraph::build(adj.model, std::move(bundle), adj.seed);

    RunArtifacts artifacts;
    artifacts.record = train(graph, train_set, test_set, adj.optimizer, adj.freeze);
    artifacts.record.config_hash = adj.hash();

    if (!adj.output_dir.empty()) {
        std::filesystem::create_directories(adj.output_dir);
        const std::filesystem::path dir(adj.output_dir);
        artifacts.metrics_path = (dir / "metrics.jsonl").string();
        artifacts.summary_path = (dir / "summary.json").string();
        artifacts.timing_path = (dir / "timing.json").string();
        artifacts.model_path = (dir / "model.slpn").string();
        write_text(artifacts.metrics_path, metrics_jsonl(artifacts.record));
        write_text(artifacts.summary_path, summary_json(adj, artifacts.record));
        write_text(artifacts.timing_path, timing_json(artifacts.record));
        save_model(graph, adj, artifacts.model_path);
    }
    return artifacts;
}

void save_model(const BlockGraph& graph, const RunConfig& cfg, const std::string& path) {
    ojson m;
    m["format"] = "model";
    m["model_id"] = graph.model_id();
    m["config_hash"] = cfg.hash();
    m["config"] = ojson::parse(cfg.to_json_text());
    if (graph.bundle()) {
        m["bundle_manifest"] = bundle_manifest_json(*graph.bundle());
        m["bundle_frozen"] = graph.bundle()->frozen();
    }
    WeightFile file;
    file.manifest_json = m.dump();
    for (const auto& q : graph.registry().all()) {
        file.arrays.push_back({q->name, q->value.shape(), q->value.data()});
    }
    save_weight_file(path, file);
}

LoadedModel load_model(const std::string& path) {
    WeightFile file = load_weight_file(path);
    json m;
    try {
        m = json::parse(file.manifest_json);
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad manifest JSON: " + e.what());
    }
    if (m.value("format", "") != "model") {
        throw FormatError(path + ": not a model file");
    }
    RunConfig cfg = RunConfig::from_json_text(m.at("config").dump(), path);
    BundlePtr bundle;
    if (m.contains("bundle_manifest")) {
        bundle = bundle_from_manifest_json(m.at("bundle_manifest").get<std::string>(),
                                           path);
        bundle->set_frozen(m.value("bundle_frozen", true));
    }
    BlockGraph graph = BlockGraph::build(cfg.model, bundle, cfg.seed);
    const auto& params = graph.registry().all();
    if (params.size() != file.arrays.size()) {
        throw FormatError(path + ": expected " + std::to_string(params.size()) +
                          " parameter arrays, found " + std::to_string(file.arrays.size()));
    }
    for (const auto& q : params) {
        const NamedArray* found = nullptr;
        for (const auto& a : file.arrays) {
            if (a.name == q->name) {
                found = &a;
                break;
            }
        }
        if (!found) throw FormatError(path + ": missing parameter '" + q->name + "'");
        if (found->shape != q->value.shape()) {
            throw FormatError(path + ": parameter '" + q->name + "' has shape " +
                              shape_str(found->shape) + ", expected " +
                              shape_str(q->value.shape()));
        }
        q->value.data() = found->values;
    }
    return {std::move(cfg), std::move(bundle), std::move(graph)};
}

AblationSuite ablation_suite_from_string(const std::string& s) {
    if (s == "block_count") return AblationSuite::block_count;
    if (s == "chain_kind") return AblationSuite::chain_kind;
    if (s == "bundle_kind") return AblationSuite::bundle_kind;
    if (s == "freeze") return AblationSuite::freeze;
    throw ConfigError("ablate: unknown suite '" + s +
                      "' (block_count|chain_kind|bundle_kind|freeze)");
}

std::vector<AblationCell> run_ablation(AblationSuite suite, const RunConfig& base,
                                       const std::string& out_dir) {
    std::vector<std::pair<std::string, RunConfig>> cells;
    switch (suite) {
        case AblationSuite::block_count:
            for (std::size_t m = 1; m <= 4; ++m) {
                RunConfig c = base;
                c.model.blocks = m;
                cells.emplace_back("blocks-" + std::to_string(m), std::move(c));
            }
            break;
        case AblationSuite::chain_kind:
            for (int layers : {1, 2, 3}) {
                RunConfig c = base;
                c.model.block_layers = layers;
                cells.emplace_back("layers-" + std::to_string(layers), std::move(c));
            }
            break;
        case AblationSuite::bundle_kind: {
            if (base.model.variant == Variant::chain_only) {
                throw ConfigError("ablate: bundle_kind needs a sleep or dream base config");
            }
            cells.emplace_back("base-bundle", base);
            RunConfig zero = base;
            zero.bundle.kind = BundleSource::Kind::stub;
            zero.bundle.stub = BundleKind::zero;
            zero.bundle.path.clear();
            cells.emplace_back("zero-stub", std::move(zero));
            break;
        }
        case AblationSuite::freeze:
            for (FreezeMode mode : {FreezeMode::frozen, FreezeMode::unfrozen}) {
                RunConfig c = base;
                c.freeze = mode;
                cells.emplace_back(to_string(mode), std::move(c));
            }
            break;
    }

    std::vector<AblationCell> results(cells.size());
    auto run_cell = [&](std::size_t i) {
        auto& [name, cfg] = cells[i];
        cfg.output_dir = (std::filesystem::path(out_dir) / name).string();
        AblationCell cell;
        cell.name = name;
        try {
            RunArtifacts art = run_training(cfg);
            cell.record = std::move(art.record);
            cell.config_hash = cell.record.config_hash;
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
        }
        results[i] = std::move(cell);
    };

    const std::size_t parallel = grid_parallelism();
    if (parallel <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        for (std::size_t start = 0; start < cells.size(); start += parallel) {
            std::vector<std::thread> pool;
            for (std::size_t i = start; i < std::min(cells.size(), start + parallel); ++i) {
                pool.emplace_back(run_cell, i);
            }
            for (auto& t : pool) t.join();
        }
    }
    return results;
}

std::string ablation_table_json(const std::vector<AblationCell>& cells) {
    ojson rows = ojson::array();
    for (const auto& cell : cells) {
        ojson row;
        row["cell"] = cell.name;
        row["config_hash"] = cell.config_hash;
        row["failed"] = cell.failed;
        if (cell.failed) {
            row["error"] = cell.error;
        } else {
            row["model"] = cell.record.model_id;
            row["params"] = cell.record.cost.params_total();
            row["flops"] = cell.record.cost.flops_total();
            row["final_test_accuracy"] = cell.record.final_test_accuracy();
            row["epochs"] = cell.record.epochs.size();
            row["aborted"] = cell.record.aborted;
        }
        rows.push_back(std::move(row));
    }
    ojson table;
    table["rows"] = std::move(rows);
    return table.dump(2) + "\n";
}

std::string comparison_table_json(const std::vector<RunRecord>& records) {
    ojson rows = ojson::array();
    for (const auto& rec : records) {
        ojson row;
        row["model"] = rec.model_id;
        row["params"] = rec.cost.params_total();
        row["params_trainable"] = rec.cost.params_trainable();
        row["params_frozen"] = rec.cost.params_frozen();
        row["flops"] = rec.cost.flops_total();
        row["test_accuracy"] = rec.final_test_accuracy();
        rows.push_back(std::move(row));
    }
    ojson table;
    table["rows"] = std::move(rows);
    return table.dump(2) + "\n";
}

}  // namespace somnus
