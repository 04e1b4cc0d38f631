#include "somnus/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "somnus/error.hpp"
#include "somnus/rng.hpp"

namespace somnus {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

json parse_json(const std::string& text, const std::string& context) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(context + ": invalid JSON: " + e.what());
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void reject_unknown_keys(const json& obj, const std::string& context,
                         const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(context + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
    }
}

TaskKind parse_task(const std::string& s, const std::string& context) {
    if (s == "visual") return TaskKind::visual;
    if (s == "textual") return TaskKind::textual;
    throw ConfigError(context + ": task must be 'visual' or 'textual', got '" + s + "'");
}

Variant parse_variant(const std::string& s, const std::string& context) {
    if (s == "chain") return Variant::chain_only;
    if (s == "sleep") return Variant::sleep;
    if (s == "dream") return Variant::dream;
    throw ConfigError(context + ": variant must be chain|sleep|dream, got '" + s + "'");
}

OptimizerConfig parse_optimizer(const json& obj, const std::string& context) {
    reject_unknown_keys(obj, context + ".optimizer",
                        {"lr", "beta1", "beta2", "sigma", "epochs", "batch_size"});
    OptimizerConfig opt;
    opt.lr = get_or(obj, "lr", opt.lr);
    opt.beta1 = get_or(obj, "beta1", opt.beta1);
    opt.beta2 = get_or(obj, "beta2", opt.beta2);
    opt.sigma = get_or(obj, "sigma", opt.sigma);
    opt.epochs = get_or(obj, "epochs", opt.epochs);
    opt.batch_size = get_or(obj, "batch_size", opt.batch_size);
    opt.validate();
    return opt;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& context) {
    const json doc = parse_json(text, context);
    if (!doc.is_object()) throw ConfigError(context + ": config must be a JSON object");
    reject_unknown_keys(doc, context,
                        {"task", "variant", "blocks", "classes", "seed", "freeze", "merge",
                         "adapter", "model", "bundle", "optimizer", "data", "output_dir"});
    if (!doc.contains("task") || !doc.contains("variant")) {
        throw ConfigError(context + ": 'task' and 'variant' are required");
    }

    RunConfig cfg;
    cfg.model.task = parse_task(doc.at("task").get<std::string>(), context);
    cfg.model.variant = parse_variant(doc.at("variant").get<std::string>(), context);
    cfg.model.blocks = get_or<std::size_t>(doc, "blocks", 2);
    if (doc.contains("classes")) {
        cfg.model.classes = doc.at("classes").get<std::size_t>();
        cfg.explicit_classes = true;
    }
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);

    const std::string freeze = get_or<std::string>(doc, "freeze", "frozen");
    if (freeze == "frozen") {
        cfg.freeze = FreezeMode::frozen;
    } else if (freeze == "unfrozen") {
        cfg.freeze = FreezeMode::unfrozen;
    } else {
        throw ConfigError(context + ": freeze must be frozen|unfrozen");
    }

    const std::string merge = get_or<std::string>(doc, "merge", "concat");
    if (merge == "concat") {
        cfg.model.merge = MergeMode::concat;
    } else if (merge == "add") {
        cfg.model.merge = MergeMode::add;
    } else {
        throw ConfigError(context + ": merge must be concat|add");
    }

    const std::string adapter = get_or<std::string>(doc, "adapter", "auto");
    if (adapter == "auto") {
        cfg.model.adapter = AdapterKind::automatic;
    } else if (adapter == "identity") {
        cfg.model.adapter = AdapterKind::identity;
    } else {
        throw ConfigError(context + ": adapter must be auto|identity");
    }

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        reject_unknown_keys(m, context + ".model",
                            {"input", "stem_channels", "stem_stride", "block_layers",
                             "kernel", "seq_len", "vocab", "hidden", "branch_layers"});
        if (m.contains("input")) {
            cfg.model.input = m.at("input").get<Shape>();
            cfg.explicit_input = true;
        }
        cfg.model.stem_channels = get_or(m, "stem_channels", cfg.model.stem_channels);
        cfg.model.stem_stride = get_or(m, "stem_stride", cfg.model.stem_stride);
        cfg.model.block_layers = get_or(m, "block_layers", cfg.model.block_layers);
        cfg.model.kernel = get_or(m, "kernel", cfg.model.kernel);
        if (m.contains("seq_len")) {
            cfg.model.seq_len = m.at("seq_len").get<std::size_t>();
            cfg.explicit_seq = true;
        }
        if (m.contains("vocab")) {
            cfg.model.vocab = m.at("vocab").get<std::size_t>();
            cfg.explicit_vocab = true;
        }
        cfg.model.hidden = get_or(m, "hidden", cfg.model.hidden);
        cfg.model.branch_layers = get_or(m, "branch_layers", cfg.model.branch_layers);
    }

    if (doc.contains("bundle") && !doc.at("bundle").is_null()) {
        const json& b = doc.at("bundle");
        reject_unknown_keys(b, context + ".bundle", {"path", "stub"});
        if (b.contains("path") == b.contains("stub")) {
            throw ConfigError(context + ".bundle: give exactly one of 'path' or 'stub'");
        }
        if (b.contains("path")) {
            cfg.bundle.kind = BundleSource::Kind::path;
            cfg.bundle.path = b.at("path").get<std::string>();
        } else {
            const std::string stub = b.at("stub").get<std::string>();
            cfg.bundle.kind = BundleSource::Kind::stub;
            if (stub == "zero") {
                cfg.bundle.stub = BundleKind::zero;
            } else if (stub == "identity") {
                cfg.bundle.stub = BundleKind::identity;
            } else {
                throw ConfigError(context + ".bundle: stub must be zero|identity");
            }
        }
    }
    if (cfg.model.variant != Variant::chain_only &&
        cfg.bundle.kind == BundleSource::Kind::none) {
        throw ConfigError(context + ": variant '" +
                          std::string(to_string(cfg.model.variant)) +
                          "' requires a 'bundle' entry");
    }
    if (cfg.model.variant == Variant::chain_only &&
        cfg.bundle.kind != BundleSource::Kind::none) {
        throw ConfigError(context + ": chain variant takes no 'bundle' entry");
    }

    if (doc.contains("optimizer")) {
        cfg.optimizer = parse_optimizer(doc.at("optimizer"), context);
    }
    cfg.optimizer.seed = cfg.seed;

    if (doc.contains("data")) {
        const json& d = doc.at("data");
        reject_unknown_keys(d, context + ".data", {"train", "test"});
        cfg.train_data = get_or<std::string>(d, "train", "");
        cfg.test_data = get_or<std::string>(d, "test", "");
    }
    cfg.output_dir = get_or<std::string>(doc, "output_dir", "");
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path), path);
}

std::string RunConfig::to_json_text() const {
    ojson doc;
    doc["task"] = to_string(model.task);
    doc["variant"] = to_string(model.variant);
    doc["blocks"] = model.blocks;
    doc["classes"] = model.classes;
    doc["seed"] = seed;
    doc["freeze"] = to_string(freeze);
    doc["merge"] = model.merge == MergeMode::concat ? "concat" : "add";
    doc["adapter"] = model.adapter == AdapterKind::automatic ? "auto" : "identity";
    ojson m;
    m["input"] = model.input;
    m["stem_channels"] = model.stem_channels;
    m["stem_stride"] = model.stem_stride;
    m["block_layers"] = model.block_layers;
    m["kernel"] = model.kernel;
    m["seq_len"] = model.seq_len;
    m["vocab"] = model.vocab;
    m["hidden"] = model.hidden;
    m["branch_layers"] = model.branch_layers;
    doc["model"] = std::move(m);
    ojson b;
    switch (bundle.kind) {
        case BundleSource::Kind::none: b = nullptr; break;
        case BundleSource::Kind::path: b["path"] = bundle.path; break;
        case BundleSource::Kind::stub: b["stub"] = to_string(bundle.stub); break;
    }
    doc["bundle"] = std::move(b);
    ojson o;
    o["lr"] = optimizer.lr;
    o["beta1"] = optimizer.beta1;
    o["beta2"] = optimizer.beta2;
    o["sigma"] = optimizer.sigma;
    o["epochs"] = optimizer.epochs;
    o["batch_size"] = optimizer.batch_size;
    doc["optimizer"] = std::move(o);
    ojson d;
    d["train"] = train_data;
    d["test"] = test_data;
    doc["data"] = std::move(d);
    doc["output_dir"] = output_dir;
    return doc.dump(2);
}

std::string RunConfig::hash() const {
    const std::uint64_t h = fnv1a64(to_json_text());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PretrainConfig PretrainConfig::from_file(const std::string& path) {
    const json doc = parse_json(read_text_file(path), path);
    if (!doc.is_object()) throw ConfigError(path + ": config must be a JSON object");
    reject_unknown_keys(doc, path, {"arch", "optimizer", "seed", "data", "output"});

    PretrainConfig cfg;
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
    if (doc.contains("arch")) {
        const json& a = doc.at("arch");
        reject_unknown_keys(a, path + ".arch",
                            {"c1", "c2", "latent", "embed", "hidden"});
        cfg.arch.visual.c1 = get_or(a, "c1", cfg.arch.visual.c1);
        cfg.arch.visual.c2 = get_or(a, "c2", cfg.arch.visual.c2);
        if (a.contains("latent")) {
            const auto latent = a.at("latent").get<std::size_t>();
            cfg.arch.visual.latent = latent;
            cfg.arch.textual.latent = latent;
        }
        cfg.arch.textual.embed = get_or(a, "embed", cfg.arch.textual.embed);
        cfg.arch.textual.hidden = get_or(a, "hidden", cfg.arch.textual.hidden);
    }
    if (doc.contains("optimizer")) {
        cfg.optimizer = parse_optimizer(doc.at("optimizer"), path);
    }
    cfg.optimizer.seed = cfg.seed;
    if (!doc.contains("data") || !doc.at("data").contains("train")) {
        throw ConfigError(path + ": data.train is required");
    }
    reject_unknown_keys(doc.at("data"), path + ".data", {"train", "heldout"});
    cfg.train_data = doc.at("data").at("train").get<std::string>();
    cfg.heldout_data = get_or<std::string>(doc.at("data"), "heldout", "");
    if (!doc.contains("output")) throw ConfigError(path + ": 'output' path is required");
    cfg.output_path = doc.at("output").get<std::string>();
    return cfg;
}

std::string apply_json_override(const std::string& json_text,
                                const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::exception&) {
        value = value_text;  // plain string
    }

    json doc = parse_json(json_text, "override target");
    json* node = &doc;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty()) throw ConfigError("override '" + assignment + "': empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
    return doc.dump();
}

}  // namespace somnus
