#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnus/autoencoder.hpp"
#include "somnus/model.hpp"
#include "somnus/optim.hpp"
#include "somnus/train.hpp"

namespace somnus {

struct BundleSource {
    enum class Kind { none, path, stub };
    Kind kind = Kind::none;
    std::string path;
    BundleKind stub = BundleKind::zero;
};

// Full experiment description. Parsed from a single strict-schema JSON
// document; unknown keys anywhere are rejected. Dataset-determined fields
// (classes, input shape, sequence length, vocabulary) may be given explicitly
// and are then cross-checked against the data at run time.
struct RunConfig {
    ModelConfig model;
    OptimizerConfig optimizer;
    FreezeMode freeze = FreezeMode::frozen;
    std::uint64_t seed = 0;
    BundleSource bundle;
    std::string train_data;
    std::string test_data;
    std::string output_dir;

    // which dataset-derived fields were given explicitly
    bool explicit_classes = false;
    bool explicit_input = false;
    bool explicit_seq = false;
    bool explicit_vocab = false;

    static RunConfig from_json_text(const std::string& text, const std::string& context);
    static RunConfig from_file(const std::string& path);

    // Canonical serialization (every field explicit, fixed key order).
    std::string to_json_text() const;
    // 16-hex-digit FNV-1a of the canonical serialization.
    std::string hash() const;
};

// Pretraining job description, same strictness rules.
struct PretrainConfig {
    AeConfig arch;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    std::string train_data;
    std::string heldout_data;  // optional
    std::string output_path;

    static PretrainConfig from_file(const std::string& path);
};

// Applies one `dotted.path=value` override onto a JSON document; values parse
// as JSON scalars when possible, otherwise as strings.
std::string apply_json_override(const std::string& json_text,
                                const std::string& assignment);

}  // namespace somnus
