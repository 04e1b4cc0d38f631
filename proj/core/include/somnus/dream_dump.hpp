#pragma once

#include <string>
#include <vector>

#include "somnus/data.hpp"
#include "somnus/model.hpp"

namespace somnus {

struct DreamStage {
    std::size_t index = 0;     // 0 = original input
    std::string label;         // "Original", "The First Dream", ...
    std::string image_path;    // portable graymap, visual stages only
    std::string text_path;     // token strings, textual stages only
    std::string raw_path;      // little-endian f64 values
    Shape shape;               // per-sample shape of the raw tensor
};

struct DreamDumpResult {
    std::vector<DreamStage> stages;  // depth + 1 entries, stage order
    std::string manifest_path;
};

// Runs one sample through a dream-variant model and writes the original
// input plus the reconstruction tapped at blocks 1..depth, one stage per
// file set, with a manifest listing the stages in order. Images are min-max
// normalized for the graymap export; the raw tensors are exact.
DreamDumpResult dream_dump(const BlockGraph& graph, const Dataset& data,
                           std::size_t sample_index, std::size_t depth,
                           const std::string& out_dir);

}  // namespace somnus
