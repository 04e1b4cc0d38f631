#include "somnus/dream_dump.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "somnus/error.hpp"
#include "somnus/serialize.hpp"

namespace somnus {

namespace {

using ojson = nlohmann::ordered_json;

std::string stage_label(std::size_t index) {
    static const char* ordinals[] = {"First", "Second", "Third", "Fourth",
                                     "Fifth", "Sixth", "Seventh", "Eighth"};
    if (index == 0) return "Original";
    if (index <= 8) return std::string("The ") + ordinals[index - 1] + " Dream";
    return "Dream " + std::to_string(index);
}

void write_pgm(const std::string& path, const std::vector<double>& values,
               std::size_t channels, std::size_t height, std::size_t width) {
    // Channels are stacked vertically; one min-max normalization per stage.
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P5\n" << width << " " << channels * height << "\n255\n";
    for (double v : values) {
        const double norm = (v - lo) / span;
        out.put(static_cast<char>(std::lround(norm * 255.0)));
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

void write_raw_f64(const std::string& path, const std::vector<double>& values) {
    ByteWriter w;
    for (double v : values) w.f64(v);
    write_file(path, w.buffer());
}

void write_tokens(const std::string& path, const std::vector<std::int64_t>& ids,
                  const std::vector<std::string>& vocab) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out << " ";
        const auto id = static_cast<std::size_t>(ids[i]);
        out << (id < vocab.size() ? vocab[id] : "<" + std::to_string(ids[i]) + ">");
    }
    out << "\n";
}

}  // namespace

DreamDumpResult dream_dump(const BlockGraph& graph, const Dataset& data,
                           std::size_t sample_index, std::size_t depth,
                           const std::string& out_dir) {
    if (graph.variant() != Variant::dream) {
        throw ValueError("dream_dump: model '" + graph.model_id() +
                         "' has no dream connections");
    }
    if (depth < 1 || depth > graph.block_count()) {
        throw ValueError("dream_dump: depth " + std::to_string(depth) +
                         " must lie in [1," + std::to_string(graph.block_count()) + "]");
    }
    if (sample_index >= data.size()) {
        throw ValueError("dream_dump: sample " + std::to_string(sample_index) +
                         " out of range");
    }
    if (data.kind != graph.task()) {
        throw ValueError("dream_dump: dataset task does not match the model");
    }

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    Batch sample = data.single(sample_index);
    ForwardTrace trace;
    graph.forward(sample, &trace);

    DreamDumpResult result;
    const bool visual = graph.task() == TaskKind::visual;
    for (std::size_t stage = 0; stage <= depth; ++stage) {
        DreamStage s;
        s.index = stage;
        s.label = stage_label(stage);
        const std::string base = (dir / ("stage_" + std::to_string(stage))).string();

        std::vector<double> values;
        if (stage == 0) {
            if (visual) {
                values = sample.images.data();
                s.shape = data.image_shape;
            } else {
                for (std::int64_t id : sample.tokens.data()) {
                    values.push_back(static_cast<double>(id));
                }
                s.shape = {data.seq_len};
                s.text_path = base + ".txt";
                write_tokens(s.text_path, sample.tokens.data(), data.vocab);
            }
        } else {
            const Tensor& dream = trace.dreams[stage - 1];
            values = dream.data();
            s.shape = Shape(dream.shape().begin() + 1, dream.shape().end());
            if (!visual && stage - 1 < trace.dream_tokens.size()) {
                s.text_path = base + ".txt";
                write_tokens(s.text_path, trace.dream_tokens[stage - 1].data(),
                             data.vocab);
            }
        }
        if (visual) {
            s.image_path = base + ".pgm";
            write_pgm(s.image_path, values, s.shape[0], s.shape[1], s.shape[2]);
        }
        s.raw_path = base + ".f64";
        write_raw_f64(s.raw_path, values);
        result.stages.push_back(std::move(s));
    }

    ojson manifest;
    manifest["model"] = graph.model_id();
    manifest["sample"] = sample_index;
    manifest["depth"] = depth;
    ojson stages = ojson::array();
    for (const auto& s : result.stages) {
        ojson e;
        e["index"] = s.index;
        e["label"] = s.label;
        e["shape"] = s.shape;
        if (!s.image_path.empty()) {
            e["image"] = std::filesystem::path(s.image_path).filename().string();
        }
        if (!s.text_path.empty()) {
            e["text"] = std::filesystem::path(s.text_path).filename().string();
        }
        e["raw"] = std::filesystem::path(s.raw_path).filename().string();
        stages.push_back(std::move(e));
    }
    manifest["stages"] = std::move(stages);
    result.manifest_path = (dir / "manifest.json").string();
    std::ofstream out(result.manifest_path, std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("failed writing '" + result.manifest_path + "'");
    return result;
}

}  // namespace somnus
