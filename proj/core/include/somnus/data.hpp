#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnus/tensor.hpp"

namespace somnus {

enum class TaskKind { visual, textual };

const char* to_string(TaskKind k);

// A batch ready for a model forward pass: exactly one of images/tokens is
// defined, labels always are.
struct Batch {
    Tensor images;     // (B,C,H,W), visual only
    IntTensor tokens;  // (B,T), textual only
    IntTensor labels;  // (B)
};

// In-memory labeled dataset for either task. Image pixels are stored as f32
// (the on-disk precision) and widened to f64 at batch time, so generate ->
// save -> load round-trips are lossless.
struct Dataset {
    TaskKind kind = TaskKind::visual;
    std::size_t classes = 0;

    // visual
    Shape image_shape;  // (C,H,W)
    std::vector<std::vector<float>> images;

    // textual
    std::size_t vocab_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::string> vocab;
    std::vector<std::vector<std::uint32_t>> tokens;

    std::vector<std::uint16_t> labels;

    std::size_t size() const { return labels.size(); }
    Batch batch(const std::vector<std::size_t>& indices) const;
    Batch single(std::size_t index) const { return batch({index}); }

    // CRC32 over the full canonical serialization; used as the pretraining
    // data fingerprint.
    std::uint32_t fingerprint() const;
};

enum class ImageKind { shapes2, shapes4 };
enum class TextKind { keyword2, keyword4 };

// Renders filled geometric classes (square/cross/circle/triangle) on a
// grid_size x grid_size canvas. Pixels are foreground U(1-noise,1) /
// background U(0,noise); position and size jitter scale with the noise
// level, so noise=0 yields the k canonical templates. Deterministic per seed.
Dataset gen_synthetic_images(ImageKind kind, std::size_t n, double noise,
                             std::uint64_t seed, std::size_t grid_size = 32);

// Each class is defined by the presence of one class keyword id amid random
// filler tokens; id 0 is padding. Trivially separable by construction.
Dataset gen_synthetic_text(TextKind kind, std::size_t n, std::size_t vocab_size,
                           std::size_t seq_len, std::uint64_t seed);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);  // dispatches on magic

}  // namespace somnus
