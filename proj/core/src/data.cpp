#include "somnus/data.hpp"

#include <cmath>
#include <cstring>

#include "somnus/error.hpp"
#include "somnus/rng.hpp"
#include "somnus/serialize.hpp"

namespace somnus {

namespace {

constexpr char kImageMagic[4] = {'S', 'I', 'M', 'G'};
constexpr char kTextMagic[4] = {'S', 'T', 'X', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;

void render_shape(std::vector<float>& img, std::size_t size, std::size_t cls,
                  long cx, long cy, long r, double noise, Rng& rng) {
    const long wbar = std::max<long>(1, r / 3);
    for (long y = 0; y < static_cast<long>(size); ++y) {
        for (long x = 0; x < static_cast<long>(size); ++x) {
            const long dx = x - cx, dy = y - cy;
            bool fg = false;
            switch (cls) {
                case 0:  // filled square
                    fg = std::abs(dx) <= r && std::abs(dy) <= r;
                    break;
                case 1:  // cross
                    fg = (std::abs(dx) <= wbar && std::abs(dy) <= r) ||
                         (std::abs(dy) <= wbar && std::abs(dx) <= r);
                    break;
                case 2:  // circle
                    fg = dx * dx + dy * dy <= r * r;
                    break;
                default:  // filled triangle, apex up
                    fg = dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2;
                    break;
            }
            const double v = fg ? rng.uniform(1.0 - noise, 1.0) : rng.uniform(0.0, noise);
            img[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)] =
                static_cast<float>(v);
        }
    }
}

}  // namespace

const char* to_string(TaskKind k) {
    return k == TaskKind::visual ? "visual" : "textual";
}

Batch Dataset::batch(const std::vector<std::size_t>& indices) const {
    Batch b;
    std::vector<std::int64_t> lab;
    lab.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) {
            throw ValueError("dataset: index " + std::to_string(i) + " out of range");
        }
        lab.push_back(static_cast<std::int64_t>(labels[i]));
    }
    b.labels = IntTensor({indices.size()}, std::move(lab));
    if (kind == TaskKind::visual) {
        const std::size_t px = numel(image_shape);
        std::vector<double> data(indices.size() * px);
        for (std::size_t j = 0; j < indices.size(); ++j) {
            const auto& img = images[indices[j]];
            for (std::size_t p = 0; p < px; ++p) {
                data[j * px + p] = static_cast<double>(img[p]);
            }
        }
        Shape s = {indices.size()};
        s.insert(s.end(), image_shape.begin(), image_shape.end());
        b.images = Tensor(std::move(s), std::move(data));
    } else {
        std::vector<std::int64_t> ids(indices.size() * seq_len);
        for (std::size_t j = 0; j < indices.size(); ++j) {
            const auto& seq = tokens[indices[j]];
            for (std::size_t t = 0; t < seq_len; ++t) {
                ids[j * seq_len + t] = static_cast<std::int64_t>(seq[t]);
            }
        }
        b.tokens = IntTensor({indices.size(), seq_len}, std::move(ids));
    }
    return b;
}

std::uint32_t Dataset::fingerprint() const {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(classes));
    if (kind == TaskKind::visual) {
        for (std::size_t d : image_shape) w.u32(static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < size(); ++i) {
            w.u16(labels[i]);
            for (float v : images[i]) w.f32(v);
        }
    } else {
        w.u32(static_cast<std::uint32_t>(vocab_size));
        w.u32(static_cast<std::uint32_t>(seq_len));
        for (std::size_t i = 0; i < size(); ++i) {
            w.u16(labels[i]);
            for (std::uint32_t t : tokens[i]) w.u32(t);
        }
    }
    return crc32_bytes(w.buffer().data(), w.size());
}

Dataset gen_synthetic_images(ImageKind kind, std::size_t n, double noise,
                             std::uint64_t seed, std::size_t grid_size) {
    if (n == 0) throw ValueError("gen_synthetic_images: n must be positive");
    if (noise < 0.0 || noise >= 0.5) {
        throw ValueError("gen_synthetic_images: noise must lie in [0, 0.5)");
    }
    Dataset d;
    d.kind = TaskKind::visual;
    d.classes = kind == ImageKind::shapes2 ? 2 : 4;
    d.image_shape = {1, grid_size, grid_size};
    Rng rng(seed);
    const long jitter = std::lround(noise * 10.0);
    const long base_r = static_cast<long>(grid_size) / 4;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % d.classes;
        long cx = static_cast<long>(grid_size) / 2;
        long cy = cx;
        long r = base_r;
        if (jitter > 0) {
            cx += static_cast<long>(rng.below(2 * jitter + 1)) - jitter;
            cy += static_cast<long>(rng.below(2 * jitter + 1)) - jitter;
            r += static_cast<long>(rng.below(jitter + 1));
        }
        std::vector<float> img(grid_size * grid_size, 0.0f);
        render_shape(img, grid_size, cls, cx, cy, r, noise, rng);
        d.images.push_back(std::move(img));
        d.labels.push_back(static_cast<std::uint16_t>(cls));
    }
    return d;
}

Dataset gen_synthetic_text(TextKind kind, std::size_t n, std::size_t vocab_size,
                           std::size_t seq_len, std::uint64_t seed) {
    const std::size_t k = kind == TextKind::keyword2 ? 2 : 4;
    if (n == 0 || seq_len < 2) {
        throw ValueError("gen_synthetic_text: need n > 0 and seq_len >= 2");
    }
    if (vocab_size <= 2 * k) {
        throw ValueError("gen_synthetic_text: vocab_size must exceed twice the class count");
    }
    Dataset d;
    d.kind = TaskKind::textual;
    d.classes = k;
    d.vocab_size = vocab_size;
    d.seq_len = seq_len;
    d.vocab.push_back("<pad>");
    for (std::size_t c = 1; c <= k; ++c) d.vocab.push_back("kw" + std::to_string(c));
    for (std::size_t wid = k + 1; wid < vocab_size; ++wid) {
        d.vocab.push_back("w" + std::to_string(wid));
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % k;
        const std::size_t len = seq_len / 2 + rng.below(seq_len - seq_len / 2);
        std::vector<std::uint32_t> seq(seq_len, 0);
        for (std::size_t t = 0; t < len; ++t) {
            seq[t] = static_cast<std::uint32_t>(k + 1 + rng.below(vocab_size - k - 1));
        }
        seq[rng.below(len)] = static_cast<std::uint32_t>(cls + 1);
        d.tokens.push_back(std::move(seq));
        d.labels.push_back(static_cast<std::uint16_t>(cls));
    }
    return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
    ByteWriter w;
    if (d.kind == TaskKind::visual) {
        w.bytes(kImageMagic, 4);
        w.u32(kDatasetVersion);
        w.u32(static_cast<std::uint32_t>(d.size()));
        w.u32(static_cast<std::uint32_t>(d.classes));
        w.u32(static_cast<std::uint32_t>(d.image_shape[0]));
        w.u32(static_cast<std::uint32_t>(d.image_shape[1]));
        w.u32(static_cast<std::uint32_t>(d.image_shape[2]));
        for (std::size_t i = 0; i < d.size(); ++i) {
            w.u16(d.labels[i]);
            for (float v : d.images[i]) w.f32(v);
        }
    } else {
        w.bytes(kTextMagic, 4);
        w.u32(kDatasetVersion);
        w.u32(static_cast<std::uint32_t>(d.size()));
        w.u32(static_cast<std::uint32_t>(d.classes));
        w.u32(static_cast<std::uint32_t>(d.vocab_size));
        w.u32(static_cast<std::uint32_t>(d.seq_len));
        for (const auto& s : d.vocab) w.str(s);
        for (std::size_t i = 0; i < d.size(); ++i) {
            w.u16(d.labels[i]);
            for (std::uint32_t t : d.tokens[i]) w.u32(t);
        }
    }
    write_file(path, w.buffer());
}

Dataset load_dataset(const std::string& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    char magic[4];
    r.raw(magic, 4);
    Dataset d;
    if (std::memcmp(magic, kImageMagic, 4) == 0) {
        d.kind = TaskKind::visual;
    } else if (std::memcmp(magic, kTextMagic, 4) == 0) {
        d.kind = TaskKind::textual;
    } else {
        throw FormatError(path + ": unrecognized magic, expected SIMG or STXT");
    }
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    }
    const std::uint32_t n = r.u32();
    d.classes = r.u32();
    if (d.classes == 0) r.fail("class count must be positive");
    if (d.kind == TaskKind::visual) {
        const std::uint32_t c = r.u32(), h = r.u32(), w = r.u32();
        if (c == 0 || h == 0 || w == 0) r.fail("degenerate image shape");
        d.image_shape = {c, h, w};
        const std::size_t px = static_cast<std::size_t>(c) * h * w;
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint16_t label = r.u16();
            if (label >= d.classes) {
                r.fail("label " + std::to_string(label) + " >= classes " +
                       std::to_string(d.classes) + " in record " + std::to_string(i));
            }
            std::vector<float> img(px);
            for (std::size_t p = 0; p < px; ++p) img[p] = r.f32();
            d.images.push_back(std::move(img));
            d.labels.push_back(label);
        }
    } else {
        d.vocab_size = r.u32();
        d.seq_len = r.u32();
        if (d.vocab_size == 0 || d.seq_len == 0) r.fail("degenerate text header");
        for (std::size_t i = 0; i < d.vocab_size; ++i) d.vocab.push_back(r.str());
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint16_t label = r.u16();
            if (label >= d.classes) {
                r.fail("label " + std::to_string(label) + " >= classes " +
                       std::to_string(d.classes) + " in record " + std::to_string(i));
            }
            std::vector<std::uint32_t> seq(d.seq_len);
            for (std::size_t t = 0; t < d.seq_len; ++t) {
                seq[t] = r.u32();
                if (seq[t] >= d.vocab_size) {
                    r.fail("token id " + std::to_string(seq[t]) + " >= vocab " +
                           std::to_string(d.vocab_size) + " in record " + std::to_string(i));
                }
            }
            d.tokens.push_back(std::move(seq));
            d.labels.push_back(label);
        }
    }
    if (r.remaining() != 0) r.fail("trailing bytes after last record");
    return d;
}

}  // namespace somnus
