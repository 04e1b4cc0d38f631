#include "somnus/serialize.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "somnus/error.hpp"

namespace somnus {

namespace {

constexpr char kWeightMagic[4] = {'S', 'L', 'P', 'N'};
constexpr std::uint32_t kWeightVersion = 1;

}  // namespace

void ByteWriter::u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void ByteWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void ByteWriter::bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

ByteReader::ByteReader(const std::uint8_t* data, std::size_t size, std::string source)
    : data_(data), size_(size), source_(std::move(source)) {}

void ByteReader::need(std::size_t n) {
    if (pos_ + n > size_) {
        fail("truncated (need " + std::to_string(n) + " more bytes)");
    }
}

std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                      static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

float ByteReader::f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double ByteReader::f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string ByteReader::str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
}

void ByteReader::raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
}

void ByteReader::fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
}

std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed) {
    return static_cast<std::uint32_t>(
        ::crc32(seed, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    in.seekg(0, std::ios::end);
    const std::streamoff n = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("failed reading '" + path + "'");
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

void save_weight_file(const std::string& path, const WeightFile& file) {
    ByteWriter w;
    w.bytes(kWeightMagic, 4);
    w.u32(kWeightVersion);
    w.str(file.manifest_json);
    for (const auto& a : file.arrays) {
        w.str(a.name);
        w.u32(static_cast<std::uint32_t>(a.shape.size()));
        for (std::size_t d : a.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : a.values) w.f64(v);
    }
    const std::uint32_t crc = crc32_bytes(w.buffer().data(), w.size());
    ByteWriter trailer;
    trailer.u32(crc);
    std::vector<std::uint8_t> bytes = w.buffer();
    bytes.insert(bytes.end(), trailer.buffer().begin(), trailer.buffer().end());
    write_file(path, bytes);
}

WeightFile load_weight_file(const std::string& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    if (bytes.size() < 12) r.fail("not a weight file");
    const std::uint32_t stored_crc =
        static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
        static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
        static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
        static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
    const std::uint32_t actual_crc = crc32_bytes(bytes.data(), bytes.size() - 4);
    if (stored_crc != actual_crc) {
        throw FormatError(path + ": checksum mismatch (file corrupted or truncated)");
    }
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kWeightMagic, 4) != 0) {
        throw FormatError(path + ": bad magic, not a weight file");
    }
    const std::uint32_t version = r.u32();
    if (version != kWeightVersion) {
        throw FormatError(path + ": unsupported weight format version " +
                          std::to_string(version));
    }
    WeightFile file;
    file.manifest_json = r.str();
    const std::size_t payload_end = bytes.size() - 4;
    while (r.offset() < payload_end) {
        NamedArray a;
        a.name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
        a.shape.resize(rank);
        for (std::uint32_t i = 0; i < rank; ++i) a.shape[i] = r.u32();
        const std::size_t n = numel(a.shape);
        a.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) a.values[i] = r.f64();
        file.arrays.push_back(std::move(a));
    }
    return file;
}

}  // namespace somnus
