#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnus/shape.hpp"

namespace somnus {

// Little-endian byte buffer writer/reader for the on-disk formats. All
// multi-byte integers and floats are serialized explicitly byte by byte so
// files are identical across platforms.
class ByteWriter {
public:
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void bytes(const void* data, std::size_t n);
    void str(const std::string& s);  // u32 length + raw bytes

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string source);

    std::uint16_t u16();
    std::uint32_t u32();
    float f32();
    double f64();
    std::string str();
    void raw(void* out, std::size_t n);

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

    // Throws FormatError mentioning the source and current byte offset.
    [[noreturn]] void fail(const std::string& what) const;

private:
    void need(std::size_t n);

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string source_;
};

std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed = 0);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Named weight container ("SLPN"): magic, u32 version, length-prefixed UTF-8
// JSON manifest, per-array records (u32 name length, name, u32 rank, u32
// dims, raw little-endian f64 values), trailing CRC32 of all prior bytes.
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct WeightFile {
    std::string manifest_json;
    std::vector<NamedArray> arrays;
};

void save_weight_file(const std::string& path, const WeightFile& file);
WeightFile load_weight_file(const std::string& path);

}  // namespace somnus
