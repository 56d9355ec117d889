#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace attnmix::io {

inline constexpr uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a(std::span<const uint8_t> data, uint64_t h = kFnvOffset) {
    for (uint8_t b : data) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

uint64_t fnv1a_str(const std::string& s, uint64_t h = kFnvOffset);

// Little-endian buffer writer; layout is identical on every host.
class Writer {
public:
    void u8(uint8_t x) { buf_.push_back(x); }
    void u16(uint16_t x);
    void u32(uint32_t x);
    void u64(uint64_t x);
    void f64(double x);
    void bytes(std::span<const uint8_t> data);
    void str(const std::string& s); // u16 length + bytes
    const std::vector<uint8_t>& buffer() const { return buf_; }
    std::vector<uint8_t>& buffer() { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

// Reader over an in-memory buffer; raises corrupt_checkpoint on overrun.
class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}
    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    double f64();
    std::string str();
    std::vector<uint8_t> bytes(size_t n);
    size_t pos() const { return pos_; }
    size_t remaining() const { return data_.size() - pos_; }

private:
    void need(size_t n);
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

void write_file(const std::string& path, std::span<const uint8_t> data);
std::vector<uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace attnmix::io
