#include "common/binio.hpp"

#include "common/error.hpp"

#include <cstring>
#include <fstream>

namespace attnmix::io {

uint64_t fnv1a_str(const std::string& s, uint64_t h) {
    return fnv1a(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()), h);
}

void Writer::u16(uint16_t x) {
    buf_.push_back(static_cast<uint8_t>(x));
    buf_.push_back(static_cast<uint8_t>(x >> 8));
}

void Writer::u32(uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

void Writer::u64(uint64_t x) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

void Writer::f64(double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    u64(bits);
}

void Writer::bytes(std::span<const uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
}

void Writer::str(const std::string& s) {
    if (s.size() > 0xFFFF) raise(Errc::invalid_argument, "string too long for container");
    u16(static_cast<uint16_t>(s.size()));
    bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

void Reader::need(size_t n) {
    if (pos_ + n > data_.size())
        raise(Errc::corrupt_checkpoint, "container truncated at byte " + std::to_string(pos_));
}

uint8_t Reader::u8() {
    need(1);
    return data_[pos_++];
}

uint16_t Reader::u16() {
    need(2);
    uint16_t x = static_cast<uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return x;
}

uint32_t Reader::u32() {
    need(4);
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return x;
}

uint64_t Reader::u64() {
    need(8);
    uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return x;
}

double Reader::f64() {
    uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, sizeof x);
    return x;
}

std::string Reader::str() {
    uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::vector<uint8_t> Reader::bytes(size_t n) {
    need(n);
    std::vector<uint8_t> out(data_.begin() + static_cast<ptrdiff_t>(pos_),
                             data_.begin() + static_cast<ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
}

void write_file(const std::string& path, std::span<const uint8_t> data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(Errc::io_error, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) raise(Errc::io_error, "short write to " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) raise(Errc::io_error, "cannot open " + path);
    std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> out(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(out.data()), n);
    if (!f) raise(Errc::io_error, "short read from " + path);
    return out;
}

std::string read_text_file(const std::string& path) {
    std::vector<uint8_t> raw = read_file(path);
    return std::string(raw.begin(), raw.end());
}

void write_text_file(const std::string& path, const std::string& text) {
    write_file(path, std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

} // namespace attnmix::io
