#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "lfa/errors.hpp"

namespace lfa {

// Little-endian binary cursor over an in-memory buffer. All on-disk
// formats in this project are little-endian regardless of host order.

template <typename T>
constexpr T byteswap_int(T v) {
    T out = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
        out = static_cast<T>((out << 8) | ((v >> (8 * i)) & 0xff));
    }
    return out;
}

class ByteWriter {
public:
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u32(uint32_t v) { put_le(v); }
    void u64(uint64_t v) { put_le(v); }
    void i64(int64_t v) { put_le(static_cast<uint64_t>(v)); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    template <typename T>
    void put_le(T v) {
        if constexpr (std::endian::native == std::endian::big) {
            v = byteswap_int(v);
        }
        raw(&v, sizeof(T));
    }
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& buf) : ByteReader(buf.data(), buf.size()) {}

    void raw(void* p, size_t n) {
        if (pos_ + n > size_) throw FormatError("unexpected end of file");
        std::memcpy(p, data_ + pos_, n);
        pos_ += n;
    }
    uint32_t u32() { return get_le<uint32_t>(); }
    uint64_t u64() { return get_le<uint64_t>(); }
    int64_t i64() { return static_cast<int64_t>(get_le<uint64_t>()); }
    float f32() {
        uint32_t bits = get_le<uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        if (pos_ + n > size_) throw FormatError("truncated string field");
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == size_; }
    size_t remaining() const { return size_ - pos_; }

private:
    template <typename T>
    T get_le() {
        T v;
        raw(&v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            v = byteswap_int(v);
        }
        return v;
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path);

// Writes to <path>.tmp then renames, so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const void* data, size_t size);
void atomic_write(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);
void atomic_write(const std::filesystem::path& path, const std::string& text);

}  // namespace lfa
