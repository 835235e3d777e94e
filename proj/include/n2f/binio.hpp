#pragma once

// Little-endian binary serialization helpers shared by the dataset and
// checkpoint containers. All multi-byte fields are written least significant
// byte first regardless of host endianness.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "n2f/common.hpp"

namespace n2f::binio {

inline void put_u8(std::string& buf, uint8_t v) { buf.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<uint32_t>(v)); }

inline void put_bytes(std::string& buf, const void* data, size_t n) {
    buf.append(static_cast<const char*>(data), n);
}

// Sequential reader over an in-memory byte buffer. Every accessor validates
// the remaining length and reports the absolute byte offset on truncation.
class Reader {
  public:
    Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return data_.size() - off_; }

    void require(size_t n, const char* what) const {
        N2F_CHECK_IO(remaining() >= n, "%s: truncated at byte offset %zu while reading %s (%zu bytes needed, %zu available)",
                     source_.c_str(), off_, what, n, remaining());
    }

    uint8_t u8(const char* what = "u8") {
        require(1, what);
        return static_cast<uint8_t>(data_[off_++]);
    }
    uint16_t u16(const char* what = "u16") {
        require(2, what);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= uint16_t(uint8_t(data_[off_ + size_t(i)])) << (8 * i);
        off_ += 2;
        return v;
    }
    uint32_t u32(const char* what = "u32") {
        require(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(data_[off_ + size_t(i)])) << (8 * i);
        off_ += 4;
        return v;
    }
    uint64_t u64(const char* what = "u64") {
        require(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(data_[off_ + size_t(i)])) << (8 * i);
        off_ += 8;
        return v;
    }
    float f32(const char* what = "f32") { return std::bit_cast<float>(u32(what)); }

    std::string bytes(size_t n, const char* what = "bytes") {
        require(n, what);
        std::string out = data_.substr(off_, n);
        off_ += n;
        return out;
    }

    void read_f32_block(float* dst, size_t count, const char* what) {
        require(4 * count, what);
        for (size_t i = 0; i < count; ++i) {
            uint32_t v = 0;
            for (int b = 0; b < 4; ++b) v |= uint32_t(uint8_t(data_[off_ + 4 * i + size_t(b)])) << (8 * b);
            dst[i] = std::bit_cast<float>(v);
        }
        off_ += 4 * count;
    }

    const std::string& source() const { return source_; }

  private:
    const std::string& data_;
    std::string source_;
    size_t off_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    N2F_CHECK_IO(out.good(), "cannot open %s for writing", path.c_str());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    N2F_CHECK_IO(out.good(), "failed writing %zu bytes to %s", bytes.size(), path.c_str());
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    N2F_CHECK_IO(in.good(), "cannot open %s", path.c_str());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    N2F_CHECK_IO(!in.bad(), "read failure on %s", path.c_str());
    return data;
}

}  // namespace n2f::binio
