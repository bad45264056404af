#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "spikedec/errors.hpp"

namespace spikedec::detail {

// Little-endian byte buffer helpers shared by the binary file formats.

inline void put_u8(std::vector<std::uint8_t>& buf, std::uint8_t v) { buf.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t len, std::string what)
        : p_(p), left_(len), what_(std::move(what)) {}

    std::uint8_t u8() {
        need(1);
        --left_;
        return *p_++;
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(p_[0] | (p_[1] << 8));
        p_ += 2;
        left_ -= 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[i]) << (8 * i);
        p_ += 4;
        left_ -= 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
        p_ += 8;
        left_ -= 8;
        return std::bit_cast<double>(bits);
    }
    std::size_t left() const { return left_; }

private:
    void need(std::size_t n) const {
        if (left_ < n) throw TruncatedError(what_ + ": truncated payload");
    }

    const std::uint8_t* p_;
    std::size_t left_;
    std::string what_;
};

// Reads a whole framed file (4-byte magic, u32 version, payload, trailing
// CRC32 of the payload) and returns the payload bytes.
std::vector<std::uint8_t> read_framed_file(const std::string& path, const char magic[4],
                                           std::uint32_t expected_version, const std::string& what);
void write_framed_file(const std::string& path, const char magic[4], std::uint32_t version,
                       const std::vector<std::uint8_t>& payload);

}  // namespace spikedec::detail
