#include "spikedec/detail/bytes.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "spikedec/data.hpp"

namespace spikedec::detail {

std::vector<std::uint8_t> read_framed_file(const std::string& path, const char magic[4],
                                           std::uint32_t expected_version,
                                           const std::string& what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw TruncatedError(what + ": shorter than header");
    if (std::memcmp(bytes.data(), magic, 4) != 0) throw FormatError(what + ": bad magic bytes");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (version != expected_version)
        throw FormatError(what + ": unsupported format version " + std::to_string(version));
    if (bytes.size() < 12) throw TruncatedError(what + ": missing checksum");

    const std::size_t payload_len = bytes.size() - 12;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(bytes[8 + payload_len + i]) << (8 * i);
    if (crc32(bytes.data() + 8, payload_len) != stored)
        throw ChecksumError(what + ": checksum mismatch");
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(payload_len));
}

void write_framed_file(const std::string& path, const char magic[4], std::uint32_t version,
                       const std::vector<std::uint8_t>& payload) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(magic, 4);
    std::vector<std::uint8_t> tmp;
    put_u32(tmp, version);
    put_u32(tmp, crc32(payload.data(), payload.size()));
    f.write(reinterpret_cast<const char*>(tmp.data()), 4);
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    f.write(reinterpret_cast<const char*>(tmp.data()) + 4, 4);
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace spikedec::detail
