#pragma once

#include "cnng/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace cnng {

/// CRC-32 (IEEE 802.3, as in zlib/PNG/gzip).
inline std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t crc = 0)
{
    // zlib takes uInt lengths; feed large buffers in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    uLong c = crc;
    while (!bytes.empty()) {
        const auto len = std::min(bytes.size(), kChunk);
        c = ::crc32(c, bytes.data(), static_cast<uInt>(len));
        bytes = bytes.subspan(len);
    }
    return static_cast<std::uint32_t>(c);
}

/// Order-sensitive CRC over labels and the little-endian bit patterns of
/// every pixel.
inline std::uint32_t dataset_fingerprint(const Dataset& data)
{
    std::uint32_t crc = 0;
    std::vector<unsigned char> row(4 + 8 * data.dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint32_t label = data.label(i);
        for (int b = 0; b < 4; ++b)
            row[b] = static_cast<unsigned char>(label >> (8 * b));
        std::size_t at = 4;
        for (double v : data.input(i)) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int b = 0; b < 8; ++b)
                row[at++] = static_cast<unsigned char>(bits >> (8 * b));
        }
        crc = crc32(row, crc);
    }
    return crc;
}

} // namespace cnng
