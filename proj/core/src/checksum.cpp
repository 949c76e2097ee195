#include "difflens/checksum.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

namespace difflens {

std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes) {
    uLong acc = crc;
    const std::uint8_t* p = bytes.data();
    std::size_t left = bytes.size();
    // zlib takes uInt lengths
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, std::numeric_limits<uInt>::max()));
        acc = ::crc32(acc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(acc);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    return crc32_update(static_cast<std::uint32_t>(::crc32(0L, Z_NULL, 0)), bytes);
}

}  // namespace difflens
