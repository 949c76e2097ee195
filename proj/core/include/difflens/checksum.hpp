#pragma once

#include <cstdint>
#include <span>

namespace difflens {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes);

}  // namespace difflens
