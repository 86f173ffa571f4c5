#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace atdn {

std::array<unsigned char, 32> sha256(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);

std::uint32_t crc32_of(const void* data, std::size_t len);

}  // namespace atdn
