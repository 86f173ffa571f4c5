#include "atdn/digest.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <stdexcept>

namespace atdn {

std::array<unsigned char, 32> sha256(const void* data, std::size_t len) {
  std::array<unsigned char, 32> out{};
  unsigned int out_len = 0;
  if (!EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) ||
      out_len != out.size())
    throw std::runtime_error("sha256 failed");
  return out;
}

std::string sha256_hex(const std::string& data) {
  const auto d = sha256(data.data(), data.size());
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (unsigned char b : d) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0xF]);
  }
  return s;
}

std::uint32_t crc32_of(const void* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

}  // namespace atdn
