#include <cstring>
#include <fstream>
#include <sstream>

#include "atdn/digest.hpp"
#include "atdn/errors.hpp"
#include "atdn/nn.hpp"

namespace atdn {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'D', 'N', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.append(reinterpret_cast<const char*>(&v), 2);
}

}  // namespace

std::string serialize_params(const std::vector<NamedParam<float>>& params) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, 1);
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw DataError("parameter name too long");
    put_u16(out, static_cast<std::uint16_t>(p.name.size()));
    out.append(p.name);
    put_u32(out, static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (long e : p.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    out.append(reinterpret_cast<const char*>(p.tensor.value().data()),
               p.tensor.value().size() * sizeof(float));
  }
  return out;
}

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam<float>>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  const std::string bytes = serialize_params(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed to write checkpoint: " + path);
}

void load_checkpoint(const std::string& path,
                     std::vector<NamedParam<float>>& params,
                     std::size_t max_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("bad magic: not an ATDNCKPT file: " + path);
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), 4) || version != 1)
    throw DataError("unsupported checkpoint version: " + path);

  for (auto& p : params) {
    std::uint16_t name_len = 0;
    if (!in.read(reinterpret_cast<char*>(&name_len), 2))
      throw DataError("checkpoint truncated before parameter '" + p.name + "'");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw DataError("checkpoint truncated in a parameter name");
    if (name != p.name)
      throw DataError("checkpoint parameter mismatch: expected '" + p.name +
                      "', found '" + name + "'");
    std::uint32_t rank = 0;
    if (!in.read(reinterpret_cast<char*>(&rank), 4))
      throw DataError("checkpoint truncated at rank of '" + name + "'");
    if (rank != p.tensor.shape().size())
      throw DataError("checkpoint rank mismatch for '" + name + "'");
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      std::uint32_t extent = 0;
      if (!in.read(reinterpret_cast<char*>(&extent), 4))
        throw DataError("checkpoint truncated at shape of '" + name + "'");
      if (extent != static_cast<std::uint32_t>(p.tensor.shape()[r]))
        throw DataError("checkpoint shape mismatch for '" + name + "'");
      count *= extent;
    }
    if (count * sizeof(float) > max_bytes)
      throw DataError("checkpoint parameter '" + name + "' exceeds the read cap");
    if (!in.read(reinterpret_cast<char*>(p.tensor.value().data()),
                 static_cast<std::streamsize>(count * sizeof(float))))
      throw DataError("checkpoint truncated in payload of '" + name + "'");
  }
  char extra;
  if (in.read(&extra, 1))
    throw DataError("checkpoint holds more parameters than the model expects");
}

std::array<unsigned char, 32> params_fingerprint(
    const std::vector<NamedParam<float>>& params) {
  const std::string bytes = serialize_params(params);
  return sha256(bytes.data(), bytes.size());
}

}  // namespace atdn
