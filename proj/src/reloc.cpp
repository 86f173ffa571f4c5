#include "atdn/reloc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "atdn/digest.hpp"
#include "atdn/errors.hpp"

namespace atdn {

namespace {

constexpr char kMapMagic[8] = {'A', 'T', 'D', 'N', 'M', 'A', 'P', '1'};

double embedding_distance(const std::vector<float>& a, const std::vector<float>& b,
                          DistanceMetric metric) {
  double acc = 0.0;
  if (metric == DistanceMetric::L2) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = double(a[i]) - double(b[i]);
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::fabs(double(a[i]) - double(b[i]));
  return acc;
}

}  // namespace

EmbeddingMap build_map(const MapModel<float>& model,
                       const std::vector<Frame>& keyframes) {
  if (keyframes.empty()) throw DataError("build_map: no keyframes (empty map rejected)");
  EmbeddingMap map;
  map.dim = model.cfg.embed_dim;
  map.fingerprint = params_fingerprint(model.params());
  std::int64_t prev = -1;
  for (const auto& frame : keyframes) {
    if (!frame.pose)
      throw DataError("build_map: keyframe " + std::to_string(frame.frame_id) +
                      " has no pose");
    if (frame.frame_id <= prev)
      throw DataError("build_map: keyframe ids must increase");
    prev = frame.frame_id;
    // rng == nullptr: deterministic mean-only embedding regardless of the
    // variational flag
    Embedding e = encode(model, frame.image, frame.frame_id, nullptr);
    map.records.push_back({frame.frame_id, std::move(e.values), *frame.pose});
  }
  return map;
}

std::vector<std::size_t> candidates(const std::vector<double>& profile,
                                    const CandidatePolicy& policy) {
  if (profile.empty()) throw DataError("candidates: empty distance profile");
  const std::size_t argmin =
      std::min_element(profile.begin(), profile.end()) - profile.begin();
  std::vector<std::size_t> out;
  switch (policy.kind) {
    case CandidatePolicy::Kind::ZScore: {
      const double mean =
          std::accumulate(profile.begin(), profile.end(), 0.0) / profile.size();
      double var = 0.0;
      for (double d : profile) var += (d - mean) * (d - mean);
      const double sd = std::sqrt(var / profile.size());
      const double cut = mean - policy.zscore_k * sd;
      for (std::size_t i = 0; i < profile.size(); ++i)
        if (profile[i] < cut) out.push_back(i);
      break;
    }
    case CandidatePolicy::Kind::Bottom: {
      const auto count = static_cast<std::size_t>(
          std::clamp(policy.bottom_q, 0.0, 1.0) * profile.size());
      std::vector<std::size_t> order(profile.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profile[a] < profile[b];
      });
      out.assign(order.begin(), order.begin() + std::max<std::size_t>(count, 1));
      std::sort(out.begin(), out.end());
      break;
    }
  }
  if (std::find(out.begin(), out.end(), argmin) == out.end()) {
    out.push_back(argmin);
    std::sort(out.begin(), out.end());
  }
  return out;
}

RelocResult query(const EmbeddingMap& map, const MapModel<float>& model,
                  const std::vector<float>& image, const CandidatePolicy& policy,
                  DistanceMetric metric) {
  if (map.records.empty()) throw DataError("query: empty map");
  if (map.dim != model.cfg.embed_dim)
    throw DataError("query: map dimension does not match the model");
  const Embedding q = encode(model, image, -1, nullptr);

  RelocResult result;
  result.profile.reserve(map.records.size());
  for (const auto& rec : map.records)
    result.profile.push_back(embedding_distance(q.values, rec.embedding, metric));
  const std::size_t best =
      std::min_element(result.profile.begin(), result.profile.end()) -
      result.profile.begin();
  result.best_frame_id = map.records[best].frame_id;
  result.best_distance = result.profile[best];
  result.candidates = candidates(result.profile, policy);
  return result;
}

RelativePose refine(const EmbeddingMap& map, const VoModel<float>& vo,
                    const FlowProvider& flow_between, std::int64_t best_id,
                    const Frame& query_frame) {
  if (!flow_between) throw DataError("refine: no flow source available");
  const FlowField flow = flow_between(best_id, query_frame.frame_id);
  return delta_to_relative(predict_delta(vo, flow));
}

RelocResult relocalize(const EmbeddingMap& map, const MapModel<float>& map_model,
                       const VoModel<float>& vo, const Frame& query_frame,
                       const FlowProvider* flow_between,
                       const CandidatePolicy& policy, DistanceMetric metric) {
  RelocResult result = query(map, map_model, query_frame.image, policy, metric);
  if (!flow_between) return result;
  // One round of the match-search: refine every candidate, keep the delta
  // with the smallest translation norm.
  double best_norm = std::numeric_limits<double>::infinity();
  for (std::size_t idx : result.candidates) {
    const std::int64_t id = map.records[idx].frame_id;
    const RelativePose delta = refine(map, vo, *flow_between, id, query_frame);
    const double norm = std::sqrt(delta.t[0] * delta.t[0] + delta.t[1] * delta.t[1] +
                                  delta.t[2] * delta.t[2]);
    if (norm < best_norm) {
      best_norm = norm;
      result.refined = delta;
      result.refined_from_id = id;
    }
  }
  return result;
}

Pose refined_absolute(const EmbeddingMap& map, std::int64_t keyframe_id,
                      const RelativePose& delta) {
  for (const auto& rec : map.records)
    if (rec.frame_id == keyframe_id) return compose(rec.pose, delta);
  throw DataError("refined_absolute: keyframe " + std::to_string(keyframe_id) +
                  " is not in the map");
}

// --- persistence -------------------------------------------------------------

namespace {

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(const std::string& bytes, std::size_t& pos, const char* what) {
  if (pos + sizeof(T) > bytes.size())
    throw DataError(std::string("map file truncated while reading ") + what);
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

}  // namespace

void save_map(const EmbeddingMap& map, const std::string& path) {
  if (map.records.empty()) throw DataError("save_map: empty map rejected");
  std::string bytes;
  bytes.append(kMapMagic, 8);
  put<std::uint32_t>(bytes, 1);
  put<std::uint32_t>(bytes, static_cast<std::uint32_t>(map.dim));
  put<std::uint64_t>(bytes, map.records.size());
  bytes.append(reinterpret_cast<const char*>(map.fingerprint.data()), 32);
  for (const auto& rec : map.records) {
    if (static_cast<long>(rec.embedding.size()) != map.dim)
      throw DataError("save_map: record embedding dimension mismatch");
    put<std::uint64_t>(bytes, static_cast<std::uint64_t>(rec.frame_id));
    const Pose& p = rec.pose;
    const double row_major[12] = {p.R[0], p.R[1], p.R[2], p.t[0],
                                  p.R[3], p.R[4], p.R[5], p.t[1],
                                  p.R[6], p.R[7], p.R[8], p.t[2]};
    bytes.append(reinterpret_cast<const char*>(row_major), sizeof row_major);
    bytes.append(reinterpret_cast<const char*>(rec.embedding.data()),
                 rec.embedding.size() * sizeof(float));
  }
  put<std::uint32_t>(bytes, crc32_of(bytes.data(), bytes.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open map file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed to write map file: " + path);
}

EmbeddingMap load_map(const std::string& path, std::size_t max_bytes) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot stat map file: " + path);
  if (size > max_bytes)
    throw DataError("map file exceeds the read cap: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open map file: " + path);
  std::string bytes(static_cast<std::size_t>(size), '\0');
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw DataError("failed to read map file: " + path);

  if (bytes.size() < 12 + 8 + 32 + 4 ||
      std::memcmp(bytes.data(), kMapMagic, 8) != 0)
    throw DataError("bad magic: not an ATDNMAP1 file: " + path);

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(bytes.data(), bytes.size() - 4) != stored_crc)
    throw DataError("map file checksum mismatch: " + path);

  std::size_t pos = 8;
  const auto version = take<std::uint32_t>(bytes, pos, "version");
  if (version != 1) throw DataError("unsupported map file version");
  const auto dim = take<std::uint32_t>(bytes, pos, "dimension");
  const auto count = take<std::uint64_t>(bytes, pos, "record count");
  if (dim == 0) throw DataError("map file has zero embedding dimension");
  if (count == 0) throw DataError("map file holds no records");
  const std::uint64_t record_size = 8 + 12 * 8 + std::uint64_t(dim) * 4;
  if (count * record_size + pos + 32 + 4 != bytes.size())
    throw DataError("map file size does not match its record count");

  EmbeddingMap map;
  map.dim = static_cast<long>(dim);
  std::memcpy(map.fingerprint.data(), bytes.data() + pos, 32);
  pos += 32;
  std::int64_t prev = -1;
  for (std::uint64_t r = 0; r < count; ++r) {
    KeyframeRecord rec;
    rec.frame_id =
        static_cast<std::int64_t>(take<std::uint64_t>(bytes, pos, "frame id"));
    if (rec.frame_id < prev) throw DataError("map records out of order");
    prev = rec.frame_id;
    double row_major[12];
    std::memcpy(row_major, bytes.data() + pos, sizeof row_major);
    pos += sizeof row_major;
    rec.pose = Pose({row_major[0], row_major[1], row_major[2], row_major[4],
                     row_major[5], row_major[6], row_major[8], row_major[9],
                     row_major[10]},
                    {row_major[3], row_major[7], row_major[11]});
    rec.embedding.resize(dim);
    std::memcpy(rec.embedding.data(), bytes.data() + pos, std::size_t(dim) * 4);
    pos += std::size_t(dim) * 4;
    map.records.push_back(std::move(rec));
  }
  return map;
}

}  // namespace atdn
