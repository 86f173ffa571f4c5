#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atdn/dataio.hpp"
#include "atdn/geometry.hpp"
#include "atdn/mapping.hpp"
#include "atdn/odometry.hpp"

namespace atdn {

struct KeyframeRecord {
  std::int64_t frame_id;
  std::vector<float> embedding;
  Pose pose;
};

struct EmbeddingMap {
  std::vector<KeyframeRecord> records;  // non-decreasing frame ids
  long dim = 0;
  std::array<unsigned char, 32> fingerprint{};  // sha256 of the source model
};

enum class DistanceMetric { L2, L1 };

struct CandidatePolicy {
  enum class Kind { ZScore, Bottom } kind = Kind::ZScore;
  double zscore_k = 2.0;  // keep distances below mean - k*std
  double bottom_q = 0.25; // keep the lowest q-quantile
};

struct RelocResult {
  std::int64_t best_frame_id = -1;
  double best_distance = 0.0;
  std::vector<double> profile;          // one distance per map record
  std::vector<std::size_t> candidates;  // indices into profile
  std::optional<RelativePose> refined;  // VO delta keyframe -> query
  std::int64_t refined_from_id = -1;    // keyframe the refinement used
};

// Embeds every keyframe with the variational path disabled so a rebuild is
// byte-identical. Frames must carry poses.
EmbeddingMap build_map(const MapModel<float>& model,
                       const std::vector<Frame>& keyframes);

std::vector<std::size_t> candidates(const std::vector<double>& profile,
                                    const CandidatePolicy& policy);

// Three steps: embed the query, measure the distance to every stored
// embedding, take the minimum (ties break to the lowest frame id).
RelocResult query(const EmbeddingMap& map, const MapModel<float>& model,
                  const std::vector<float>& image,
                  const CandidatePolicy& policy = {},
                  DistanceMetric metric = DistanceMetric::L2);

using FlowProvider =
    std::function<FlowField(std::int64_t from_id, std::int64_t to_id)>;

// VO-predicted relative pose from the stored keyframe to the query frame.
RelativePose refine(const EmbeddingMap& map, const VoModel<float>& vo,
                    const FlowProvider& flow_between, std::int64_t best_id,
                    const Frame& query_frame);

// Full loosely-coupled relocalization: query, then refine every candidate and
// keep the one whose delta has the smallest translation norm (one round).
RelocResult relocalize(const EmbeddingMap& map, const MapModel<float>& map_model,
                       const VoModel<float>& vo, const Frame& query_frame,
                       const FlowProvider* flow_between = nullptr,
                       const CandidatePolicy& policy = {},
                       DistanceMetric metric = DistanceMetric::L2);

// Map file: "ATDNMAP1" | u32 version=1 | u32 D | u64 count | 32-byte model
// fingerprint | records (u64 frame_id, 12 f64 row-major 3x4 pose, D f32
// embedding) | trailing CRC32 over all preceding bytes. Little-endian.
void save_map(const EmbeddingMap& map, const std::string& path);
EmbeddingMap load_map(const std::string& path,
                      std::size_t max_bytes = kDefaultReadCap);

// Compose the chosen keyframe pose with the refined delta.
Pose refined_absolute(const EmbeddingMap& map, std::int64_t keyframe_id,
                      const RelativePose& delta);

}  // namespace atdn
