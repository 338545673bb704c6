#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "ibpa/embedding.hpp"
#include "ibpa/skeleton.hpp"

namespace ibpa {

// One 2-D vector per body part; absent parts hold zero.
struct PartVectors {
  std::array<Vec2, kPartCount> value{};
  std::array<bool, kPartCount> present{};
};

template <std::size_t N>
struct AngleSet {
  std::array<double, N> theta{};
  std::array<bool, N> degenerate{};
};

using InnerAngles = AngleSet<kPartCount>;
using OuterAngles = AngleSet<kOuterAngleCount>;

inline constexpr double kDegenerateLength = 1e-9;

// Angle at q1 between (q1 - q2) and (q1 - q3); nullopt when any joint is
// invalid or either arm is shorter than kDegenerateLength.
std::optional<double> joint_angle(const Joint& q1, const Joint& q2, const Joint& q3);

// Per part: mean displacement of joints valid in both frames.
PartVectors velocity(const Skeleton15& prev, const Skeleton15& cur);
PartVectors acceleration(const PartVectors& v_prev, const PartVectors& v_cur);

InnerAngles inner_angles(const Skeleton15& skel);
OuterAngles outer_angles(const Skeleton15& skel);

// Five D-vectors, one per contact joint (kContactJoints order).
struct PatchEmbedding {
  int dim = 0;
  std::vector<double> vectors;  // kContactJointCount x dim
  std::array<bool, kContactJointCount> joint_valid{};

  explicit PatchEmbedding(int d = 0) : dim(d), vectors(static_cast<std::size_t>(d) * kContactJointCount) {}

  std::span<double> slot(int i) { return {vectors.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)}; }
  std::span<const double> slot(int i) const {
    return {vectors.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
};

struct QueryContext {
  std::int64_t video = 0;
  std::int64_t frame = 0;
};

// Queries an n x n window at each valid contact joint. Invalid joints give
// zero vectors. Provider failures propagate.
PatchEmbedding patch_embeddings(const EmbeddingProvider& provider, const Skeleton15& skel,
                                int patch_size, const QueryContext& ctx);

}  // namespace ibpa
