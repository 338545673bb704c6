#include "ibpa/features.hpp"

#include <algorithm>
#include <cmath>

namespace ibpa {

std::optional<double> joint_angle(const Joint& q1, const Joint& q2, const Joint& q3) {
  if (!q1.valid || !q2.valid || !q3.valid) return std::nullopt;
  const Vec2 a = q1.pos - q2.pos;
  const Vec2 b = q1.pos - q3.pos;
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kDegenerateLength || nb < kDegenerateLength) return std::nullopt;
  // atan2 stays well conditioned near 0 and pi, where acos does not.
  return std::atan2(std::abs(a.x * b.y - a.y * b.x), dot(a, b));
}

PartVectors velocity(const Skeleton15& prev, const Skeleton15& cur) {
  if (prev.person_id != cur.person_id) {
    throw std::invalid_argument("velocity: skeletons belong to different people");
  }
  PartVectors out;
  for (BodyPart part : kAllParts) {
    const int p = index_of(part);
    Vec2 sum;
    int count = 0;
    for (int j : kPartJoints[p]) {
      if (prev.joints[j].valid && cur.joints[j].valid) {
        sum += cur.joints[j].pos - prev.joints[j].pos;
        ++count;
      }
    }
    if (count > 0) {
      out.value[p] = {sum.x / count, sum.y / count};
      out.present[p] = true;
    }
  }
  return out;
}

PartVectors acceleration(const PartVectors& v_prev, const PartVectors& v_cur) {
  PartVectors out;
  for (int p = 0; p < kPartCount; ++p) {
    if (v_prev.present[p] && v_cur.present[p]) {
      out.value[p] = v_cur.value[p] - v_prev.value[p];
      out.present[p] = true;
    }
  }
  return out;
}

namespace {

template <std::size_t N>
AngleSet<N> angles_for(const Skeleton15& skel, const std::array<std::array<int, 3>, N>& triples) {
  AngleSet<N> out;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& [a, b, c] = triples[i];
    if (auto theta = joint_angle(skel.joints[a], skel.joints[b], skel.joints[c])) {
      out.theta[i] = *theta;
    } else {
      out.degenerate[i] = true;
    }
  }
  return out;
}

}  // namespace

InnerAngles inner_angles(const Skeleton15& skel) { return angles_for(skel, kPartJoints); }

OuterAngles outer_angles(const Skeleton15& skel) { return angles_for(skel, kOuterTriples); }

PatchEmbedding patch_embeddings(const EmbeddingProvider& provider, const Skeleton15& skel,
                                int patch_size, const QueryContext& ctx) {
  if (patch_size < 2 || patch_size % 2 != 0) {
    throw std::invalid_argument("patch size must be even and at least 2");
  }
  PatchEmbedding out(provider.dim());
  for (int slot = 0; slot < kContactJointCount; ++slot) {
    const int joint = kContactJoints[slot];
    const Joint& j = skel.joints[joint];
    if (!j.valid) continue;
    PatchQuery query{{ctx.video, ctx.frame, skel.person_id, joint}, j.pos,
                     static_cast<double>(patch_size)};
    const std::vector<double> v = provider.embed(query);
    if (static_cast<int>(v.size()) != out.dim) {
      throw ShapeError("embedding provider returned " + std::to_string(v.size()) +
                       " values, expected " + std::to_string(out.dim));
    }
    std::copy(v.begin(), v.end(), out.slot(slot).begin());
    out.joint_valid[slot] = true;
  }
  return out;
}

}  // namespace ibpa
