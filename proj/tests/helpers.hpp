#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ibpa/random.hpp"
#include "ibpa/sequence_model.hpp"
#include "ibpa/skeleton.hpp"

namespace ibpa::testing {

inline Joint at(double x, double y) { return {{x, y}, true, false}; }

// Plausible upright skeleton around (cx, cy) with every joint valid.
inline Skeleton15 standing(double cx = 0.0, double cy = 0.0, int id = 0) {
  static constexpr std::array<Vec2, kJointCount> kShape{{
      {0, -150}, {0, -125}, {14, -120}, {20, -92}, {22, -66}, {-14, -120}, {-20, -92}, {-22, -66},
      {9, 0},    {11, 45},  {12, 90},   {-9, 0},   {-11, 45}, {-12, 90},   {0, 0}}};
  Skeleton15 s;
  s.person_id = id;
  for (int j = 0; j < kJointCount; ++j) s.joints[j] = at(cx + kShape[j].x, cy + kShape[j].y);
  return s;
}

inline Skeleton15 random_skeleton(Rng& rng, int id = 0) {
  Skeleton15 s;
  s.person_id = id;
  for (auto& j : s.joints) j = at(rng.uniform(-100, 100), rng.uniform(-100, 100));
  return s;
}

// Rotation by angle, scaling by k, then translation by (tx, ty).
inline Skeleton15 transform(const Skeleton15& s, double angle, double k, Vec2 t) {
  Skeleton15 out = s;
  const double c = std::cos(angle), sn = std::sin(angle);
  for (auto& j : out.joints) {
    const Vec2 p = j.pos;
    j.pos = {k * (c * p.x - sn * p.y) + t.x, k * (sn * p.x + c * p.y) + t.y};
  }
  return out;
}

inline SequenceSample random_sample(Rng& rng, int segments, int persons, int cf_dim, int desc_dim, int classes) {
  SequenceSample x(segments, persons, cf_dim, desc_dim);
  for (double& v : x.cf) v = rng.uniform(-1, 1);
  for (double& v : x.descriptor) v = rng.uniform(-1, 1);
  for (auto& m : x.person_mask) m = 1;
  for (auto& m : x.segment_mask) m = 1;
  x.label = static_cast<int>(rng.below(classes));
  return x;
}

inline ModelDims tiny_dims(int classes = 4) {
  ModelDims d;
  d.cf_dim = 5;
  d.desc_dim = 4;
  d.persons = 2;
  d.sub_hidden = 8;
  d.fusion_hidden = 16;
  d.classes = classes;
  return d;
}

}  // namespace ibpa::testing
