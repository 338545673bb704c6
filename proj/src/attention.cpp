#include "ibpa/attention.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace ibpa {

PartDistances part_distance(const Skeleton15& subject, const Skeleton15& other,
                            DistanceAggregation aggregation) {
  std::array<std::optional<Vec2>, kPartCount> theirs;
  bool any_other = false;
  for (BodyPart q : kAllParts) {
    theirs[index_of(q)] = part_centroid(other, q);
    any_other = any_other || theirs[index_of(q)].has_value();
  }

  PartDistances out;
  if (!any_other) return out;
  for (BodyPart p : kAllParts) {
    const auto mine = part_centroid(subject, p);
    if (!mine) continue;
    double best = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    int count = 0;
    for (const auto& c : theirs) {
      if (!c) continue;
      const double dist = distance(*mine, *c);
      best = std::min(best, dist);
      sum += dist;
      ++count;
    }
    out.d[index_of(p)] = aggregation == DistanceAggregation::Min ? best : sum / count;
    out.present[index_of(p)] = true;
  }
  return out;
}

RawPartWeights part_weight_raw(const PartDistances& d_cur, const PartDistances& d_prev) {
  RawPartWeights out;
  for (int p = 0; p < kPartCount; ++p) {
    if (d_cur.present[p] && d_prev.present[p]) {
      out.pw[p] = std::abs(d_cur.d[p] - d_prev.d[p]);
      out.present[p] = true;
    }
  }
  return out;
}

AttentionWeights attention(const RawPartWeights& pw, const AttentionParams& params) {
  if (!(params.scale > 0.0) || !(params.eps > 0.0) || !(params.cap > 0.0)) {
    throw std::invalid_argument("attention: scale, eps and cap must be positive");
  }
  std::array<double, kPartCount> floored{};
  double total = 0.0;
  for (int p = 0; p < kPartCount; ++p) {
    floored[p] = pw.present[p] ? std::max(pw.pw[p], params.eps) : params.eps;
    total += floored[p];
  }

  AttentionWeights out;
  out.scale = params.scale;
  for (int p = 0; p < kPartCount; ++p) {
    // The ratio is formed before scaling so that multiplying every pw by a
    // common factor leaves the result bit-identical whenever the scaled
    // inputs and their sum are exact.
    const double raw = params.mode == AttentionMode::AsWritten
                           ? params.scale * (total / floored[p])
                           : kPartCount * params.scale * (floored[p] / total);
    out.capped[p] = raw > params.cap;
    out.lambda[p] = out.capped[p] ? params.cap : raw;
  }
  return out;
}

AttentionWeights attention(const std::array<double, kPartCount>& pw, const AttentionParams& params) {
  RawPartWeights raw;
  raw.pw = pw;
  raw.present.fill(true);
  return attention(raw, params);
}

WeightedFeatures apply_attention(const AttentionWeights& weights, const PartVectors& v,
                                 const PartVectors& a, const PatchEmbedding& pf) {
  WeightedFeatures out{v, a, pf};
  for (int p = 0; p < kPartCount; ++p) {
    out.wv.value[p] = weights.lambda[p] * v.value[p];
    out.wa.value[p] = weights.lambda[p] * a.value[p];
  }
  for (int slot = 0; slot < kContactJointCount; ++slot) {
    const double w = weights.lambda[index_of(kContactJointPart[slot])];
    for (double& x : out.wf.slot(slot)) x *= w;
  }
  return out;
}

BodyPart most_active_part(const AttentionWeights& weights) {
  int best = 0;
  for (int p = 1; p < kPartCount; ++p) {
    if (weights.lambda[p] > weights.lambda[best]) best = p;
  }
  return static_cast<BodyPart>(best);
}

}  // namespace ibpa
