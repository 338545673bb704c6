#pragma once

#include <array>

#include "ibpa/features.hpp"
#include "ibpa/skeleton.hpp"

namespace ibpa {

// How a subject part's distance to the other person is aggregated over the
// other person's parts.
enum class DistanceAggregation { Min, Mean };

struct PartDistances {
  std::array<double, kPartCount> d{};
  std::array<bool, kPartCount> present{};
};

PartDistances part_distance(const Skeleton15& subject, const Skeleton15& other,
                            DistanceAggregation aggregation = DistanceAggregation::Min);

struct RawPartWeights {
  std::array<double, kPartCount> pw{};
  std::array<bool, kPartCount> present{};
};

// |d_cur - d_prev| per part; zero and absent when either side is absent.
RawPartWeights part_weight_raw(const PartDistances& d_cur, const PartDistances& d_prev);

enum class AttentionMode {
  // Weight inversely proportional to the part's distance change.
  AsWritten,
  // Weight proportional to the part's share of the total change.
  Proportional,
};

struct AttentionParams {
  double scale = 0.2;  // S
  double eps = 1e-6;   // floor on pw
  double cap = 5.0;    // upper bound on each weight
  AttentionMode mode = AttentionMode::AsWritten;

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct AttentionWeights {
  std::array<double, kPartCount> lambda{};
  double scale = 0.0;
  std::array<bool, kPartCount> capped{};
};

AttentionWeights attention(const RawPartWeights& pw, const AttentionParams& params);
AttentionWeights attention(const std::array<double, kPartCount>& pw, const AttentionParams& params);

struct WeightedFeatures {
  PartVectors wv;
  PartVectors wa;
  PatchEmbedding wf;
};

// Scales per-part motion by its weight and each contact-joint embedding by the
// weight of the part that owns the joint.
WeightedFeatures apply_attention(const AttentionWeights& weights, const PartVectors& v,
                                 const PartVectors& a, const PatchEmbedding& pf);

// Argmax over the weights; ties go to the lowest part index.
BodyPart most_active_part(const AttentionWeights& weights);

}  // namespace ibpa
