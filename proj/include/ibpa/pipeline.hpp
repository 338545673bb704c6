#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ibpa/attention.hpp"
#include "ibpa/config.hpp"
#include "ibpa/cooccurrence.hpp"
#include "ibpa/dataset.hpp"
#include "ibpa/embedding.hpp"
#include "ibpa/sequence_model.hpp"

namespace ibpa {

// Length of one person's combined per-segment vector:
// [wf (D), inner angles (5), outer angles (4), wv (5 x 2), wa (5 x 2)].
constexpr int combined_feature_dim(int embedding_dim) {
  return embedding_dim + kPartCount + kOuterAngleCount + 2 * kPartCount + 2 * kPartCount;
}

// Codebook-independent features of one clip, for its real segments only.
struct ClipFeatures {
  std::int64_t video_id = 0;
  int label = -1;
  int real_segments = 0;
  int persons = 0;
  int cf_dim = 0;
  std::vector<int> person_ids;            // track id per person slot, -1 if unfilled
  std::vector<double> cf;                 // real_segments x persons x cf_dim
  std::vector<std::uint8_t> person_mask;  // real_segments x persons
  std::vector<std::vector<SubVolume>> subvolumes;  // per segment, every tracked object
  std::vector<AttentionWeights> attention;         // real_segments x persons
  std::vector<BodyPart> active_part;               // real_segments x persons
};

// Tracks, repairs and segments a clip, then computes attention-weighted
// joint features and full-body sub-volumes per segment.
ClipFeatures extract_clip(const VideoRecord& rec, const PipelineConfig& cfg, const EmbeddingProvider& provider);

// Runs extract_clip over records on cfg.threads workers; output order
// matches input order.
std::vector<ClipFeatures> extract_all(std::span<const VideoRecord> records, const PipelineConfig& cfg,
                                      const EmbeddingProvider& provider);

// Adds the cumulative descriptor and pads or truncates to cfg.segments.
SequenceSample assemble_sample(const ClipFeatures& clip, const PipelineConfig& cfg, const Codebook& codebook);
SequenceSample assemble_sample(const VideoRecord& rec, const PipelineConfig& cfg, const EmbeddingProvider& provider,
                               const Codebook& codebook);

// Per-segment normalized descriptors, row-major K*K each.
std::vector<std::vector<double>> descriptor_trace(const ClipFeatures& clip, const PipelineConfig& cfg,
                                                  const Codebook& codebook);

// k-means over every sub-volume feature of the given clips.
Codebook fit_codebook(std::span<const ClipFeatures> train, const PipelineConfig& cfg);
Codebook fit_codebook(std::span<const VideoRecord> train, const PipelineConfig& cfg,
                      const EmbeddingProvider& provider);

}  // namespace ibpa
