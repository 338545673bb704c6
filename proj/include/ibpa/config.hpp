#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ibpa/adam.hpp"
#include "ibpa/attention.hpp"
#include "ibpa/cooccurrence.hpp"
#include "json.hpp"

namespace ibpa {

enum class AttentionPairing { Nearest, AllPairsMean };
enum class InitDistribution { Uniform, Normal };

// Which feature streams reach the classifier.
enum class Ablation {
  Full,
  Baseline1,  // joint-based streams only; descriptor zeroed
  Baseline2,  // descriptor only; joint-based streams zeroed
};

struct PipelineConfig {
  // Pose post-processing.
  int interp_max_gap = 10;
  double track_iou = 0.3;

  // Segmentation and joint features.
  int segment_length = 20;
  int segments = 20;
  int patch_size = 32;
  int embedding_dim = 64;  // for stub and synthetic providers
  bool per_frame_patches = false;

  AttentionParams attention;
  AttentionPairing pairing = AttentionPairing::Nearest;
  DistanceAggregation aggregation = DistanceAggregation::Min;

  // Full-body descriptor.
  int codebook_size = 20;
  int kmeans_max_iter = 100;
  CoocParams cooc;

  // Model.
  int persons = 2;
  int sub_hidden = 200;
  int fusion_hidden = 625;
  bool shared_sub = true;
  InitDistribution init = InitDistribution::Uniform;
  double init_range = 0.08;
  double init_stddev = 0.01;

  // Training.
  AdamOptions adam;
  double l2 = 0.5e-3;
  int batch_size = 32;
  int epochs = 10;
  bool standardize = true;
  Ablation ablation = Ablation::Full;

  std::uint64_t seed = 1;
  int threads = 1;

  // Throws std::invalid_argument naming the first offending field.
  void validate() const;

  // Small dimensions for single-core runs on synthetic data.
  static PipelineConfig desk_profile();

  // Hash of every setting that changes extracted features.
  std::uint64_t feature_hash() const;
  // Hash of the whole configuration.
  std::uint64_t hash() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

// Enums use fixed lowercase names; unknown names throw std::invalid_argument.
void to_json(nlohmann::json& j, const AttentionMode& e);
void from_json(const nlohmann::json& j, AttentionMode& e);
void to_json(nlohmann::json& j, const AttentionPairing& e);
void from_json(const nlohmann::json& j, AttentionPairing& e);
void to_json(nlohmann::json& j, const DistanceAggregation& e);
void from_json(const nlohmann::json& j, DistanceAggregation& e);
void to_json(nlohmann::json& j, const InitDistribution& e);
void from_json(const nlohmann::json& j, InitDistribution& e);
void to_json(nlohmann::json& j, const Ablation& e);
void from_json(const nlohmann::json& j, Ablation& e);

void to_json(nlohmann::json& j, const PipelineConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, PipelineConfig& c);

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace ibpa
