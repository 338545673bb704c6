#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ibpa/dataset.hpp"
#include "ibpa/embedding.hpp"

namespace ibpa {

enum class MoveKind {
  // The part's distal joint travels to the target (middle joint halfway).
  Reach,
  // The whole body translates toward the other person.
  Approach,
};

struct Movement {
  int actor = 0;  // 0 = subject, 1 = other
  BodyPart part = BodyPart::RightArm;
  BodyPart target = BodyPart::Torso;  // part of the other actor
  MoveKind kind = MoveKind::Reach;
};

struct ClassDesign {
  std::string name;
  std::vector<Movement> moves;
  // The approach completes over a random fraction of the clip drawn from
  // [approach_min, approach_max]; smaller is faster.
  double approach_min = 0.4;
  double approach_max = 0.6;
};

struct SyntheticSpec {
  std::vector<ClassDesign> classes;
  double joint_noise = 1.5;  // pixels, per joint per frame
  int clip_min = 40;         // frames
  int clip_max = 60;
  double drop_rate = 0.02;   // probability a joint is reported missing
  double signal_strength = 2.0;
  double embedding_noise = 1.0;
  int embedding_dim = 16;
  double fps = 25.0;
  std::uint64_t signal_seed = 20201;  // class means; keep fixed across splits

  void validate() const;
};

// shake, kick, hug and push analogues.
SyntheticSpec default_synthetic_spec();

struct SyntheticData {
  Dataset dataset;
  std::shared_ptr<const ClassSignalEmbeddingProvider> provider;
};

// Two people per clip; labels cycle through the classes so counts are
// balanced. Person 0 in every frame is the subject. Fully determined by
// (spec, count, seed, first_video_id).
SyntheticData synth_generate(const SyntheticSpec& spec, int count, std::uint64_t seed,
                             std::int64_t first_video_id = 0);

// Materializes every key the pipeline can query for a dataset whose people
// are listed in a stable order: each frame, detection index as person id,
// contact joints plus the full-body slot.
EmbeddingTable build_embedding_table(const Dataset& data, const EmbeddingProvider& provider);

}  // namespace ibpa
