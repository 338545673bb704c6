#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ibpa/adam.hpp"
#include "ibpa/config.hpp"
#include "ibpa/cooccurrence.hpp"
#include "ibpa/dataset.hpp"
#include "ibpa/embedding.hpp"
#include "ibpa/pipeline.hpp"
#include "ibpa/sequence_model.hpp"

namespace ibpa {

// Per-dimension z-score of the joint and descriptor streams, fitted on the
// present entries of the training samples. Dimensions with no spread map to 0.
struct Standardizer {
  std::vector<double> cf_mean;
  std::vector<double> cf_scale;
  std::vector<double> desc_mean;
  std::vector<double> desc_scale;

  bool empty() const { return cf_mean.empty() && desc_mean.empty(); }
  static Standardizer fit(std::span<const SequenceSample> samples);
  // Masked entries stay zero.
  void apply(SequenceSample& sample) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct Checkpoint {
  PipelineConfig config;
  std::vector<std::string> classes;
  ModelParams params;
  AdamState adam;
  Codebook codebook;
  Standardizer standardizer;
  std::string rng_state;
  std::vector<double> epoch_loss;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in, const std::string& source);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Called after every epoch with the 1-based epoch and its mean batch loss.
using EpochObserver = std::function<void(int epoch, double loss)>;

// Fits the codebook and the model on already extracted clips.
Checkpoint train_from_clips(std::span<const ClipFeatures> clips, const std::vector<std::string>& classes,
                            const PipelineConfig& cfg, const EpochObserver& on_epoch = {});

Checkpoint train(std::span<const VideoRecord> records, const std::vector<std::string>& classes,
                 const PipelineConfig& cfg, const EmbeddingProvider& provider, const EpochObserver& on_epoch = {});

// Builds the standardized model input for one clip under a checkpoint.
SequenceSample prepare_sample(const Checkpoint& ckpt, const ClipFeatures& clip);

struct EvalReport {
  std::vector<std::string> classes;
  std::int64_t samples = 0;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // 0 for classes without samples
  std::vector<std::int64_t> confusion;     // C x C, row = true class
  std::vector<int> predictions;            // in input order

  std::int64_t cell(int truth, int predicted) const {
    return confusion[static_cast<std::size_t>(truth) * classes.size() + predicted];
  }
  void write_confusion_csv(std::ostream& out) const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport make_report(const std::vector<std::string>& classes, std::span<const int> labels,
                       std::span<const int> predictions);

// Throws DataError when the test vocabulary differs from the checkpoint's.
EvalReport evaluate(const Checkpoint& ckpt, std::span<const VideoRecord> test,
                    const std::vector<std::string>& classes, const EmbeddingProvider& provider);
EvalReport evaluate_clips(const Checkpoint& ckpt, std::span<const ClipFeatures> clips);

// Throws DataError when cfg would extract different features than ckpt.
void require_feature_compatible(const Checkpoint& ckpt, const PipelineConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class, a seeded shuffle puts round(test_fraction * n_c) records in test.
Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed);
// One split per record, holding out that record.
std::vector<Split> leave_one_out(std::size_t count);

}  // namespace ibpa
