#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ibpa/errors.hpp"
#include "ibpa/geometry.hpp"

namespace ibpa {

// Joint index used for whole-object (full-body) appearance queries.
inline constexpr std::int32_t kFullBodyJoint = -1;

struct EmbeddingKey {
  std::int64_t video = 0;
  std::int64_t frame = 0;
  std::int32_t person = 0;
  std::int32_t joint = 0;

  friend auto operator<=>(const EmbeddingKey&, const EmbeddingKey&) = default;
};

std::string to_string(const EmbeddingKey& key);

struct PatchQuery {
  EmbeddingKey key;
  Vec2 center;
  // Side length of the square window (patch queries) or box height (full body).
  double size = 0.0;
};

class MissingEmbeddingError : public DataError {
 public:
  explicit MissingEmbeddingError(const EmbeddingKey& key);
  const EmbeddingKey& key() const { return key_; }

 private:
  EmbeddingKey key_;
};

// Source of appearance vectors for joint-centered patches and whole objects.
// Implementations must return the same vector for the same query and be safe
// for concurrent const calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const PatchQuery& query) const = 0;
};

// Precomputed vectors keyed by (video, frame, person, joint).
class EmbeddingTable {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit EmbeddingTable(int dim = 0) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  void insert(const EmbeddingKey& key, std::vector<float> values);
  const std::vector<float>* find(const EmbeddingKey& key) const;

  const std::map<EmbeddingKey, std::vector<float>>& rows() const { return rows_; }

  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  int dim_;
  std::map<EmbeddingKey, std::vector<float>> rows_;
};

// File-lookup provider; unknown keys raise MissingEmbeddingError.
class TableEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit TableEmbeddingProvider(std::shared_ptr<const EmbeddingTable> table);
  static TableEmbeddingProvider from_file(const std::filesystem::path& path);

  int dim() const override { return table_->dim(); }
  std::vector<double> embed(const PatchQuery& query) const override;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
};

// Deterministic pseudo-random projection of the query (key, window center and
// size) through a fixed seeded matrix. Carries no class information.
class StubEmbeddingProvider : public EmbeddingProvider {
 public:
  StubEmbeddingProvider(int dim, std::uint64_t seed);

  int dim() const override { return dim_; }
  std::vector<double> embed(const PatchQuery& query) const override;

 private:
  static constexpr int kInputs = 8;
  int dim_;
  std::uint64_t seed_;
  std::vector<double> projection_;  // dim x kInputs
};

struct ClassSignalOptions {
  int dim = 64;
  int classes = 2;
  double strength = 2.0;  // norm of each class mean
  double noise = 1.0;     // per-component standard deviation
  std::uint64_t mean_seed = 0;   // class means; shared by every split of a dataset
  std::uint64_t noise_seed = 0;  // per-key noise
};

// Synthetic appearance: a per-(class, joint slot) mean plus keyed Gaussian
// noise. Values are rounded to float so a table written from this provider
// reproduces it exactly.
class ClassSignalEmbeddingProvider : public EmbeddingProvider {
 public:
  ClassSignalEmbeddingProvider(ClassSignalOptions options,
                               std::map<std::int64_t, int> video_labels);

  int dim() const override { return options_.dim; }
  std::vector<double> embed(const PatchQuery& query) const override;

  // Joint slots: contact joints 0..4 in contact order, then full body.
  static constexpr int kSlots = 6;

 private:
  ClassSignalOptions options_;
  std::map<std::int64_t, int> video_labels_;
  std::vector<double> means_;  // classes x kSlots x dim
};

}  // namespace ibpa
