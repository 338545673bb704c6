#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "ibpa/geometry.hpp"

namespace ibpa {

// One object's appearance and motion summary over one segment.
struct SubVolume {
  std::vector<double> f;  // mean appearance vector over the segment
  Vec2 displacement;      // last position - first position
  Vec2 center;            // mean position
  int codeword = -1;
  int object_id = -1;
  int segment = 0;
};

SubVolume build_subvolume(std::span<const std::vector<double>> frame_vectors,
                          std::span<const Vec2> positions, int segment, int object_id = -1);

class Codebook {
 public:
  Codebook() = default;
  Codebook(int k, int dim, std::uint64_t seed, std::vector<double> centroids);

  int k() const { return k_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& centroids() const { return centroids_; }
  std::span<const double> centroid(int i) const {
    return {centroids_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
  }

  // Nearest centroid by Euclidean distance; ties go to the lowest index.
  int assign(std::span<const double> f) const;

  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  int k_ = 0;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> centroids_;  // k x dim
};

struct KMeansResult {
  Codebook codebook;
  std::vector<int> labels;
  // Within-cluster squared error after seeding, then after each iteration.
  std::vector<double> sse_history;
  int iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until assignments stop
// changing or max_iter is reached. Empty clusters take over the sample that
// is farthest from its centroid.
KMeansResult kmeans_fit(std::span<const std::vector<double>> samples, int k, int max_iter,
                        std::uint64_t seed);

double within_cluster_sse(std::span<const std::vector<double>> samples, const Codebook& cb,
                          std::span<const int> labels);

double pair_distance(const SubVolume& a, const SubVolume& b);

// Half the sum of distances over ordered pairs, i.e. the sum over unordered pairs.
double global_distance(std::span<const SubVolume> subvols);

// log of the mean quantization error of two sub-volumes, offset by psi.
double pair_score(std::span<const double> f_i, std::span<const double> w_i,
                  std::span<const double> f_j, std::span<const double> w_j, double psi);

struct CoocParams {
  double psi = std::numbers::e;
  double eps = 1e-6;

  friend bool operator==(const CoocParams&, const CoocParams&) = default;
};

// Cumulative K x K co-occurrence descriptor. Raw sums are stored; the running
// term count is divided out on read, so accumulation is order-consistent.
class CoocMatrix {
 public:
  CoocMatrix() = default;
  explicit CoocMatrix(int k) : k_(k), sum_(static_cast<std::size_t>(k) * k, 0.0) {}

  int k() const { return k_; }
  std::int64_t terms() const { return terms_; }
  double raw(int row, int col) const { return sum_[static_cast<std::size_t>(row) * k_ + col]; }
  double value(int row, int col) const;
  // Row-major normalized entries.
  std::vector<double> normalized() const;

  void add_term(int row, int col, double amount);

  // Adds one term per ordered pair of distinct sub-volumes of a segment.
  // Sub-volume codewords are assigned from the codebook. Segments with fewer
  // than two sub-volumes contribute nothing.
  void accumulate(std::span<SubVolume> segment, const Codebook& cb, const CoocParams& params);

  void write_csv(std::ostream& out) const;

  friend bool operator==(const CoocMatrix&, const CoocMatrix&) = default;

 private:
  int k_ = 0;
  std::int64_t terms_ = 0;
  std::vector<double> sum_;
};

// Contribution of the ordered pair (i, j) before the 1/N normalization.
double cooccurrence_summand(const SubVolume& i, const SubVolume& j, double motion_total,
                            double r, double pair_dist, double score, const CoocParams& params);

CoocMatrix update_matrix(CoocMatrix m, std::span<SubVolume> segment, const Codebook& cb,
                         const CoocParams& params);

}  // namespace ibpa
