#include "ibpa/cooccurrence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "ibpa/errors.hpp"
#include "ibpa/random.hpp"

namespace ibpa {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

constexpr std::string_view kCodebookHeader = "ibpa-codebook";
constexpr int kCodebookVersion = 1;

}  // namespace

SubVolume build_subvolume(std::span<const std::vector<double>> frame_vectors,
                          std::span<const Vec2> positions, int segment, int object_id) {
  if (frame_vectors.empty() || positions.empty()) {
    throw std::invalid_argument("build_subvolume: empty segment");
  }
  SubVolume sv;
  sv.segment = segment;
  sv.object_id = object_id;
  sv.f.assign(frame_vectors.front().size(), 0.0);
  for (const auto& v : frame_vectors) {
    if (v.size() != sv.f.size()) throw ShapeError("build_subvolume: ragged frame vectors");
    for (std::size_t i = 0; i < v.size(); ++i) sv.f[i] += v[i];
  }
  const double n = static_cast<double>(frame_vectors.size());
  for (double& x : sv.f) x /= n;

  Vec2 sum;
  for (Vec2 p : positions) sum += p;
  sv.center = {sum.x / positions.size(), sum.y / positions.size()};
  sv.displacement = positions.back() - positions.front();
  return sv;
}

Codebook::Codebook(int k, int dim, std::uint64_t seed, std::vector<double> centroids)
    : k_(k), dim_(dim), seed_(seed), centroids_(std::move(centroids)) {
  if (centroids_.size() != static_cast<std::size_t>(k) * dim) {
    throw ShapeError("codebook: centroid storage does not match k x dim");
  }
}

int Codebook::assign(std::span<const double> f) const {
  if (static_cast<int>(f.size()) != dim_) throw ShapeError("codebook: feature dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < k_; ++c) {
    const double d = squared_distance(f, centroid(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void Codebook::write(std::ostream& out) const {
  out << kCodebookHeader << ' ' << kCodebookVersion << '\n';
  out << k_ << ' ' << dim_ << ' ' << seed_ << '\n';
  for (int c = 0; c < k_; ++c) {
    auto row = centroid(c);
    for (int i = 0; i < dim_; ++i) {
      if (i) out << ' ';
      out << format_double(row[i]);
    }
    out << '\n';
  }
}

void Codebook::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
}

Codebook Codebook::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string header;
  int version = 0;
  in >> header >> version;
  if (header != kCodebookHeader) throw DataError(path.string() + ": not a codebook file");
  if (version != kCodebookVersion) {
    throw DataError(path.string() + ": unsupported codebook version " + std::to_string(version));
  }
  int k = 0, dim = 0;
  std::uint64_t seed = 0;
  in >> k >> dim >> seed;
  if (!in || k < 1 || dim < 1) throw DataError(path.string() + ": malformed codebook header");
  std::vector<double> c(static_cast<std::size_t>(k) * dim);
  for (auto& v : c) {
    std::string tok;
    if (!(in >> tok)) throw DataError(path.string() + ": truncated centroid data");
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{}) throw DataError(path.string() + ": bad number '" + tok + "'");
  }
  return Codebook(k, dim, seed, std::move(c));
}

double within_cluster_sse(std::span<const std::vector<double>> samples, const Codebook& cb,
                          std::span<const int> labels) {
  double sse = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sse += squared_distance(samples[i], cb.centroid(labels[i]));
  return sse;
}

KMeansResult kmeans_fit(std::span<const std::vector<double>> samples, int k, int max_iter,
                        std::uint64_t seed) {
  const std::size_t n = samples.size();
  if (k < 2) throw std::invalid_argument("kmeans: need at least 2 clusters");
  if (n < static_cast<std::size_t>(k)) {
    throw DataError("kmeans: " + std::to_string(n) + " samples cannot form " + std::to_string(k) +
                    " clusters; use a smaller K");
  }
  const std::size_t dim = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != dim) throw ShapeError("kmeans: ragged samples");
  }

  Rng rng(seed);
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
  auto centroid = [&](int c) { return std::span<double>(centroids.data() + c * dim, dim); };

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  std::copy(samples[first].begin(), samples[first].end(), centroid(0).begin());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(samples[i], centroid(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy(samples[pick].begin(), samples[pick].end(), centroid(c).begin());
  }

  KMeansResult result;
  result.labels.assign(n, -1);
  std::vector<int>& labels = result.labels;

  auto current_sse = [&] {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += squared_distance(samples[i], centroid(labels[i]));
    return sse;
  };

  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(samples[i], centroid(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (iter == 0) result.sse_history.push_back(current_sse());

    std::fill(counts.begin(), counts.end(), 0);
    for (int l : labels) ++counts[l];
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      // Move the sample farthest from its centroid (taken from a cluster with
      // more than one member) into the empty cluster.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] < 2) continue;
        const double d = squared_distance(samples[i], centroid(labels[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) continue;
      --counts[labels[far]];
      labels[far] = c;
      counts[c] = 1;
      std::copy(samples[far].begin(), samples[far].end(), centroid(c).begin());
      changed = true;
    }

    std::vector<double> sums(centroids.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[labels[i] * dim + d] += samples[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) centroid(c)[d] = sums[c * dim + d] / counts[c];
    }
    result.sse_history.push_back(current_sse());
    result.iterations = iter + 1;
    if (!changed) break;
  }

  result.codebook = Codebook(k, static_cast<int>(dim), seed, std::move(centroids));
  return result;
}

double pair_distance(const SubVolume& a, const SubVolume& b) { return distance(a.center, b.center); }

double global_distance(std::span<const SubVolume> subvols) {
  if (subvols.size() < 2) throw std::invalid_argument("global_distance: need at least two sub-volumes");
  double total = 0.0;
  for (std::size_t i = 0; i < subvols.size(); ++i) {
    for (std::size_t j = 0; j < subvols.size(); ++j) {
      if (i != j) total += pair_distance(subvols[i], subvols[j]);
    }
  }
  return 0.5 * total;
}

double pair_score(std::span<const double> f_i, std::span<const double> w_i,
                  std::span<const double> f_j, std::span<const double> w_j, double psi) {
  if (!(psi > 0.0)) throw std::invalid_argument("pair_score: psi must be positive");
  if (f_i.size() != w_i.size() || f_j.size() != w_j.size()) throw ShapeError("pair_score: dimension mismatch");
  return std::log((euclidean(w_i, f_i) + euclidean(w_j, f_j)) / 2.0 + psi);
}

double cooccurrence_summand(const SubVolume& i, const SubVolume& /*j*/, double motion_total,
                            double r, double pair_dist, double score, const CoocParams& params) {
  const double s = norm(i.displacement);
  const double eps_t = std::max(motion_total, params.eps);
  const double dist = std::max(pair_dist, params.eps);
  return (s / eps_t) * (r / dist) * score;
}

double CoocMatrix::value(int row, int col) const {
  return terms_ == 0 ? 0.0 : raw(row, col) / static_cast<double>(terms_);
}

std::vector<double> CoocMatrix::normalized() const {
  std::vector<double> out(sum_.size(), 0.0);
  if (terms_ == 0) return out;
  const double n = static_cast<double>(terms_);
  for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = sum_[i] / n;
  return out;
}

void CoocMatrix::add_term(int row, int col, double amount) {
  sum_[static_cast<std::size_t>(row) * k_ + col] += amount;
  ++terms_;
}

void CoocMatrix::accumulate(std::span<SubVolume> segment, const Codebook& cb, const CoocParams& params) {
  if (cb.k() != k_) throw ShapeError("cooccurrence: codebook size differs from matrix size");
  if (segment.size() < 2) return;
  for (SubVolume& sv : segment) sv.codeword = cb.assign(sv.f);

  double motion_total = 0.0;
  for (const SubVolume& sv : segment) motion_total += norm(sv.displacement);
  const double r = global_distance(segment);

  for (std::size_t i = 0; i < segment.size(); ++i) {
    for (std::size_t j = 0; j < segment.size(); ++j) {
      if (i == j) continue;
      const SubVolume& a = segment[i];
      const SubVolume& b = segment[j];
      const double score = pair_score(a.f, cb.centroid(a.codeword), b.f, cb.centroid(b.codeword), params.psi);
      add_term(a.codeword, b.codeword,
               cooccurrence_summand(a, b, motion_total, r, pair_distance(a, b), score, params));
    }
  }
}

void CoocMatrix::write_csv(std::ostream& out) const {
  for (int r = 0; r < k_; ++r) {
    for (int c = 0; c < k_; ++c) {
      if (c) out << ',';
      out << format_double(value(r, c));
    }
    out << '\n';
  }
}

CoocMatrix update_matrix(CoocMatrix m, std::span<SubVolume> segment, const Codebook& cb,
                         const CoocParams& params) {
  m.accumulate(segment, cb, params);
  return m;
}

}  // namespace ibpa
