#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ibpa/cooccurrence.hpp"
#include "ibpa/errors.hpp"

using namespace ibpa;

namespace {

SubVolume moving(std::vector<double> f, Vec2 center, Vec2 displacement) {
  SubVolume sv;
  sv.f = std::move(f);
  sv.center = center;
  sv.displacement = displacement;
  return sv;
}

std::vector<std::vector<double>> random_samples(Rng& rng, int n, int dim) {
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& s : out) {
    for (double& x : s) x = rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("build_subvolume averages and measures displacement") {
  const std::vector<std::vector<double>> same{{1, 2}, {1, 2}};
  const std::vector<Vec2> pos{{0, 0}, {3, 4}};
  const SubVolume sv = build_subvolume(same, pos, 2, 7);
  CHECK(sv.f == std::vector<double>{1, 2});
  CHECK(sv.displacement == Vec2{3, 4});
  CHECK(sv.center == Vec2{1.5, 2});
  CHECK(sv.segment == 2);
  CHECK(sv.object_id == 7);

  const SubVolume one = build_subvolume(std::vector<std::vector<double>>{{5}}, std::vector<Vec2>{{9, 9}}, 0);
  CHECK(one.displacement == Vec2{});
  CHECK(one.f == std::vector<double>{5});

  CHECK_THROWS(build_subvolume(std::vector<std::vector<double>>{}, std::vector<Vec2>{}, 0));
}

TEST_CASE("kmeans recovers separated clusters") {
  std::vector<std::vector<double>> samples;
  for (int i = 0; i < 5; ++i) samples.push_back({0, 0, 0});
  for (int i = 0; i < 5; ++i) samples.push_back({10, 10, 10});
  const auto fit = kmeans_fit(samples, 2, 50, 3);
  CHECK(fit.sse_history.back() == 0.0);
  const auto c0 = fit.codebook.centroid(0), c1 = fit.codebook.centroid(1);
  const bool ordered = c0[0] == 0.0;
  CHECK(std::vector<double>(c0.begin(), c0.end()) == std::vector<double>(3, ordered ? 0.0 : 10.0));
  CHECK(std::vector<double>(c1.begin(), c1.end()) == std::vector<double>(3, ordered ? 10.0 : 0.0));
}

TEST_CASE("kmeans on identical samples") {
  const std::vector<std::vector<double>> samples(6, std::vector<double>{2, -1});
  const auto fit = kmeans_fit(samples, 2, 20, 1);
  CHECK(fit.sse_history.back() == 0.0);
  const auto c0 = fit.codebook.centroid(0);
  CHECK(c0[0] == 2.0);
  CHECK(c0[1] == -1.0);
}

TEST_CASE("kmeans SSE never increases and fits are reproducible") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto samples = random_samples(rng, 80, 4);
    const auto fit = kmeans_fit(samples, 6, 100, trial);
    for (std::size_t i = 1; i < fit.sse_history.size(); ++i) CHECK(fit.sse_history[i] <= fit.sse_history[i - 1]);
    CHECK(within_cluster_sse(samples, fit.codebook, fit.labels) == doctest::Approx(fit.sse_history.back()));
    CHECK(kmeans_fit(samples, 6, 100, trial).codebook == fit.codebook);
  }
}

TEST_CASE("kmeans preconditions") {
  const std::vector<std::vector<double>> few(3, std::vector<double>{1});
  CHECK_THROWS_AS(kmeans_fit(few, 4, 10, 0), DataError);
  CHECK_THROWS(kmeans_fit(few, 1, 10, 0));
}

TEST_CASE("assign picks the nearest centroid, lowest index on ties") {
  const Codebook cb(5, 1, 0, {0, 4, 8, 12, 6});
  CHECK(cb.assign(std::vector<double>{12}) == 3);
  CHECK(cb.assign(std::vector<double>{5}) == 1);
  CHECK(cb.assign(std::vector<double>{1e9}) == 3);
  const Codebook tie(5, 1, 0, {0, 2, 8, 12, 6});
  CHECK(tie.assign(std::vector<double>{4}) == 1);
}

TEST_CASE("codebook text round trip is exact") {
  Rng rng(2);
  std::vector<double> c(12);
  for (double& x : c) x = rng.normal() * 1e-3;
  const Codebook cb(4, 3, 77, c);
  std::stringstream ss;
  cb.write(ss);
  const auto path = std::filesystem::temp_directory_path() / "ibpa_codebook_test.txt";
  cb.save(path);
  CHECK(Codebook::load(path) == cb);
  std::filesystem::remove(path);
  CHECK(ss.str().rfind("ibpa-codebook 1\n", 0) == 0);
}

TEST_CASE("pair and global distances") {
  const auto a = moving({0}, {0, 0}, {}), b = moving({0}, {3, 4}, {});
  CHECK(pair_distance(a, b) == 5.0);
  CHECK(pair_distance(a, a) == 0.0);
  CHECK(pair_distance(moving({0}, {1, 1}, {}), moving({0}, {4, 5}, {})) == 5.0);

  CHECK(global_distance(std::vector{a, b}) == 5.0);
  const auto c = moving({0}, {3, 0}, {});
  CHECK(global_distance(std::vector{a, c, b}) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(global_distance(std::vector{a, a}) == 0.0);
  CHECK_THROWS(global_distance(std::vector{a}));
}

TEST_CASE("pair_score by hand") {
  const std::vector<double> f{1, 2}, w{1, 2};
  CHECK(std::abs(pair_score(f, w, f, w, std::numbers::e) - 1.0) < 1e-12);
  CHECK(pair_score(f, w, f, w, 1.0) == 0.0);
  const std::vector<double> f2{3, 2}, f4{1, 6};
  CHECK(pair_score(f2, w, f4, w, std::numbers::e) == doctest::Approx(std::log(3 + std::numbers::e)));
  CHECK(pair_score(f2, w, f4, w, 0.5) == pair_score(f4, w, f2, w, 0.5));
  CHECK_THROWS(pair_score(f, w, f, w, 0.0));
}

TEST_CASE("single pair update by hand") {
  const Codebook cb(2, 2, 0, {0, 0, 10, 10});
  std::vector<SubVolume> seg{moving({0, 0}, {0, 0}, {1, 0}), moving({10, 10}, {3, 4}, {0, 1})};
  const CoocMatrix m = update_matrix(CoocMatrix(2), seg, cb, {});
  CHECK(m.terms() == 2);
  CHECK(std::abs(m.raw(0, 1) - 0.5) < 1e-12);
  CHECK(std::abs(m.raw(1, 0) - 0.5) < 1e-12);
  CHECK(m.raw(0, 0) == 0.0);
  CHECK(std::abs(m.value(0, 1) - 0.25) < 1e-12);
  CHECK(std::abs(cooccurrence_summand(seg[0], seg[1], 2.0, 5.0, 5.0, 1.0, {}) - 0.5) < 1e-12);
}

TEST_CASE("stationary objects add zero terms") {
  const Codebook cb(2, 1, 0, {0, 1});
  std::vector<SubVolume> seg{moving({0}, {0, 0}, {}), moving({1}, {3, 4}, {}), moving({1}, {3, 4}, {})};
  const CoocMatrix m = update_matrix(CoocMatrix(2), seg, cb, {});
  CHECK(m.terms() == 6);
  for (double v : m.normalized()) CHECK(v == 0.0);
}

TEST_CASE("single object segments add nothing") {
  const Codebook cb(2, 1, 0, {0, 1});
  std::vector<SubVolume> seg{moving({0}, {0, 0}, {1, 1})};
  const CoocMatrix m = update_matrix(CoocMatrix(2), seg, cb, {});
  CHECK(m.terms() == 0);
  CHECK(m.normalized() == std::vector<double>(4, 0.0));
}

TEST_CASE("descriptor is translation invariant and cumulative") {
  Rng rng(12);
  const Codebook cb(3, 2, 0, {0, 0, 1, 0, 0, 1});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<SubVolume>> segments(4);
    for (auto& seg : segments) {
      const int n = 2 + static_cast<int>(rng.below(3));
      for (int i = 0; i < n; ++i) {
        seg.push_back(moving({rng.normal(), rng.normal()}, {rng.uniform(0, 300), rng.uniform(0, 300)},
                             {rng.uniform(-9, 9), rng.uniform(-9, 9)}));
      }
    }
    const Vec2 t{rng.uniform(-1000, 1000), rng.uniform(-1000, 1000)};
    CoocMatrix a(3), b(3);
    for (auto seg : segments) {
      auto moved = seg;
      for (auto& sv : moved) sv.center += t;
      const CoocMatrix before = a;
      a.accumulate(seg, cb, {});
      b.accumulate(moved, cb, {});
      CHECK(update_matrix(before, seg, cb, {}) == a);
    }
    const auto na = a.normalized(), nb = b.normalized();
    for (std::size_t i = 0; i < na.size(); ++i) CHECK(std::abs(na[i] - nb[i]) < 1e-9);
  }
}

TEST_CASE("matrix CSV has K rows of K values") {
  const Codebook cb(2, 1, 0, {0, 1});
  std::vector<SubVolume> seg{moving({0}, {0, 0}, {1, 0}), moving({1}, {3, 4}, {0, 1})};
  const CoocMatrix m = update_matrix(CoocMatrix(2), seg, cb, {});
  std::ostringstream os;
  m.write_csv(os);
  CHECK(os.str() == "0,0.25\n0.25,0\n");
}
