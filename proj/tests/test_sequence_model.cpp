#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "ibpa/adam.hpp"
#include "ibpa/errors.hpp"
#include "ibpa/sequence_model.hpp"

using namespace ibpa;
using ibpa::testing::random_sample;
using ibpa::testing::tiny_dims;

namespace {

ModelParams random_params(const ModelDims& dims, std::uint64_t seed, double range = 0.5) {
  ModelParams p(dims);
  Rng rng(seed);
  p.init_uniform(rng, range);
  return p;
}

std::vector<SequenceSample> random_batch(const ModelDims& d, std::uint64_t seed, int n = 3, int segments = 4) {
  Rng rng(seed);
  std::vector<SequenceSample> batch;
  for (int i = 0; i < n; ++i) batch.push_back(random_sample(rng, segments, d.persons, d.cf_dim, d.desc_dim, d.classes));
  return batch;
}

}  // namespace

TEST_CASE("parameter layout") {
  ModelDims d = tiny_dims();
  const ModelParams p(d);
  CHECK(d.fusion_input() == 2 * 8 + 4);
  CHECK(p.fusion_cell().input_dim == d.fusion_input());
  const std::size_t sub = 4 * 8 * (5 + 8 + 1);
  const std::size_t fusion = 4 * 16 * (20 + 16 + 1);
  CHECK(p.size() == sub + fusion + 4 * 16 + 4);
  d.shared_sub = false;
  CHECK(ModelParams(d).size() == 2 * sub + fusion + 4 * 16 + 4);

  CHECK(p.describe(0) == "sub[0].wx.input[0,0]");
  CHECK(p.describe(p.size() - 1) == "out.b[3]");
  const auto forget = p.gate_ranges(Gate::Forget);
  CHECK(p.describe(forget.front().first).find("forget") != std::string::npos);
}

TEST_CASE("cell_step with zero parameters") {
  ModelDims d = tiny_dims();
  const ModelParams p(d);
  const auto cell = p.sub_cell(0);
  const std::vector<double> x(5, 0.3), zero(8, 0.0), one(8, 1.0);
  const CellState a = cell_step(cell, x, zero, zero);
  for (double v : a.h) CHECK(v == 0.0);
  for (double v : a.c) CHECK(v == 0.0);
  const CellState b = cell_step(cell, x, zero, one);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(b.c[i] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b.h[i] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    CHECK(b.h[i] == doctest::Approx(0.2311).epsilon(1e-4));
  }
  const CellState again = cell_step(cell, x, zero, one);
  CHECK(again.h == b.h);
  CHECK_THROWS_AS(cell_step(cell, std::vector<double>(4), zero, zero), ShapeError);
  CHECK_THROWS_AS(cell_step(cell, x, std::vector<double>(7), zero), ShapeError);
}

TEST_CASE("forward returns a distribution") {
  const ModelDims d = tiny_dims();
  const auto batch = random_batch(d, 5, 20);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = random_params(d, seed, 2.0);
    for (const auto& x : batch) {
      const auto probs = forward(p, x);
      REQUIRE(probs.size() == 4);
      double sum = 0.0;
      for (double q : probs) {
        CHECK(q >= 0.0);
        sum += q;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(forward(p, x) == probs);
    }
  }
  const ModelParams zero(d);
  for (double q : forward(zero, batch[0])) CHECK(q == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(batch_loss(zero, batch) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("forward rejects mismatched samples") {
  const ModelDims d = tiny_dims();
  const ModelParams p(d);
  SequenceSample bad(3, 2, 6, 4);
  CHECK_THROWS_AS(forward(p, bad), ShapeError);
}

TEST_CASE("padding with masked segments does not change the output") {
  const ModelDims d = tiny_dims();
  const ModelParams p = random_params(d, 3);
  for (auto x : random_batch(d, 9, 5)) {
    const auto before = forward(p, x);
    x.pad_to(9);
    CHECK(forward(p, x) == before);
  }
}

TEST_CASE("a person absent everywhere gets no gradient") {
  ModelDims d = tiny_dims();
  d.shared_sub = false;
  const ModelParams p = random_params(d, 4);
  auto batch = random_batch(d, 4);
  for (auto& x : batch) {
    for (int t = 0; t < x.segments; ++t) x.person_mask[static_cast<std::size_t>(t) * x.persons + 1] = 0;
  }
  const auto lg = loss_and_grad(p, batch, 0.0);
  const auto dead = lg.grad.sub_cell(1);
  for (double g : dead.wx) CHECK(g == 0.0);
  for (double g : dead.wh) CHECK(g == 0.0);
  for (double g : dead.b) CHECK(g == 0.0);
  const auto live = lg.grad.sub_cell(0);
  CHECK(std::any_of(live.wx.begin(), live.wx.end(), [](double g) { return g != 0.0; }));
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelDims d = tiny_dims();
    d.shared_sub = seed % 2 == 0;
    const ModelParams p = random_params(d, 100 + seed);
    auto batch = random_batch(d, 200 + seed);
    batch[1].person_mask[1] = 0;
    batch[2].segment_mask[3] = 0;
    GradCheckOptions opts;
    opts.l2 = seed == 4 ? 0.01 : 0.0;
    const auto report = grad_check(p, batch, opts);
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked + report.skipped == p.size());
  }
}

TEST_CASE("gradient check catches a corrupted forget gate") {
  const ModelDims d = tiny_dims();
  const ModelParams p = random_params(d, 1);
  const auto batch = random_batch(d, 2);
  ModelParams grad = loss_and_grad(p, batch).grad;
  for (const auto& r : grad.gate_ranges(Gate::Forget)) {
    for (std::size_t i = r.first; i < r.last; ++i) grad.values()[i] = grad.values()[i] * 1.5 + 1e-3;
  }
  const auto report = grad_check(p, batch, {}, &grad);
  CHECK(report.max_rel_error > 1e-2);
  CHECK(report.worst_name.find("forget") != std::string::npos);
}

TEST_CASE("gradient check skips zero partials") {
  const ModelDims d = tiny_dims();
  const ModelParams p(d);
  SequenceSample x(4, 2, d.cf_dim, d.desc_dim);
  std::fill(x.person_mask.begin(), x.person_mask.end(), 1);
  std::fill(x.segment_mask.begin(), x.segment_mask.end(), 1);
  x.label = 0;
  const auto report = grad_check(p, std::vector{x});
  CHECK(report.skipped > 0);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("l2 term adds half the squared norm") {
  const ModelDims d = tiny_dims();
  const ModelParams p = random_params(d, 6);
  const auto batch = random_batch(d, 6);
  const double sq = std::inner_product(p.values().begin(), p.values().end(), p.values().begin(), 0.0);
  CHECK(batch_loss(p, batch, 0.1) == doctest::Approx(batch_loss(p, batch) + 0.05 * sq).epsilon(1e-13));
}

TEST_CASE("batch order does not matter") {
  const ModelDims d = tiny_dims();
  const ModelParams p = random_params(d, 7);
  auto batch = random_batch(d, 7, 4);
  const auto a = loss_and_grad(p, batch, 1e-3);
  std::reverse(batch.begin(), batch.end());
  const auto b = loss_and_grad(p, batch, 1e-3);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(a.grad.values()[i] - b.grad.values()[i]) < 1e-13);
}

TEST_CASE("one small step lowers a sample's loss") {
  const ModelDims d = tiny_dims();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = random_params(d, 30 + seed);
    const auto batch = random_batch(d, 40 + seed, 1);
    const auto lg = loss_and_grad(p, batch);
    bool improved = false;
    double lr = 1e-3;
    for (int attempt = 0; attempt <= 3 && !improved; ++attempt, lr /= 2) {
      ModelParams q = p;
      AdamState st({lr}, q.size());
      adam_step(st, q.values(), lg.grad.values());
      improved = batch_loss(q, batch) < lg.loss;
    }
    CHECK(improved);
  }
}

TEST_CASE("adam with zero gradient leaves parameters alone") {
  std::vector<double> w{1, -2, 3};
  AdamState st({}, 3);
  adam_step(st, w, std::vector<double>(3, 0.0));
  CHECK(w == std::vector<double>{1, -2, 3});
  CHECK(st.step == 1);
  CHECK_THROWS_AS(adam_step(st, w, std::vector<double>(2, 0.0)), ShapeError);
}

TEST_CASE("adam steps approach the learning rate for a constant gradient") {
  std::vector<double> w{0.0};
  AdamOptions o;
  o.learning_rate = 1e-3;
  AdamState st(o, 1);
  double prev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    prev = w[0];
    adam_step(st, w, std::vector<double>{0.7});
  }
  CHECK(prev - w[0] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam is deterministic") {
  Rng rng(1);
  std::vector<std::vector<double>> grads(50, std::vector<double>(10));
  for (auto& g : grads) {
    for (double& x : g) x = rng.normal();
  }
  auto run = [&] {
    std::vector<double> w(10, 0.25);
    AdamState st({}, 10);
    for (const auto& g : grads) adam_step(st, w, g);
    return std::make_pair(w, st);
  };
  CHECK(run() == run());
}
