#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ibpa/errors.hpp"
#include "ibpa/pipeline.hpp"
#include "ibpa/synthetic.hpp"

using namespace ibpa;

namespace {

Detection raw_person(double hx, double hy) {
  const Skeleton15 s = ibpa::testing::standing(hx, hy);
  Detection d;
  for (int j = 0; j < 14; ++j) d.pose.joints[j] = s.joints[j];
  d.box = {hx - 40, hy - 170, 80, 280};
  return d;
}

VideoRecord still_clip(int frames, std::int64_t id = 1) {
  VideoRecord r;
  r.video_id = id;
  r.frame_rate = 25;
  r.label = 0;
  for (int f = 0; f < frames; ++f) r.frames.push_back({f, {raw_person(100, 300), raw_person(300, 300)}});
  return r;
}

PipelineConfig small_config() {
  PipelineConfig c = PipelineConfig::desk_profile();
  c.embedding_dim = 6;
  c.codebook_size = 2;
  return c;
}

int nonzero(const std::vector<double>& v) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; }));
}

}  // namespace

TEST_CASE("stationary people get uniform attention") {
  const PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  const ClipFeatures clip = extract_clip(still_clip(50), cfg, stub);
  CHECK(clip.real_segments == 10);
  CHECK(clip.cf_dim == combined_feature_dim(6));
  CHECK(combined_feature_dim(6) == 6 + 5 + 4 + 10 + 10);
  for (const auto& w : clip.attention) {
    for (double l : w.lambda) CHECK(std::abs(l - 5 * cfg.attention.scale) < 1e-12);
  }
  for (auto m : clip.person_mask) CHECK(m == 1);
  CHECK(clip.person_ids == std::vector<int>{0, 1});
}

TEST_CASE("segments are padded or truncated to T") {
  const PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  const Codebook cb = fit_codebook(std::vector{extract_clip(still_clip(50), cfg, stub)}, cfg);

  const SequenceSample full = assemble_sample(still_clip(50), cfg, stub, cb);
  CHECK(full.segments == 10);
  CHECK(std::count(full.segment_mask.begin(), full.segment_mask.end(), 1) == 10);

  const SequenceSample half = assemble_sample(still_clip(25), cfg, stub, cb);
  CHECK(half.segments == 10);
  for (int t = 0; t < 10; ++t) CHECK(half.segment_mask[t] == (t < 5 ? 1 : 0));
  for (int t = 5; t < 10; ++t) {
    CHECK_FALSE(half.person_present(t, 0));
    for (double v : half.segment_descriptor(t)) CHECK(v == 0.0);
  }

  const SequenceSample longer = assemble_sample(still_clip(80), cfg, stub, cb);
  CHECK(longer.segments == 10);
  CHECK(std::count(longer.segment_mask.begin(), longer.segment_mask.end(), 1) == 10);

  const SequenceSample tiny = assemble_sample(still_clip(3), cfg, stub, cb);
  CHECK(tiny.segment_mask[0] == 1);
  CHECK(tiny.segment_mask[1] == 0);
}

TEST_CASE("clips without people are rejected") {
  const PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  VideoRecord r = still_clip(10);
  for (auto& fd : r.frames) {
    for (auto& d : fd.detections) d.box = {1000, 1000, 10, 10};
  }
  CHECK_THROWS_AS(extract_clip(r, cfg, stub), DataError);
}

TEST_CASE("a single person still produces a sample") {
  const PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  VideoRecord r = still_clip(20);
  for (auto& fd : r.frames) fd.detections.pop_back();
  const ClipFeatures clip = extract_clip(r, cfg, stub);
  for (int t = 0; t < clip.real_segments; ++t) {
    CHECK(clip.person_mask[t * 2] == 1);
    CHECK(clip.person_mask[t * 2 + 1] == 0);
  }
}

TEST_CASE("objects act as counterparts and contribute sub-volumes") {
  const PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  VideoRecord r = still_clip(20);
  for (auto& fd : r.frames) {
    fd.detections.pop_back();
    Detection car;
    car.is_object = true;
    car.box = {200.0 + 3 * fd.frame, 250, 60, 40};
    fd.detections.push_back(car);
  }
  const ClipFeatures clip = extract_clip(r, cfg, stub);
  CHECK(clip.person_ids[0] == 0);
  CHECK(clip.person_mask[1] == 0);
  for (const auto& seg : clip.subvolumes) CHECK(seg.size() == 2);
  bool varied = false;
  for (const auto& w : clip.attention) varied = varied || w.lambda[0] != w.lambda[4];
  CHECK(varied);
}

TEST_CASE("codebook fitting") {
  PipelineConfig cfg = small_config();
  const StubEmbeddingProvider stub(cfg.embedding_dim, 1);
  const ClipFeatures clip = extract_clip(still_clip(25), cfg, stub);
  cfg.codebook_size = 20;
  CHECK_THROWS_WITH_AS(fit_codebook(std::vector{clip}, cfg), doctest::Contains("smaller"), DataError);
  CHECK_THROWS_AS(fit_codebook(std::span<const ClipFeatures>{}, cfg), DataError);

  const auto data = synth_generate(default_synthetic_spec(), 12, 4);
  cfg.codebook_size = 20;
  const auto clips = extract_all(data.dataset.records, cfg, *data.provider);
  const Codebook a = fit_codebook(clips, cfg), b = fit_codebook(clips, cfg);
  CHECK(a.k() == 20);
  std::ostringstream sa, sb;
  a.write(sa);
  b.write(sb);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("parallel extraction matches sequential") {
  PipelineConfig cfg = small_config();
  const auto data = synth_generate(default_synthetic_spec(), 10, 6);
  const auto one = extract_all(data.dataset.records, cfg, *data.provider);
  cfg.threads = 4;
  const auto four = extract_all(data.dataset.records, cfg, *data.provider);
  REQUIRE(one.size() == four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].video_id == four[i].video_id);
    CHECK(one[i].cf == four[i].cf);
  }
}

TEST_CASE("ablations zero exactly one stream") {
  PipelineConfig cfg = small_config();
  const auto data = synth_generate(default_synthetic_spec(), 8, 2);
  const auto& rec = data.dataset.records[0];
  const auto clips = extract_all(data.dataset.records, cfg, *data.provider);
  const Codebook cb = fit_codebook(clips, cfg);

  const SequenceSample full = assemble_sample(rec, cfg, *data.provider, cb);
  cfg.ablation = Ablation::Baseline1;
  const SequenceSample b1 = assemble_sample(rec, cfg, *data.provider, cb);
  cfg.ablation = Ablation::Baseline2;
  const SequenceSample b2 = assemble_sample(rec, cfg, *data.provider, cb);

  CHECK(nonzero(b1.descriptor) == 0);
  CHECK(b1.cf == full.cf);
  CHECK(nonzero(b2.cf) == 0);
  CHECK(b2.descriptor == full.descriptor);
  const int n_full = nonzero(full.cf) + nonzero(full.descriptor);
  CHECK(n_full > nonzero(b1.cf) + nonzero(b1.descriptor));
  CHECK(n_full > nonzero(b2.cf) + nonzero(b2.descriptor));
}

TEST_CASE("descriptor trace is cumulative") {
  const PipelineConfig cfg = small_config();
  const auto data = synth_generate(default_synthetic_spec(), 4, 8);
  const auto clips = extract_all(data.dataset.records, cfg, *data.provider);
  const Codebook cb = fit_codebook(clips, cfg);
  const auto trace = descriptor_trace(clips[0], cfg, cb);
  CoocMatrix m(cb.k());
  for (int t = 0; t < clips[0].real_segments; ++t) {
    auto seg = clips[0].subvolumes[t];
    m.accumulate(seg, cb, cfg.cooc);
    CHECK(m.normalized() == trace[t]);
  }
}

TEST_CASE("synthetic output is reproducible") {
  const auto a = synth_generate(default_synthetic_spec(), 6, 42);
  const auto b = synth_generate(default_synthetic_spec(), 6, 42);
  std::ostringstream sa, sb;
  write_dataset(sa, a.dataset);
  write_dataset(sb, b.dataset);
  CHECK(sa.str() == sb.str());
  CHECK(build_embedding_table(a.dataset, *a.provider) == build_embedding_table(b.dataset, *b.provider));
  const auto c = synth_generate(default_synthetic_spec(), 6, 43);
  std::ostringstream sc;
  write_dataset(sc, c.dataset);
  CHECK(sc.str() != sa.str());
}

TEST_CASE("synthetic labels are balanced and drop rate 0 keeps every joint") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.drop_rate = 0.0;
  const auto data = synth_generate(spec, 8, 1);
  std::vector<int> counts(4);
  for (const auto& r : data.dataset.records) {
    ++counts[r.label];
    for (const auto& fd : r.frames) {
      REQUIRE(fd.detections.size() == 2);
      for (const auto& d : fd.detections) {
        for (const auto& j : d.pose.joints) CHECK(j.valid);
      }
    }
  }
  CHECK(counts == std::vector<int>{2, 2, 2, 2});
}

TEST_CASE("in a shake the subject's right arm ends nearest the other's right arm") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.drop_rate = 0.0;
  const auto data = synth_generate(spec, 12, 5);
  for (const auto& r : data.dataset.records) {
    if (data.dataset.classes[r.label] != "shake") continue;
    const auto& last = r.frames.back();
    const Skeleton15 subject = convert_pose(last.detections[0].pose);
    const Skeleton15 other = convert_pose(last.detections[1].pose);
    const Vec2 arm = *part_centroid(subject, BodyPart::RightArm);
    int best = -1;
    double best_d = 1e300;
    for (BodyPart q : kAllParts) {
      const double d = distance(arm, *part_centroid(other, q));
      if (d < best_d) {
        best_d = d;
        best = index_of(q);
      }
    }
    CHECK(best == index_of(BodyPart::RightArm));
  }
}

TEST_CASE("synthetic generator validation") {
  SyntheticSpec spec = default_synthetic_spec();
  spec.classes.resize(1);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = default_synthetic_spec();
  spec.classes[0].moves[0].part = static_cast<BodyPart>(7);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
