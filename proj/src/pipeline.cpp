#include "ibpa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>

#include "ibpa/errors.hpp"
#include "ibpa/features.hpp"

namespace ibpa {

namespace {

// Per-joint mean over the frames of [first, last) where the joint is valid.
std::optional<Skeleton15> segment_skeleton(const TrackedSequence& tr, int first, int last) {
  std::array<Vec2, kJointCount> sum{};
  std::array<int, kJointCount> count{};
  for (int f = first; f < last; ++f) {
    const TrackedFrame* tf = tr.at_frame(f);
    if (tf == nullptr) continue;
    for (int j = 0; j < kJointCount; ++j) {
      if (tf->skeleton.joints[j].valid) {
        sum[j] += tf->skeleton.joints[j].pos;
        ++count[j];
      }
    }
  }
  Skeleton15 out;
  out.person_id = tr.person_id;
  out.is_object = tr.is_object;
  bool any = false;
  for (int j = 0; j < kJointCount; ++j) {
    if (count[j] > 0) {
      out.joints[j] = {{sum[j].x / count[j], sum[j].y / count[j]}, true, false};
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return out;
}

// Torso centroid, or the mean of all valid joints when the torso is missing.
Vec2 anchor_point(const Skeleton15& s) {
  if (auto c = part_centroid(s, BodyPart::Torso)) return *c;
  Vec2 sum;
  int n = 0;
  for (const auto& j : s.joints) {
    if (j.valid) {
      sum += j.pos;
      ++n;
    }
  }
  return n > 0 ? Vec2{sum.x / n, sum.y / n} : Vec2{};
}

int valid_joint_count(const TrackedSequence& tr) {
  int n = 0;
  for (const auto& f : tr.frames) {
    for (const auto& j : f.skeleton.joints) n += j.valid ? 1 : 0;
  }
  return n;
}

PatchEmbedding segment_patches(const EmbeddingProvider& provider, const TrackedSequence& tr, int first, int last,
                               const PipelineConfig& cfg, std::int64_t video) {
  if (!cfg.per_frame_patches) {
    const int mid = first + (last - first) / 2;
    const TrackedFrame* tf = tr.at_frame(mid);
    if (tf == nullptr) return PatchEmbedding(provider.dim());
    return patch_embeddings(provider, tf->skeleton, cfg.patch_size, {video, mid});
  }
  PatchEmbedding acc(provider.dim());
  std::array<int, kContactJointCount> counts{};
  for (int f = first; f < last; ++f) {
    const TrackedFrame* tf = tr.at_frame(f);
    if (tf == nullptr) continue;
    const PatchEmbedding pe = patch_embeddings(provider, tf->skeleton, cfg.patch_size, {video, f});
    for (int s = 0; s < kContactJointCount; ++s) {
      if (!pe.joint_valid[s]) continue;
      auto dst = acc.slot(s);
      auto src = pe.slot(s);
      for (int i = 0; i < acc.dim; ++i) dst[i] += src[i];
      ++counts[s];
    }
  }
  for (int s = 0; s < kContactJointCount; ++s) {
    if (counts[s] == 0) continue;
    for (double& x : acc.slot(s)) x /= counts[s];
    acc.joint_valid[s] = true;
  }
  return acc;
}

RawPartWeights pair_weights(const std::vector<std::optional<Skeleton15>>& mine,
                            const std::vector<std::optional<Skeleton15>>& theirs, int t, DistanceAggregation agg) {
  if (t == 0 || !mine[t - 1] || !theirs[t - 1]) return {};
  return part_weight_raw(part_distance(*mine[t], *theirs[t], agg), part_distance(*mine[t - 1], *theirs[t - 1], agg));
}

}  // namespace

ClipFeatures extract_clip(const VideoRecord& rec, const PipelineConfig& cfg, const EmbeddingProvider& provider) {
  if (rec.frames.empty()) throw DataError("video " + std::to_string(rec.video_id) + " has no frames");
  const TrackerOptions topt{cfg.track_iou, cfg.interp_max_gap, true, rec.frame_rate};
  std::vector<TrackedSequence> tracks = track_people(rec.frames, topt);
  for (auto& tr : tracks) tr = interpolate_missing(tr, cfg.interp_max_gap);

  std::vector<std::size_t> humans;
  std::vector<int> weight(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    weight[i] = valid_joint_count(tracks[i]);
    if (!tracks[i].is_object && weight[i] > 0) humans.push_back(i);
  }
  if (humans.empty()) {
    throw DataError("video " + std::to_string(rec.video_id) + ": no person left after filtering");
  }
  std::stable_sort(humans.begin(), humans.end(), [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
  if (humans.size() > static_cast<std::size_t>(cfg.persons)) humans.resize(cfg.persons);
  std::sort(humans.begin(), humans.end());

  const int f0 = rec.frames.front().frame;
  const int f_end = rec.frames.back().frame + 1;
  const int l = cfg.segment_length;
  const int real = std::min(cfg.segments, std::max(1, (f_end - f0) / l));
  auto seg_first = [&](int t) { return f0 + t * l; };
  auto seg_last = [&](int t) { return std::min(f0 + (t + 1) * l, f_end); };

  std::vector<std::vector<std::optional<Skeleton15>>> reps(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (int t = 0; t < real; ++t) reps[i].push_back(segment_skeleton(tracks[i], seg_first(t), seg_last(t)));
  }

  ClipFeatures out;
  out.video_id = rec.video_id;
  out.label = rec.label;
  out.real_segments = real;
  out.persons = cfg.persons;
  out.cf_dim = combined_feature_dim(provider.dim());
  out.person_ids.assign(cfg.persons, -1);
  out.cf.assign(static_cast<std::size_t>(real) * cfg.persons * out.cf_dim, 0.0);
  out.person_mask.assign(static_cast<std::size_t>(real) * cfg.persons, 0);
  out.attention.assign(static_cast<std::size_t>(real) * cfg.persons, AttentionWeights{});
  out.active_part.assign(static_cast<std::size_t>(real) * cfg.persons, BodyPart::RightArm);

  for (std::size_t m = 0; m < humans.size(); ++m) {
    const std::size_t si = humans[m];
    const TrackedSequence& tr = tracks[si];
    out.person_ids[m] = tr.person_id;
    std::optional<PartVectors> last_v;
    for (int t = 0; t < real; ++t) {
      const auto& rep = reps[si][t];
      if (!rep) {
        last_v.reset();
        continue;
      }
      const Skeleton15& prev = (t > 0 && reps[si][t - 1]) ? *reps[si][t - 1] : *rep;
      const PartVectors v = velocity(prev, *rep);
      const PartVectors a = acceleration(last_v.value_or(v), v);
      last_v = v;

      std::vector<std::size_t> others;
      for (std::size_t c = 0; c < tracks.size(); ++c) {
        if (c != si && reps[c][t]) others.push_back(c);
      }
      AttentionWeights lam;
      if (others.empty()) {
        lam = attention(RawPartWeights{}, cfg.attention);
      } else if (cfg.pairing == AttentionPairing::Nearest) {
        const Vec2 me = anchor_point(*rep);
        std::size_t best = others.front();
        double best_d = distance(me, anchor_point(*reps[best][t]));
        for (std::size_t c : others) {
          const double d = distance(me, anchor_point(*reps[c][t]));
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        lam = attention(pair_weights(reps[si], reps[best], t, cfg.aggregation), cfg.attention);
      } else {
        lam.scale = cfg.attention.scale;
        for (std::size_t c : others) {
          const AttentionWeights w = attention(pair_weights(reps[si], reps[c], t, cfg.aggregation), cfg.attention);
          for (int p = 0; p < kPartCount; ++p) {
            lam.lambda[p] += w.lambda[p] / static_cast<double>(others.size());
            lam.capped[p] = lam.capped[p] || w.capped[p];
          }
        }
      }

      const PatchEmbedding pf = segment_patches(provider, tr, seg_first(t), seg_last(t), cfg, rec.video_id);
      const WeightedFeatures wf = apply_attention(lam, v, a, pf);
      const BodyPart active = most_active_part(lam);
      const std::size_t cell = static_cast<std::size_t>(t) * cfg.persons + m;
      out.attention[cell] = lam;
      out.active_part[cell] = active;
      out.person_mask[cell] = 1;
      if (cfg.ablation == Ablation::Baseline2) continue;

      const InnerAngles inner = inner_angles(*rep);
      const OuterAngles outer = outer_angles(*rep);
      double* dst = out.cf.data() + cell * out.cf_dim;
      auto chosen = wf.wf.slot(contact_slot_of(active));
      dst = std::copy(chosen.begin(), chosen.end(), dst);
      dst = std::copy(inner.theta.begin(), inner.theta.end(), dst);
      dst = std::copy(outer.theta.begin(), outer.theta.end(), dst);
      for (const Vec2& x : wf.wv.value) {
        *dst++ = x.x;
        *dst++ = x.y;
      }
      for (const Vec2& x : wf.wa.value) {
        *dst++ = x.x;
        *dst++ = x.y;
      }
    }
  }

  out.subvolumes.resize(real);
  for (int t = 0; t < real; ++t) {
    for (const TrackedSequence& tr : tracks) {
      std::vector<std::vector<double>> vectors;
      std::vector<Vec2> positions;
      for (int f = seg_first(t); f < seg_last(t); ++f) {
        const TrackedFrame* tf = tr.at_frame(f);
        if (tf == nullptr || !tf->detected) continue;
        PatchQuery q{{rec.video_id, f, tr.person_id, kFullBodyJoint}, tf->box.center(), tf->box.height};
        vectors.push_back(provider.embed(q));
        positions.push_back(tf->box.center());
      }
      if (!vectors.empty()) out.subvolumes[t].push_back(build_subvolume(vectors, positions, t, tr.person_id));
    }
  }
  return out;
}

std::vector<ClipFeatures> extract_all(std::span<const VideoRecord> records, const PipelineConfig& cfg,
                                      const EmbeddingProvider& provider) {
  std::vector<ClipFeatures> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        out[i] = extract_clip(records[i], cfg, provider);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(cfg.threads, static_cast<int>(std::max<std::size_t>(records.size(), 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<std::vector<double>> descriptor_trace(const ClipFeatures& clip, const PipelineConfig& cfg,
                                                  const Codebook& codebook) {
  const int k = codebook.k();
  CoocMatrix m(k);
  std::vector<std::vector<double>> out;
  for (int t = 0; t < clip.real_segments; ++t) {
    std::vector<SubVolume> segment = clip.subvolumes[t];
    for (const auto& sv : segment) {
      if (static_cast<int>(sv.f.size()) != codebook.dim()) {
        throw ShapeError("codebook dimension " + std::to_string(codebook.dim()) +
                         " does not match appearance vectors of length " + std::to_string(sv.f.size()));
      }
    }
    m.accumulate(segment, codebook, cfg.cooc);
    out.push_back(m.normalized());
  }
  return out;
}

SequenceSample assemble_sample(const ClipFeatures& clip, const PipelineConfig& cfg, const Codebook& codebook) {
  const int k = codebook.k();
  SequenceSample s(cfg.segments, clip.persons, clip.cf_dim, k * k);
  s.label = clip.label;
  const int n = std::min(clip.real_segments, cfg.segments);
  const std::size_t per_segment = static_cast<std::size_t>(clip.persons) * clip.cf_dim;
  std::copy_n(clip.cf.begin(), n * per_segment, s.cf.begin());
  std::copy_n(clip.person_mask.begin(), static_cast<std::size_t>(n) * clip.persons, s.person_mask.begin());
  std::fill_n(s.segment_mask.begin(), n, 1);
  if (cfg.ablation != Ablation::Baseline1) {
    const auto trace = descriptor_trace(clip, cfg, codebook);
    for (int t = 0; t < n; ++t) std::copy(trace[t].begin(), trace[t].end(), s.segment_descriptor(t).begin());
  }
  return s;
}

SequenceSample assemble_sample(const VideoRecord& rec, const PipelineConfig& cfg, const EmbeddingProvider& provider,
                               const Codebook& codebook) {
  return assemble_sample(extract_clip(rec, cfg, provider), cfg, codebook);
}

Codebook fit_codebook(std::span<const ClipFeatures> train, const PipelineConfig& cfg) {
  if (train.empty()) throw DataError("cannot fit a codebook on an empty training set");
  std::vector<std::vector<double>> samples;
  for (const auto& clip : train) {
    for (const auto& segment : clip.subvolumes) {
      for (const auto& sv : segment) samples.push_back(sv.f);
    }
  }
  if (samples.size() < static_cast<std::size_t>(cfg.codebook_size)) {
    throw DataError("only " + std::to_string(samples.size()) + " training sub-volumes for K=" +
                    std::to_string(cfg.codebook_size) + "; choose a smaller codebook size");
  }
  return kmeans_fit(samples, cfg.codebook_size, cfg.kmeans_max_iter, cfg.seed).codebook;
}

Codebook fit_codebook(std::span<const VideoRecord> train, const PipelineConfig& cfg,
                      const EmbeddingProvider& provider) {
  const auto clips = extract_all(train, cfg, provider);
  return fit_codebook(clips, cfg);
}

}  // namespace ibpa
