#include "ibpa/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "ibpa/random.hpp"

namespace ibpa {

namespace {

// Raw 18-joint template around the hip center, facing +x, y pointing down.
constexpr std::array<Vec2, kRawJointCount> kTemplate{{
    {3, -150},   // 0 head
    {0, -125},   // 1 neck
    {14, -120},  // 2 right shoulder
    {20, -92},   // 3 right elbow
    {22, -66},   // 4 right wrist
    {-14, -120}, // 5 left shoulder
    {-20, -92},  // 6 left elbow
    {-22, -66},  // 7 left wrist
    {9, 0},      // 8 right hip
    {11, 45},    // 9 right knee
    {12, 90},    // 10 right ankle
    {-9, 0},     // 11 left hip
    {-11, 45},   // 12 left knee
    {-12, 90},   // 13 left ankle
    {6, -155},   // 14 right eye
    {0, -155},   // 15 left eye
    {8, -150},   // 16 right ear
    {-6, -150},  // 17 left ear
}};

constexpr double kBoxMargin = 12.0;

// Distal (end effector) and middle joint moved by a reach, raw indices.
std::pair<int, int> reach_joints(BodyPart part) {
  switch (part) {
    case BodyPart::RightArm: return {4, 3};
    case BodyPart::LeftArm: return {7, 6};
    case BodyPart::RightLeg: return {10, 9};
    case BodyPart::LeftLeg: return {13, 12};
    case BodyPart::Torso: return {0, 1};
  }
  return {4, 3};
}

// Raw-layout joints of a part (hip uses both raw hips).
Vec2 raw_part_centroid(const std::array<Vec2, kRawJointCount>& pose, BodyPart part) {
  const auto& triple = kPartJoints[index_of(part)];
  Vec2 sum;
  for (int j : triple) {
    sum += j == 14 ? 0.5 * (pose[8] + pose[11]) : pose[j];
  }
  return {sum.x / 3.0, sum.y / 3.0};
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double round_px(double v) { return std::round(v * 100.0) / 100.0; }

struct Actor {
  Vec2 hip;
  double scale = 1.0;
  double dir = 1.0;  // +1 faces right

  std::array<Vec2, kRawJointCount> pose() const {
    std::array<Vec2, kRawJointCount> out;
    for (int j = 0; j < kRawJointCount; ++j) {
      out[j] = hip + Vec2{scale * dir * kTemplate[j].x, scale * kTemplate[j].y};
    }
    return out;
  }
};

}  // namespace

void SyntheticSpec::validate() const {
  if (classes.size() < 2) throw std::invalid_argument("synthetic generator needs at least two classes");
  for (const auto& c : classes) {
    for (const auto& m : c.moves) {
      if (m.actor < 0 || m.actor > 1) throw std::invalid_argument("movement actor must be 0 or 1");
      if (index_of(m.part) < 0 || index_of(m.part) >= kPartCount || index_of(m.target) < 0 ||
          index_of(m.target) >= kPartCount) {
        throw std::invalid_argument("movement part index out of range");
      }
    }
    if (!(c.approach_min > 0.0) || c.approach_max < c.approach_min) {
      throw std::invalid_argument("approach range of class '" + c.name + "' is invalid");
    }
  }
  if (clip_min < 2 || clip_max < clip_min) throw std::invalid_argument("invalid clip length range");
  if (drop_rate < 0.0 || drop_rate >= 1.0) throw std::invalid_argument("drop_rate must be in [0, 1)");
  if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be positive");
}

SyntheticSpec default_synthetic_spec() {
  using enum BodyPart;
  SyntheticSpec spec;
  spec.classes = {
      {"shake", {{0, RightArm, RightArm, MoveKind::Reach}, {1, RightArm, RightArm, MoveKind::Reach}}},
      {"kick", {{0, RightLeg, Torso, MoveKind::Reach}}},
      {"hug", {{0, Torso, Torso, MoveKind::Approach}, {1, Torso, Torso, MoveKind::Approach}}},
      {"push", {{0, RightArm, Torso, MoveKind::Reach}, {0, LeftArm, Torso, MoveKind::Reach}}},
  };
  return spec;
}

SyntheticData synth_generate(const SyntheticSpec& spec, int count, std::uint64_t seed,
                             std::int64_t first_video_id) {
  spec.validate();
  SyntheticData out;
  for (const auto& c : spec.classes) out.dataset.classes.push_back(c.name);
  std::map<std::int64_t, int> labels;
  const int num_classes = static_cast<int>(spec.classes.size());

  for (int i = 0; i < count; ++i) {
    Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
    VideoRecord rec;
    rec.video_id = first_video_id + i;
    rec.label = i % num_classes;
    rec.frame_rate = spec.fps;
    labels[rec.video_id] = rec.label;
    const ClassDesign& design = spec.classes[rec.label];

    const int length = spec.clip_min + static_cast<int>(rng.below(spec.clip_max - spec.clip_min + 1));
    const bool subject_left = rng.uniform() < 0.5;
    const Actor left{{250.0 + rng.uniform(-15, 15), 300.0 + rng.uniform(-10, 10)}, rng.uniform(0.9, 1.1), 1.0};
    const Actor right{{400.0 + rng.uniform(-15, 15), 300.0 + rng.uniform(-10, 10)}, rng.uniform(0.9, 1.1), -1.0};
    const std::array<Actor, 2> actors = subject_left ? std::array{left, right} : std::array{right, left};
    const double onset = rng.uniform(0.0, 0.15) * length;
    const double duration = rng.uniform(design.approach_min, design.approach_max) * length;

    int approachers = 0;
    for (const auto& m : design.moves) approachers += m.kind == MoveKind::Approach ? 1 : 0;
    const double gap = std::abs(actors[1].hip.x - actors[0].hip.x);
    const double approach_total = std::max(0.0, gap - 60.0);

    for (int f = 0; f < length; ++f) {
      const double u = smoothstep((f - onset) / duration);
      std::array<std::array<Vec2, kRawJointCount>, 2> poses{actors[0].pose(), actors[1].pose()};

      for (const auto& m : design.moves) {
        if (m.kind != MoveKind::Approach) continue;
        const double shift = actors[m.actor].dir * u * approach_total / approachers;
        for (auto& p : poses[m.actor]) p.x += shift;
      }
      const auto placed = poses;  // after whole-body motion, before reaches

      for (const auto& m : design.moves) {
        if (m.kind != MoveKind::Reach) continue;
        const int other = 1 - m.actor;
        const auto [eff, mid] = reach_joints(m.part);
        Vec2 target;
        const bool mutual = std::any_of(design.moves.begin(), design.moves.end(), [&](const Movement& n) {
          return n.kind == MoveKind::Reach && n.actor == other && n.part == m.target && n.target == m.part;
        });
        if (mutual) {
          target = 0.5 * (placed[m.actor][eff] + placed[other][reach_joints(m.target).first]);
        } else {
          const Vec2 c = raw_part_centroid(placed[other], m.target);
          target = c - Vec2{actors[m.actor].dir * 10.0, 0.0};
        }
        const Vec2 delta = target - placed[m.actor][eff];
        poses[m.actor][eff] = placed[m.actor][eff] + u * delta;
        poses[m.actor][mid] = placed[m.actor][mid] + (0.5 * u) * delta;
        if (eff == 0) {
          for (int j = 14; j < kRawJointCount; ++j) poses[m.actor][j] = placed[m.actor][j] + u * delta;
        }
      }

      FrameDetections fd;
      fd.frame = f;
      for (int a = 0; a < 2; ++a) {
        Detection det;
        double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
        for (int j = 0; j < kRawJointCount; ++j) {
          const Vec2 p{round_px(poses[a][j].x + spec.joint_noise * rng.normal()),
                       round_px(poses[a][j].y + spec.joint_noise * rng.normal())};
          const bool dropped = rng.uniform() < spec.drop_rate;
          det.pose.joints[j] = dropped ? Joint{} : Joint{p, true, false};
          x0 = std::min(x0, p.x);
          y0 = std::min(y0, p.y);
          x1 = std::max(x1, p.x);
          y1 = std::max(y1, p.y);
        }
        det.box = {round_px(x0 - kBoxMargin), round_px(y0 - kBoxMargin), round_px(x1 - x0 + 2 * kBoxMargin),
                   round_px(y1 - y0 + 2 * kBoxMargin)};
        fd.detections.push_back(det);
      }
      rec.frames.push_back(std::move(fd));
    }
    out.dataset.records.push_back(std::move(rec));
  }

  ClassSignalOptions opts;
  opts.dim = spec.embedding_dim;
  opts.classes = num_classes;
  opts.strength = spec.signal_strength;
  opts.noise = spec.embedding_noise;
  opts.mean_seed = spec.signal_seed;
  opts.noise_seed = hash_combine(seed, 0xe3bedd);
  out.provider = std::make_shared<const ClassSignalEmbeddingProvider>(opts, std::move(labels));
  return out;
}

EmbeddingTable build_embedding_table(const Dataset& data, const EmbeddingProvider& provider) {
  EmbeddingTable table(provider.dim());
  std::array<std::int32_t, kContactJointCount + 1> joints{};
  std::copy(kContactJoints.begin(), kContactJoints.end(), joints.begin());
  joints.back() = kFullBodyJoint;
  for (const auto& rec : data.records) {
    for (const auto& fd : rec.frames) {
      for (std::size_t p = 0; p < fd.detections.size(); ++p) {
        for (std::int32_t j : joints) {
          PatchQuery q{{rec.video_id, fd.frame, static_cast<std::int32_t>(p), j}, fd.detections[p].box.center(),
                       fd.detections[p].box.height};
          const auto v = provider.embed(q);
          table.insert(q.key, std::vector<float>(v.begin(), v.end()));
        }
      }
    }
  }
  return table;
}

}  // namespace ibpa
