#include "ibpa/skeleton.hpp"

#include <algorithm>
#include <tuple>

namespace ibpa {

double overlap_ratio(const DetectionBox& a, const DetectionBox& b) {
  const double ix0 = std::max(a.x, b.x);
  const double iy0 = std::max(a.y, b.y);
  const double ix1 = std::min(a.x + a.width, b.x + b.width);
  const double iy1 = std::min(a.y + a.height, b.y + b.height);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const double inter = (ix1 - ix0) * (iy1 - iy0);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

const TrackedFrame* TrackedSequence::at_frame(int frame) const {
  if (frames.empty()) return nullptr;
  const int offset = frame - frames.front().frame;
  if (offset < 0 || offset >= static_cast<int>(frames.size())) return nullptr;
  return &frames[offset];
}

Skeleton15 convert_pose(const RawPose18& raw) {
  Skeleton15 out;
  for (int j = 0; j < 14; ++j) out.joints[j] = raw.joints[j];

  if (!raw.joints[0].valid) {
    Vec2 sum;
    int count = 0;
    for (int j = 14; j < 18; ++j) {
      if (raw.joints[j].valid) {
        sum += raw.joints[j].pos;
        ++count;
      }
    }
    if (count > 0) {
      out.joints[0] = {{sum.x / count, sum.y / count}, true, false};
    } else {
      out.joints[0] = {};
    }
  }

  const Joint& rhip = raw.joints[8];
  const Joint& lhip = raw.joints[11];
  if (rhip.valid && lhip.valid) {
    out.joints[14] = {0.5 * (rhip.pos + lhip.pos), true, false};
  }
  for (auto& j : out.joints) {
    if (!j.valid) j = {};
  }
  return out;
}

Skeleton15 object_skeleton(const DetectionBox& box) {
  Skeleton15 out;
  out.is_object = true;
  out.person_id = box.person_id;
  out.joints[0] = {box.center(), true, false};
  return out;
}

bool filter_by_box(const Skeleton15& skel, const DetectionBox& box) {
  if (skel.is_object) return true;
  const Joint& head = skel.joints[0];
  if (!head.valid || !box.contains(head.pos)) return false;
  for (int j : kPartJoints[index_of(BodyPart::Torso)]) {
    const Joint& joint = skel.joints[j];
    if (joint.valid && !box.contains(joint.pos)) return false;
  }
  return true;
}

TrackedSequence interpolate_missing(const TrackedSequence& seq, int max_gap) {
  TrackedSequence out = seq;
  const int n = static_cast<int>(seq.frames.size());
  for (int j = 0; j < kJointCount; ++j) {
    int last_valid = -1;
    for (int i = 0; i < n; ++i) {
      const Joint& cur = seq.frames[i].skeleton.joints[j];
      if (!cur.valid) continue;
      const int gap = i - last_valid - 1;
      if (last_valid >= 0 && gap > 0 && gap <= max_gap) {
        const Vec2 start = seq.frames[last_valid].skeleton.joints[j].pos;
        const Vec2 end = cur.pos;
        const double span = i - last_valid;
        for (int k = last_valid + 1; k < i; ++k) {
          // One rounding: exact whenever the true value is representable.
          const double o = k - last_valid;
          Joint& fill = out.frames[k].skeleton.joints[j];
          fill.pos = {((span - o) * start.x + o * end.x) / span, ((span - o) * start.y + o * end.y) / span};
          fill.valid = true;
          fill.interpolated = true;
        }
      }
      last_valid = i;
    }
  }
  return out;
}

namespace {

struct ActiveTrack {
  TrackedSequence seq;
  DetectionBox last_box;
  int last_frame = 0;
};

Skeleton15 skeleton_for(const Detection& det, int id, bool filter) {
  Skeleton15 skel = det.is_object ? object_skeleton(det.box) : convert_pose(det.pose);
  skel.person_id = id;
  if (filter && !filter_by_box(skel, det.box)) {
    skel.joints = {};
  }
  return skel;
}

}  // namespace

std::vector<TrackedSequence> track_people(std::span<const FrameDetections> frames,
                                          const TrackerOptions& options) {
  std::vector<ActiveTrack> tracks;
  int next_id = 0;

  for (const FrameDetections& fd : frames) {
    struct Candidate {
      double iou;
      int track_id;
      std::size_t track_pos;
      std::size_t det;
    };
    std::vector<Candidate> candidates;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      const ActiveTrack& tr = tracks[t];
      if (fd.frame - tr.last_frame - 1 > options.max_gap || tr.last_frame >= fd.frame) continue;
      for (std::size_t d = 0; d < fd.detections.size(); ++d) {
        if (fd.detections[d].is_object != tr.seq.is_object) continue;
        const double iou = overlap_ratio(tr.last_box, fd.detections[d].box);
        if (iou >= options.iou_threshold) {
          candidates.push_back({iou, tr.seq.person_id, t, d});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(b.iou, a.track_id, a.det) < std::tie(a.iou, b.track_id, b.det);
    });

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> det_used(fd.detections.size(), false);
    for (const Candidate& c : candidates) {
      if (track_used[c.track_pos] || det_used[c.det]) continue;
      track_used[c.track_pos] = det_used[c.det] = true;
      ActiveTrack& tr = tracks[c.track_pos];
      const Detection& det = fd.detections[c.det];
      for (int f = tr.last_frame + 1; f < fd.frame; ++f) {
        TrackedFrame placeholder;
        placeholder.frame = f;
        placeholder.skeleton.person_id = tr.seq.person_id;
        placeholder.skeleton.is_object = tr.seq.is_object;
        placeholder.box = tr.last_box;
        placeholder.detected = false;
        tr.seq.frames.push_back(placeholder);
      }
      DetectionBox box = det.box;
      box.person_id = tr.seq.person_id;
      tr.seq.frames.push_back(
          {fd.frame, skeleton_for(det, tr.seq.person_id, options.filter_with_box), box, true});
      tr.last_box = box;
      tr.last_frame = fd.frame;
    }

    for (std::size_t d = 0; d < fd.detections.size(); ++d) {
      if (det_used[d]) continue;
      const Detection& det = fd.detections[d];
      ActiveTrack tr;
      tr.seq.person_id = next_id++;
      tr.seq.is_object = det.is_object;
      tr.seq.frame_rate = options.frame_rate;
      DetectionBox box = det.box;
      box.person_id = tr.seq.person_id;
      tr.seq.frames.push_back(
          {fd.frame, skeleton_for(det, tr.seq.person_id, options.filter_with_box), box, true});
      tr.last_box = box;
      tr.last_frame = fd.frame;
      tracks.push_back(std::move(tr));
    }
  }

  std::vector<TrackedSequence> out;
  out.reserve(tracks.size());
  for (auto& tr : tracks) out.push_back(std::move(tr.seq));
  return out;
}

std::optional<Vec2> part_centroid(const Skeleton15& skel, BodyPart part) {
  Vec2 sum;
  int count = 0;
  for (int j : kPartJoints[index_of(part)]) {
    if (skel.joints[j].valid) {
      sum += skel.joints[j].pos;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return Vec2{sum.x / count, sum.y / count};
}

}  // namespace ibpa
