#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ibpa/geometry.hpp"

namespace ibpa {

inline constexpr int kRawJointCount = 18;
inline constexpr int kJointCount = 15;
inline constexpr int kPartCount = 5;
inline constexpr int kOuterAngleCount = 4;
inline constexpr int kContactJointCount = 5;

struct Joint {
  Vec2 pos;
  bool valid = false;
  bool interpolated = false;

  friend bool operator==(const Joint&, const Joint&) = default;
};

// Pose-estimator output in the 18-keypoint COCO layout.
struct RawPose18 {
  std::array<Joint, kRawJointCount> joints{};
};

// 15 joints: raw joints 0..13 plus the synthesized hip at index 14.
struct Skeleton15 {
  std::array<Joint, kJointCount> joints{};
  int person_id = -1;
  // Non-human object (e.g. a vehicle): only joint 0, the box center, is set.
  bool is_object = false;

  friend bool operator==(const Skeleton15&, const Skeleton15&) = default;
};

enum class BodyPart : int { RightArm = 0, LeftArm, RightLeg, LeftLeg, Torso };

inline constexpr std::array<BodyPart, kPartCount> kAllParts{
    BodyPart::RightArm, BodyPart::LeftArm, BodyPart::RightLeg,
    BodyPart::LeftLeg, BodyPart::Torso};

constexpr int index_of(BodyPart p) { return static_cast<int>(p); }

// Joint triples per part; every joint 0..14 appears exactly once.
inline constexpr std::array<std::array<int, 3>, kPartCount> kPartJoints{{
    {2, 3, 4}, {5, 6, 7}, {8, 9, 10}, {11, 12, 13}, {0, 1, 14}}};

// Triples for the angles between connected parts.
inline constexpr std::array<std::array<int, 3>, kOuterAngleCount> kOuterTriples{{
    {1, 2, 3}, {1, 5, 6}, {1, 8, 9}, {1, 11, 12}}};

// Head, hands and feet.
inline constexpr std::array<int, kContactJointCount> kContactJoints{0, 4, 7, 10, 13};

// Part owning each contact joint, in kContactJoints order.
inline constexpr std::array<BodyPart, kContactJointCount> kContactJointPart{
    BodyPart::Torso, BodyPart::RightArm, BodyPart::LeftArm, BodyPart::RightLeg,
    BodyPart::LeftLeg};

// Slot in kContactJoints of the contact joint belonging to a part.
constexpr int contact_slot_of(BodyPart p) {
  switch (p) {
    case BodyPart::RightArm: return 1;
    case BodyPart::LeftArm: return 2;
    case BodyPart::RightLeg: return 3;
    case BodyPart::LeftLeg: return 4;
    case BodyPart::Torso: return 0;
  }
  return 0;
}

struct DetectionBox {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;
  int person_id = -1;

  bool contains(Vec2 p) const {
    return p.x >= x && p.x <= x + width && p.y >= y && p.y <= y + height;
  }
  Vec2 center() const { return {x + 0.5 * width, y + 0.5 * height}; }
  double area() const { return width * height; }

  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

// Intersection area over union area; 0 for disjoint boxes.
double overlap_ratio(const DetectionBox& a, const DetectionBox& b);

struct TrackedFrame {
  int frame = 0;
  Skeleton15 skeleton;
  DetectionBox box;
  // False for placeholder frames inserted while a track was not detected.
  bool detected = true;
};

struct TrackedSequence {
  int person_id = -1;
  bool is_object = false;
  double frame_rate = 0.0;
  std::vector<TrackedFrame> frames;  // consecutive frame indices

  const TrackedFrame* at_frame(int frame) const;
};

// One detection in one frame of pose-estimator output.
struct Detection {
  RawPose18 pose;
  DetectionBox box;
  bool is_object = false;
};

struct FrameDetections {
  int frame = 0;
  std::vector<Detection> detections;
};

struct TrackerOptions {
  double iou_threshold = 0.3;
  // Frames a track may go undetected and still be continued.
  int max_gap = 10;
  bool filter_with_box = true;
  double frame_rate = 0.0;
};

Skeleton15 convert_pose(const RawPose18& raw);

// Object detections carry only their box center, as joint 0.
Skeleton15 object_skeleton(const DetectionBox& box);

// Head (joint 0) and every valid torso joint must fall inside the box.
// Objects always pass.
bool filter_by_box(const Skeleton15& skel, const DetectionBox& box);

// Linearly fills runs of at most max_gap invalid frames per joint that are
// bounded by valid frames on both sides. Filled joints are flagged
// `interpolated`; original joints are never modified.
TrackedSequence interpolate_missing(const TrackedSequence& seq, int max_gap);

// Greedy frame-to-frame association by box overlap. Ids are assigned in
// order of first appearance (detection order within a frame), from 0.
std::vector<TrackedSequence> track_people(std::span<const FrameDetections> frames,
                                          const TrackerOptions& options = {});

std::optional<Vec2> part_centroid(const Skeleton15& skel, BodyPart part);

}  // namespace ibpa
