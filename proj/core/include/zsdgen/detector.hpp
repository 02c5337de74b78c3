#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "zsdgen/models.hpp"

namespace zsdgen {

struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept { return x2 > x1 && y2 > y1; }

  auto operator<=>(const Box&) const = default;
};

// Additive corrections (dx1, dy1, dx2, dy2).
using BoxOffset = std::array<double, 4>;

Box apply_offset(const Box& box, const BoxOffset& offset);
// Offset that maps `from` onto `to`.
BoxOffset offset_between(const Box& from, const Box& to);

struct Proposal {
  int image_id = 0;
  Box box;
  Vector feature;
  // Empty, or one entry per seen class in semantic-table order.
  std::vector<BoxOffset> offsets;

  bool operator==(const Proposal&) const = default;
};

struct Detection {
  int image_id = 0;
  Box box;
  int class_id = 0;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

/// Intersection over union. Throws ContractError for degenerate boxes.
double iou(const Box& a, const Box& b);

/// Ranking used by NMS and detection output: score descending, then box
/// coordinates ascending.
bool ranks_before(const Detection& a, const Detection& b);

/// Greedy suppression over detections of a single class and image: visit
/// in ranks_before() order and keep a detection iff its IoU with every
/// kept detection is <= threshold.
std::vector<Detection> nms(std::vector<Detection> dets, double threshold);

/// Proposal box corrected by the offsets of the seen class the head scores
/// highest on the proposal feature. Unchanged when the proposal has no offsets.
Box assign_unseen_box(const Proposal& p, const ClassifierHead& head);

enum class DetectMode { Zsd, Gzsd };

struct DetectOptions {
  DetectMode mode = DetectMode::Gzsd;
  std::size_t top_k = 100;
  double nms_threshold = 0.5;
  double score_threshold = 0.05;
};

/// Per image: keep the top_k proposals by their best non-background
/// probability, label each with its argmax row over the mode's active rows
/// (unseen + background for ZSD, all rows for GZSD), drop background and
/// low scores, then run NMS per class. Output is sorted by image id, then
/// ranks_before().
std::vector<Detection> detect(std::span<const Proposal> proposals, const ClassifierHead& head,
                              const DetectOptions& options);

/// W_u W_s^T p_s. Scores are not normalized.
Vector baseline_unseen_scores(std::span<const double> seen_probs, const SemanticTable& semantics);

/// Detection with the semantic-projection baseline: the head's background +
/// seen rows produce p_bg and p_s, unseen scores come from
/// baseline_unseen_scores(). Candidates are background and unseen (ZSD) or
/// background, seen and unseen (GZSD); the rest matches detect().
std::vector<Detection> detect_baseline(std::span<const Proposal> proposals,
                                       const ClassifierHead& head,
                                       const SemanticTable& semantics,
                                       const DetectOptions& options);

}  // namespace zsdgen
