#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsdgen/detector.hpp"
#include "zsdgen/models.hpp"

namespace zsdgen {

struct GroundTruth {
  int image_id = 0;
  Box box;
  int class_id = 0;

  bool operator==(const GroundTruth&) const = default;
};

/// Greedy matching. Detections must be sorted by score, descending. Each
/// detection takes the highest-IoU still-unmatched ground truth of the same
/// class and image (first in input order on ties) when that IoU >= iou_thr.
/// Returns one true-positive flag per detection.
std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const GroundTruth> gts, double iou_thr = 0.5);

struct RankedFlag {
  double score = 0.0;
  bool true_positive = false;
};

enum class ApMode { AllPoint, ElevenPoint };

/// Area under the precision/recall curve for one class. Entries are ranked
/// by score (stable for ties). AllPoint integrates the monotone precision
/// envelope; ElevenPoint averages it at recall 0, 0.1, ..., 1.
double average_precision(std::span<const RankedFlag> ranked, std::size_t n_gt,
                         ApMode mode = ApMode::AllPoint);

/// Arithmetic mean of `aps` over `classes`. Throws ContractError when the
/// set is empty or a class has no entry.
double mean_ap(const std::map<int, double>& aps, std::span<const int> classes);

/// Per image keep the k highest-scoring detections across classes, match
/// them greedily, and return matched ground truths / all ground truths.
double recall_at_k(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                   std::size_t k = 100, double iou_thr = 0.5);

/// 2su / (s + u); 0 when either is 0.
double harmonic_mean(double seen, double unseen);

struct EvalReport {
  DetectMode mode = DetectMode::Gzsd;
  double iou_threshold = 0.5;
  std::map<int, double> per_class_ap;
  double map = 0.0;
  double recall_at_k = 0.0;
  std::size_t k = 100;
  std::optional<double> seen_map;
  std::optional<double> unseen_map;
  std::optional<double> harmonic_mean;

  bool operator==(const EvalReport&) const = default;
};

/// ZSD evaluates unseen classes only; GZSD evaluates every class and adds
/// seen/unseen mAPs and their harmonic mean. Classes without ground truth
/// are left out of every mean.
EvalReport build_report(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                        const SemanticTable& semantics, DetectMode mode, std::size_t k = 100,
                        double iou_thr = 0.5, ApMode ap_mode = ApMode::AllPoint);

/// JSON object with keys in the order mode, iou_threshold, per_class_ap,
/// map, recall_at_k, seen_map, unseen_map, harmonic_mean. Values that do
/// not apply to the mode are null.
std::string report_to_json(const EvalReport& report);

const char* mode_name(DetectMode mode);

}  // namespace zsdgen
