#pragma once

// Slow, independent reference implementations used to check the library.

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "zsdgen/detector.hpp"
#include "zsdgen/metrics.hpp"
#include "zsdgen/models.hpp"

namespace oracle {

using zsdgen::Box;
using zsdgen::Detection;
using zsdgen::GroundTruth;

double box_iou(const Box& a, const Box& b);

// Repeatedly takes the best remaining detection and deletes everything it
// overlaps by more than the threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold);

// Greedy matching written as a scan over detections in the given order.
std::vector<bool> match(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                        double threshold);

// Enumerates every injective assignment and returns the unique one that
// satisfies the greedy conditions. Exponential; tiny inputs only.
std::vector<bool> match_by_enumeration(const std::vector<Detection>& dets,
                                       const std::vector<GroundTruth>& gts, double threshold);

// (1 / n_gt) * sum over true-positive ranks of the best precision at or
// below that rank. Entries must already be in ranking order.
double average_precision(const std::vector<bool>& ranked_flags, std::size_t n_gt);

double recall_at_k(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, std::size_t k,
                   double threshold);

struct Report {
  std::map<int, double> per_class_ap;
  double map = 0.0;
  double recall = 0.0;
  std::optional<double> seen_map;
  std::optional<double> unseen_map;
  std::optional<double> harmonic_mean;
};

// Single-function evaluator: per-class matching and AP, means, recall@k.
Report evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                const zsdgen::SemanticTable& semantics, bool gzsd, std::size_t k, double threshold);

}  // namespace oracle
