#include "zsdgen/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "zsdgen/errors.hpp"

namespace zsdgen {

std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const GroundTruth> gts, double iou_thr) {
  std::vector<bool> flags(dets.size(), false);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const Detection& d = dets[i];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].class_id != d.class_id || gts[g].image_id != d.image_id) continue;
      const double o = iou(d.box, gts[g].box);
      if (o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best && best_iou >= iou_thr) {
      used[*best] = true;
      flags[i] = true;
    }
  }
  return flags;
}

double average_precision(std::span<const RankedFlag> ranked, std::size_t n_gt, ApMode mode) {
  require(n_gt >= 1, "average_precision: class needs at least one ground truth");
  std::vector<RankedFlag> order(ranked.begin(), ranked.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const RankedFlag& a, const RankedFlag& b) { return a.score > b.score; });

  std::vector<double> recall(order.size());
  std::vector<double> precision(order.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i].true_positive) ++tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // envelope: precision at rank i becomes the best precision at any rank >= i
  for (std::size_t i = order.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  if (mode == ApMode::ElevenPoint) {
    double total = 0.0;
    for (int step = 0; step <= 10; ++step) {
      const double r = step / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (recall[i] >= r) {
          p = precision[i];
          break;
        }
      }
      total += p;
    }
    return total / 11.0;
  }

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

double mean_ap(const std::map<int, double>& aps, std::span<const int> classes) {
  require(!classes.empty(), "mean_ap: empty class set");
  double total = 0.0;
  for (int c : classes) {
    auto it = aps.find(c);
    require(it != aps.end(), "mean_ap: no AP for class " + std::to_string(c));
    total += it->second;
  }
  return total / static_cast<double>(classes.size());
}

namespace {

std::vector<Detection> sorted_by_score(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

}  // namespace

double recall_at_k(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                   std::size_t k, double iou_thr) {
  require(k >= 1, "recall_at_k: k must be at least 1");
  require(!gts.empty(), "recall_at_k: no ground truths");
  std::map<int, std::vector<Detection>> by_image;
  for (const Detection& d : sorted_by_score(dets)) {
    auto& bucket = by_image[d.image_id];
    if (bucket.size() < k) bucket.push_back(d);
  }
  std::size_t matched = 0;
  for (const auto& [image_id, image_dets] : by_image) {
    for (bool f : match_detections(image_dets, gts, iou_thr)) matched += f ? 1 : 0;
  }
  return static_cast<double>(matched) / static_cast<double>(gts.size());
}

double harmonic_mean(double seen, double unseen) {
  require(seen >= 0.0 && unseen >= 0.0, "harmonic_mean: inputs must be non-negative");
  if (seen == 0.0 || unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

EvalReport build_report(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                        const SemanticTable& semantics, DetectMode mode, std::size_t k,
                        double iou_thr, ApMode ap_mode) {
  auto evaluated = [&](int class_id) {
    return mode == DetectMode::Gzsd ? (semantics.is_seen(class_id) || semantics.is_unseen(class_id))
                                    : semantics.is_unseen(class_id);
  };
  std::vector<GroundTruth> eval_gts;
  std::map<int, std::size_t> gt_count;
  for (const GroundTruth& g : gts) {
    if (!evaluated(g.class_id)) continue;
    eval_gts.push_back(g);
    ++gt_count[g.class_id];
  }
  std::vector<Detection> eval_dets;
  for (const Detection& d : dets) {
    if (evaluated(d.class_id)) eval_dets.push_back(d);
  }
  eval_dets = sorted_by_score(eval_dets);

  EvalReport report;
  report.mode = mode;
  report.iou_threshold = iou_thr;
  report.k = k;

  const std::vector<bool> flags = match_detections(eval_dets, eval_gts, iou_thr);
  std::map<int, std::vector<RankedFlag>> ranked;
  for (std::size_t i = 0; i < eval_dets.size(); ++i) {
    ranked[eval_dets[i].class_id].push_back({eval_dets[i].score, flags[i]});
  }
  std::vector<int> classes;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  for (const auto& [class_id, n] : gt_count) {
    report.per_class_ap[class_id] = average_precision(ranked[class_id], n, ap_mode);
    classes.push_back(class_id);
    (semantics.is_seen(class_id) ? seen_classes : unseen_classes).push_back(class_id);
  }
  require(!classes.empty(), "build_report: no ground truths for the evaluated classes");
  report.map = mean_ap(report.per_class_ap, classes);
  report.recall_at_k = recall_at_k(eval_dets, eval_gts, k, iou_thr);

  if (mode == DetectMode::Gzsd) {
    report.seen_map = seen_classes.empty() ? 0.0 : mean_ap(report.per_class_ap, seen_classes);
    report.unseen_map = unseen_classes.empty() ? 0.0 : mean_ap(report.per_class_ap, unseen_classes);
    report.harmonic_mean = harmonic_mean(*report.seen_map, *report.unseen_map);
  }
  return report;
}

const char* mode_name(DetectMode mode) { return mode == DetectMode::Zsd ? "zsd" : "gzsd"; }

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(report.mode);
  j["iou_threshold"] = report.iou_threshold;
  nlohmann::ordered_json aps = nlohmann::ordered_json::object();
  for (const auto& [class_id, ap] : report.per_class_ap) aps[std::to_string(class_id)] = ap;
  j["per_class_ap"] = aps;
  j["map"] = report.map;
  j["recall_at_k"] = report.recall_at_k;
  auto optional_value = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["seen_map"] = optional_value(report.seen_map);
  j["unseen_map"] = optional_value(report.unseen_map);
  j["harmonic_mean"] = optional_value(report.harmonic_mean);
  return j.dump(2) + "\n";
}

}  // namespace zsdgen
