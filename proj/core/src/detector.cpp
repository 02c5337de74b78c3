#include "zsdgen/detector.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

#include "zsdgen/errors.hpp"

namespace zsdgen {

Box apply_offset(const Box& box, const BoxOffset& o) {
  return {box.x1 + o[0], box.y1 + o[1], box.x2 + o[2], box.y2 + o[3]};
}

BoxOffset offset_between(const Box& from, const Box& to) {
  return {to.x1 - from.x1, to.y1 - from.y1, to.x2 - from.x2, to.y2 - from.y2};
}

double iou(const Box& a, const Box& b) {
  require(a.valid() && b.valid(), "iou: degenerate box");
  if (a == b) return 1.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box < b.box;
}

std::vector<Detection> nms(std::vector<Detection> dets, double threshold) {
  std::stable_sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    const bool clear = std::all_of(kept.begin(), kept.end(),
                                   [&](const Detection& k) { return iou(k.box, d.box) <= threshold; });
    if (clear) kept.push_back(d);
  }
  return kept;
}

Box assign_unseen_box(const Proposal& p, const ClassifierHead& head) {
  if (p.offsets.empty()) return p.box;
  require(p.offsets.size() == head.num_seen, "assign_unseen_box: offsets must cover every seen class");
  std::size_t best = 1;
  double best_logit = head.logit(1, p.feature);
  for (std::size_t r = 2; r <= head.num_seen; ++r) {
    const double l = head.logit(r, p.feature);
    if (l > best_logit) {
      best_logit = l;
      best = r;
    }
  }
  const Box moved = apply_offset(p.box, p.offsets[best - 1]);
  return moved.valid() ? moved : p.box;
}

namespace {

// Candidate class ids and scores for one proposal; index 0 is background.
struct Candidates {
  std::vector<int> ids;
  Vector scores;
};

using Scorer = std::function<Candidates(const Proposal&)>;
using BoxFor = std::function<Box(const Proposal&, int class_id)>;

bool detection_order(const Detection& a, const Detection& b) {
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  if (ranks_before(a, b)) return true;
  if (ranks_before(b, a)) return false;
  return a.class_id < b.class_id;
}

std::vector<Detection> run_detection(std::span<const Proposal> proposals, const Scorer& scorer,
                                     const BoxFor& box_for, const DetectOptions& options) {
  require(options.top_k >= 1, "detect: top_k must be at least 1");
  std::map<int, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < proposals.size(); ++i) by_image[proposals[i].image_id].push_back(i);

  std::vector<Detection> out;
  for (const auto& [image_id, indices] : by_image) {
    struct Scored {
      std::size_t index;
      Candidates cand;
      double best_foreground;
    };
    std::vector<Scored> scored;
    scored.reserve(indices.size());
    for (std::size_t i : indices) {
      Candidates c = scorer(proposals[i]);
      const double best = c.scores.size() > 1 ? *std::max_element(c.scores.begin() + 1, c.scores.end()) : 0.0;
      scored.push_back({i, std::move(c), best});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      return a.best_foreground > b.best_foreground;
    });
    if (scored.size() > options.top_k) scored.resize(options.top_k);

    std::map<int, std::vector<Detection>> per_class;
    for (const Scored& s : scored) {
      const auto& scores = s.cand.scores;
      const auto arg = static_cast<std::size_t>(
          std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
      if (arg == 0) continue;
      const double score = scores[arg];
      if (score < options.score_threshold || !(score > 0.0)) continue;
      const int class_id = s.cand.ids[arg];
      const Proposal& p = proposals[s.index];
      per_class[class_id].push_back({image_id, box_for(p, class_id), class_id, score});
    }
    for (auto& [class_id, dets] : per_class) {
      for (Detection& d : nms(std::move(dets), options.nms_threshold)) out.push_back(d);
    }
  }
  std::stable_sort(out.begin(), out.end(), detection_order);
  return out;
}

Box box_for_class(const Proposal& p, const ClassifierHead& head, int class_id) {
  const std::size_t row = head.row_of(class_id);
  if (head.is_unseen_row(row)) return assign_unseen_box(p, head);
  if (p.offsets.empty()) return p.box;
  require(p.offsets.size() == head.num_seen, "detect: offsets must cover every seen class");
  const Box moved = apply_offset(p.box, p.offsets[row - 1]);
  return moved.valid() ? moved : p.box;
}

}  // namespace

std::vector<Detection> detect(std::span<const Proposal> proposals, const ClassifierHead& head,
                              const DetectOptions& options) {
  require(head.unseen_ready, "detect: unseen rows are not initialized");
  const auto rows = head.rows(options.mode == DetectMode::Zsd ? RowSet::UnseenAndBackground : RowSet::All);
  std::vector<int> ids;
  for (std::size_t r : rows) ids.push_back(head.class_ids[r]);

  Scorer scorer = [&](const Proposal& p) { return Candidates{ids, classifier_forward(head, p.feature, rows)}; };
  BoxFor box_for = [&](const Proposal& p, int class_id) { return box_for_class(p, head, class_id); };
  return run_detection(proposals, scorer, box_for, options);
}

Vector baseline_unseen_scores(std::span<const double> seen_probs, const SemanticTable& semantics) {
  require(seen_probs.size() == semantics.num_seen(), "baseline_unseen_scores: expected one probability per seen class");
  const Vector embedded = matvec(semantics.seen_matrix(), seen_probs);  // W_s p_s
  return matvec_t(semantics.unseen_matrix(), embedded);                 // W_u^T (W_s p_s)
}

std::vector<Detection> detect_baseline(std::span<const Proposal> proposals,
                                       const ClassifierHead& head,
                                       const SemanticTable& semantics,
                                       const DetectOptions& options) {
  require(head.num_seen == semantics.num_seen(), "detect_baseline: head and semantics disagree");
  const auto seen_rows = head.rows(RowSet::SeenAndBackground);
  const bool gzsd = options.mode == DetectMode::Gzsd;

  Scorer scorer = [&](const Proposal& p) {
    const Vector probs = classifier_forward(head, p.feature, seen_rows);
    const std::span<const double> seen_probs(probs.begin() + 1, probs.end());
    const Vector unseen = baseline_unseen_scores(seen_probs, semantics);
    Candidates c;
    c.ids.push_back(kBackground);
    c.scores.push_back(probs[0]);
    if (gzsd) {
      for (std::size_t i = 0; i < semantics.num_seen(); ++i) {
        c.ids.push_back(semantics.seen()[i].id);
        c.scores.push_back(seen_probs[i]);
      }
    }
    for (std::size_t i = 0; i < semantics.num_unseen(); ++i) {
      c.ids.push_back(semantics.unseen()[i].id);
      c.scores.push_back(unseen[i]);
    }
    return c;
  };
  BoxFor box_for = [&](const Proposal& p, int class_id) {
    if (semantics.is_unseen(class_id)) return assign_unseen_box(p, head);
    return box_for_class(p, head, class_id);
  };
  return run_detection(proposals, scorer, box_for, options);
}

}  // namespace zsdgen
