#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "zsdgen/detector.hpp"
#include "zsdgen/metrics.hpp"
#include "zsdgen/models.hpp"
#include "zsdgen/numerics.hpp"

namespace zsdgen {

enum class FeatureSource { Real, Synthetic, Heldout };

const char* source_name(FeatureSource source);

struct FeatureRecord {
  int label = kBackground;
  double iou = 0.0;
  FeatureSource source = FeatureSource::Real;
  Vector values;

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureSet {
  std::size_t feat_dim = 0;
  std::vector<FeatureRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool operator==(const FeatureSet&) const = default;
};

// Foreground boxes need IoU >= fg_min with their object, background boxes
// IoU <= bg_max with every object.
struct ExtractionPolicy {
  double fg_min = 0.7;
  double bg_max = 0.3;

  static ExtractionPolicy distinct() { return {0.7, 0.3}; }
  static ExtractionPolicy overlapping() { return {0.5, 0.45}; }
};

struct ToyWorldSpec {
  std::size_t sem_dim = 8;
  std::size_t feat_dim = 32;
  std::size_t num_seen = 16;
  std::size_t num_unseen = 4;
  double sigma = 0.1;      // foreground feature noise
  double sigma_bg = 0.1;   // background feature noise
  double parent_jitter = 0.05;  // perturbation of unseen semantics
  std::size_t records_per_class = 200;
  std::size_t heldout_per_class = 200;
  std::size_t background_records = 800;
  std::size_t scenes = 60;
  std::size_t proposals_per_gt = 3;
  std::size_t background_proposals = 8;
  double proposal_iou_min = 0.6;
  double proposal_bg_max = 0.3;  // test-scene background proposals, independent of the policy
  double offset_jitter = 0.15;  // offset noise for non-matching seen classes, relative to box size
  double image_size = 100.0;
  ExtractionPolicy policy;

  // Throws ContractError on an invalid spec.
  void validate() const;
};

struct Split {
  std::vector<int> seen;
  std::vector<int> unseen;
};

struct ToyWorld {
  SemanticTable semantics;
  Matrix mixing;  // feat_dim x sem_dim; class mean before rectification is mixing * w
  // Seen-table positions of the two parents of each unseen class.
  std::vector<std::array<std::size_t, 2>> parents;

  Split split() const;
  // rect(mixing * w_c)
  Vector clean_feature(int class_id) const;
};

struct Scene {
  int image_id = 0;
  std::vector<GroundTruth> gts;
  std::vector<Proposal> proposals;

  bool operator==(const Scene&) const = default;
};

/// Seen ids 1..S then unseen ids S+1..S+U. Seen vectors are uniform on the
/// unit sphere; each unseen vector is a normalized random convex
/// combination of two distinct seen vectors plus a small Gaussian jitter.
/// The mixing map has i.i.d. N(0, 1/d) entries.
ToyWorld gen_toy_world(const ToyWorldSpec& spec, RandomStream& stream);

/// Real features. Foreground of class c at IoU t ~ U[fg_min, 1]:
/// rect(M w_c + sigma (2 - t) eps). Background at IoU t ~ U[0, bg_max]
/// with a random seen object c: rect(t M w_c + sigma_bg eta). Seen classes and background are tagged real,
/// unseen classes heldout.
FeatureSet gen_feature_set(const ToyWorld& world, const ToyWorldSpec& spec, RandomStream& stream);

/// Proposal whose IoU with `gt` equals `target` (0 < target <= 1) by a
/// closed-form shift or rescale.
Box jitter_box(const Box& gt, double target, RandomStream& stream);

/// Test scenes: 1-5 objects per image with at least one unseen object,
/// proposals_per_gt foreground proposals per object at IoU targets
/// U[proposal_iou_min, 1] and background proposals with IoU <= proposal_bg_max
/// against every object. Offsets of the object's own seen class (or, for
/// unseen objects, of the most similar seen class) map the proposal onto
/// the object exactly; other seen classes get jittered offsets.
std::vector<Scene> gen_detection_scenes(const ToyWorld& world, const ToyWorldSpec& spec,
                                        RandomStream& stream);

std::vector<GroundTruth> all_ground_truths(const std::vector<Scene>& scenes);
std::vector<Proposal> all_proposals(const std::vector<Scene>& scenes);

// Semantics file: header `d S U`, then `class_id name v1 ... vd` per class,
// seen classes first.
void write_semantics(const SemanticTable& table, const std::filesystem::path& path);
SemanticTable read_semantics(const std::filesystem::path& path);

// Features file: header `D N`, then `label iou source v1 ... vD` per record.
void write_features(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet read_features(const std::filesystem::path& path);

// Scenes file: JSON {"images": [{"image_id", "gts": [[class_id, [x1,y1,x2,y2]]...],
// "proposals": [[[x1,y1,x2,y2], [features...], [[dx1,dy1,dx2,dy2]...]]...]}]}.
// The offsets element is omitted for proposals without offsets.
void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);
std::vector<Scene> read_scenes(const std::filesystem::path& path);

// Detections file: `image_id class_id score x1 y1 x2 y2`, tab-separated,
// six decimals.
void write_detections(const std::vector<Detection>& dets, const std::filesystem::path& path);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// Shortest decimal that parses back to the same double.
std::string format_real(double v);

}  // namespace zsdgen
