#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "zsdgen/datakit.hpp"
#include "zsdgen/errors.hpp"
#include "zsdgen/losses.hpp"
#include "zsdgen/models.hpp"
#include "zsdgen/numerics.hpp"

namespace zsdgen {

enum class UpdateMode { FrozenSeen, Joint };

struct TrainConfig {
  LossWeights weights;
  AdamHyper gan_adam{1e-4, 0.5, 0.999, 1e-8};
  AdamHyper classifier_adam{1e-3, 0.9, 0.999, 1e-8};
  int n_critic = 5;
  std::size_t batch_size = 8;
  int gan_epochs = 60;
  std::size_t features_per_unseen_class = 300;
  int classifier_epochs = 30;
  int semantic_epochs = 30;
  std::size_t hidden = 64;
  double slope = kDefaultSlope;
  PenaltyMix penalty_mix = PenaltyMix::Uniform;
  DiversitySign diversity_sign = DiversitySign::Maximize;
  UpdateMode update_mode = UpdateMode::FrozenSeen;

  void validate() const;
};

struct SeenClassifierResult {
  ClassifierHead head;
  double train_accuracy = 0.0;
};

/// Cross-entropy training of the background and seen rows on real
/// records. Unseen rows stay uninitialized.
SeenClassifierResult train_seen_classifier(const FeatureSet& features, const SemanticTable& semantics,
                                           const TrainConfig& cfg, RandomStream& stream);
SeenClassifierResult train_seen_classifier(const FeatureSet& features, ClassifierHead init,
                                           const SemanticTable& semantics, const TrainConfig& cfg,
                                           RandomStream& stream);

struct SemanticClassifierResult {
  SemanticClassifier classifier;  // seen semantics attached
  double train_accuracy = 0.0;
};

SemanticClassifierResult train_semantic_classifier(const FeatureSet& features,
                                                   const SemanticTable& semantics,
                                                   const TrainConfig& cfg, RandomStream& stream);
SemanticClassifierResult train_semantic_classifier(const FeatureSet& features, SemanticClassifier init,
                                                   const SemanticTable& semantics,
                                                   const TrainConfig& cfg, RandomStream& stream);

enum class UpdateKind { Critic, Generator };

struct GanHooks {
  // Labels of every real mini-batch handed to the critic.
  std::function<void(const std::vector<int>&)> on_real_batch;
  std::function<void(UpdateKind)> on_update;
};

struct GanResult {
  GeneratorParams generator;
  CriticParams critic;
  std::vector<LossReport> log;
  std::size_t critic_steps = 0;
  std::size_t generator_steps = 0;
};

// Thrown when a loss turns non-finite; carries the parameters from before
// the failing step.
class GanDivergence : public DivergenceError {
 public:
  GanDivergence(const std::string& what, GeneratorParams g, CriticParams c, std::vector<LossReport> log)
      : DivergenceError(what), generator(std::move(g)), critic(std::move(c)), log(std::move(log)) {}

  GeneratorParams generator;
  CriticParams critic;
  std::vector<LossReport> log;
};

/// Alternating optimization: n_critic critic steps on critic_loss, then one
/// generator step on generator_total_loss. An epoch is one pass worth of
/// real foreground records through the critic. Mini-batches pick a seen
/// class uniformly, then one of its records uniformly.
GanResult train_gan(const FeatureSet& features, const SemanticTable& semantics,
                    const ClassifierHead& seen_head, const SemanticClassifier& semantic_classifier,
                    const TrainConfig& cfg, RandomStream& stream, const GanHooks& hooks = {});
GanResult train_gan(const FeatureSet& features, const SemanticTable& semantics,
                    const ClassifierHead& seen_head, const SemanticClassifier& semantic_classifier,
                    const TrainConfig& cfg, RandomStream& stream, GeneratorParams init_generator,
                    CriticParams init_critic, const GanHooks& hooks = {});

/// n_per_class synthetic records per unseen class, tagged synthetic with iou 1.
FeatureSet synthesize_features(const GeneratorParams& g, const SemanticTable& semantics,
                               std::size_t n_per_class, RandomStream& stream);

/// Initializes the unseen rows and trains them on the synthetic records.
/// FrozenSeen touches unseen rows only; Joint fine-tunes every row on the
/// synthetic records mixed with real seen and background records.
ClassifierHead update_classifier(const ClassifierHead& head, const FeatureSet& synthetic_unseen,
                                 const FeatureSet& real_seen_and_bg, const TrainConfig& cfg,
                                 UpdateMode mode, RandomStream& stream);

/// Top-1 accuracy of records whose label has a row among `rows`, with the
/// argmax taken over those rows.
double classification_accuracy(const ClassifierHead& head, const FeatureSet& features,
                               std::span<const std::size_t> rows, FeatureSource source);

std::vector<std::size_t> unseen_rows(const ClassifierHead& head);

}  // namespace zsdgen
