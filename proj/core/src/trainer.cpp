#include "zsdgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace zsdgen {

void TrainConfig::validate() const {
  weights.validate();
  require(n_critic >= 1, "TrainConfig: n_critic must be positive");
  require(batch_size >= 1, "TrainConfig: batch_size must be positive");
  require(gan_epochs >= 0 && classifier_epochs >= 0 && semantic_epochs >= 0,
          "TrainConfig: epoch counts must be non-negative");
  require(hidden >= 1, "TrainConfig: hidden must be positive");
  require(gan_adam.lr > 0.0 && classifier_adam.lr > 0.0, "TrainConfig: learning rates must be positive");
}

namespace {

class Optimizer {
 public:
  template <class Model>
  explicit Optimizer(const Model& m) {
    for (const auto& block : m.tensors()) states_.emplace_back(block.size());
  }

  template <class Model>
  void step(Model& m, const Model& grad, const AdamHyper& hyper) {
    auto params = m.tensors();
    const auto grads = grad.tensors();
    for (std::size_t b = 0; b < params.size(); ++b) adam_step(params[b], grads[b], states_[b], hyper);
  }

 private:
  std::vector<AdamState> states_;
};

void shuffle(std::vector<std::size_t>& order, RandomStream& rs) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rs.index(i)]);
}

bool finite_model(const std::vector<std::span<const double>>& blocks) {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return all_finite(b); });
}

struct Sample {
  const Vector* feature;
  std::size_t target;  // position within the active rows
};

// Mini-batch softmax regression over `active` rows; rows whose trainable
// flag is false receive zero gradient and stay bitwise unchanged.
void fit_rows(ClassifierHead& head, const std::vector<Sample>& samples,
              const std::vector<std::size_t>& active, const std::vector<bool>& trainable, int epochs,
              std::size_t batch_size, const AdamHyper& hyper, RandomStream& rs) {
  if (samples.empty() || epochs == 0) return;
  Optimizer opt(head);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  ClassifierHead grad = head;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, rs);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(grad.weight.flat().begin(), grad.weight.flat().end(), 0.0);
      std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = samples[order[i]];
        Vector logits(active.size());
        for (std::size_t a = 0; a < active.size(); ++a) logits[a] = head.logit(active[a], *s.feature);
        const Vector probs = softmax(logits);
        for (std::size_t a = 0; a < active.size(); ++a) {
          const std::size_t row = active[a];
          if (!trainable[row]) continue;
          const double d = inv * (probs[a] - (a == s.target ? 1.0 : 0.0));
          axpy(d, *s.feature, grad.weight.row(row));
          grad.bias[row] += d;
        }
      }
      opt.step(head, grad, hyper);
    }
  }
  if (!finite_model(std::as_const(head).tensors())) {
    throw DivergenceError("classifier training produced non-finite parameters");
  }
}

std::size_t position_of(const std::vector<std::size_t>& active, std::size_t row) {
  return static_cast<std::size_t>(std::find(active.begin(), active.end(), row) - active.begin());
}

// Real seen-class and background records; rejects real records of unseen classes.
std::vector<const FeatureRecord*> real_seen_records(const FeatureSet& features,
                                                    const SemanticTable& semantics, bool with_background) {
  std::vector<const FeatureRecord*> out;
  for (const auto& r : features.records) {
    if (r.source != FeatureSource::Real) continue;
    if (r.label == kBackground) {
      if (with_background) out.push_back(&r);
      continue;
    }
    if (semantics.is_seen(r.label)) {
      out.push_back(&r);
      continue;
    }
    throw DataError("real record with label " + std::to_string(r.label) +
                    " has no seen class; unseen features must be tagged heldout");
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

SeenClassifierResult train_seen_classifier(const FeatureSet& features, const SemanticTable& semantics,
                                           const TrainConfig& cfg, RandomStream& stream) {
  ClassifierHead init = ClassifierHead::create(semantics, features.feat_dim, stream);
  return train_seen_classifier(features, std::move(init), semantics, cfg, stream);
}

SeenClassifierResult train_seen_classifier(const FeatureSet& features, ClassifierHead head,
                                           const SemanticTable& semantics, const TrainConfig& cfg,
                                           RandomStream& stream) {
  cfg.validate();
  require(head.feat_dim == features.feat_dim, "train_seen_classifier: feature dimension mismatch");
  const auto records = real_seen_records(features, semantics, true);
  std::map<int, std::size_t> counts;
  for (const auto* r : records) ++counts[r->label];
  if (counts[kBackground] == 0) throw DataError("train_seen_classifier: no background records");
  for (int id : semantics.seen_ids()) {
    if (counts[id] == 0) throw DataError("train_seen_classifier: no records for seen class " + std::to_string(id));
  }

  const auto active = head.rows(RowSet::SeenAndBackground);
  std::vector<bool> trainable(head.num_rows(), false);
  for (std::size_t r : active) trainable[r] = true;
  std::vector<Sample> samples;
  for (const auto* r : records) samples.push_back({&r->values, position_of(active, head.row_of(r->label))});
  fit_rows(head, samples, active, trainable, cfg.classifier_epochs, cfg.batch_size, cfg.classifier_adam, stream);

  std::size_t correct = 0;
  for (const Sample& s : samples) {
    const Vector p = classifier_forward(head, *s.feature, active);
    correct += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == s.target;
  }
  return {std::move(head), static_cast<double>(correct) / static_cast<double>(samples.size())};
}

SemanticClassifierResult train_semantic_classifier(const FeatureSet& features,
                                                   const SemanticTable& semantics,
                                                   const TrainConfig& cfg, RandomStream& stream) {
  SemanticClassifier init = SemanticClassifier::init(semantics.dim(), features.feat_dim, stream);
  return train_semantic_classifier(features, std::move(init), semantics, cfg, stream);
}

SemanticClassifierResult train_semantic_classifier(const FeatureSet& features, SemanticClassifier sc,
                                                   const SemanticTable& semantics,
                                                   const TrainConfig& cfg, RandomStream& stream) {
  cfg.validate();
  require(sc.feat_dim() == features.feat_dim && sc.sem_dim() == semantics.dim(),
          "train_semantic_classifier: dimension mismatch");
  sc = sc.attach_seen(semantics);
  std::vector<const FeatureRecord*> records;
  for (const auto& r : features.records) {
    if (r.source != FeatureSource::Real || r.label == kBackground) continue;
    if (!semantics.is_seen(r.label)) {
      throw DataError("train_semantic_classifier: label " + std::to_string(r.label) + " has no seen semantics");
    }
    records.push_back(&r);
  }
  if (records.empty()) throw DataError("train_semantic_classifier: no seen foreground records");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Optimizer opt(sc);
  SemanticClassifier grad = sc;
  for (int epoch = 0; epoch < cfg.semantic_epochs; ++epoch) {
    shuffle(order, stream);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(grad.w_fc.flat().begin(), grad.w_fc.flat().end(), 0.0);
      std::fill(grad.b_fc.begin(), grad.b_fc.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const FeatureRecord& r = *records[order[i]];
        const Vector probs = semantic_classifier_forward(sc, r.values);
        const std::size_t target = sc.column_of(r.label);
        Vector dlogits(probs.size());
        for (std::size_t k = 0; k < probs.size(); ++k) dlogits[k] = inv * (probs[k] - (k == target ? 1.0 : 0.0));
        const Vector d_embed = matvec(sc.semantics, dlogits);
        add_outer(grad.w_fc, d_embed, r.values);
        axpy(1.0, d_embed, grad.b_fc);
      }
      opt.step(sc, grad, cfg.classifier_adam);
    }
  }
  if (!finite_model(std::as_const(sc).tensors())) {
    throw DivergenceError("semantic classifier training produced non-finite parameters");
  }

  std::size_t correct = 0;
  for (const auto* r : records) {
    const Vector logits = sc.logits(r->values);
    const auto arg = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    correct += sc.class_ids[arg] == r->label;
  }
  return {std::move(sc), static_cast<double>(correct) / static_cast<double>(records.size())};
}

// ---------------------------------------------------------------------------

GanResult train_gan(const FeatureSet& features, const SemanticTable& semantics,
                    const ClassifierHead& seen_head, const SemanticClassifier& semantic_classifier,
                    const TrainConfig& cfg, RandomStream& stream, const GanHooks& hooks) {
  GeneratorParams g = GeneratorParams::init(semantics.dim(), features.feat_dim, cfg.hidden, cfg.slope, stream);
  CriticParams c = CriticParams::init(features.feat_dim, semantics.dim(), cfg.hidden, cfg.slope, stream);
  return train_gan(features, semantics, seen_head, semantic_classifier, cfg, stream, std::move(g),
                   std::move(c), hooks);
}

GanResult train_gan(const FeatureSet& features, const SemanticTable& semantics,
                    const ClassifierHead& seen_head, const SemanticClassifier& semantic_classifier,
                    const TrainConfig& cfg, RandomStream& stream, GeneratorParams g, CriticParams c,
                    const GanHooks& hooks) {
  cfg.validate();
  require(g.sem_dim == semantics.dim() && g.feat_dim == features.feat_dim, "train_gan: generator dimensions");
  require(c.sem_dim == semantics.dim() && c.feat_dim == features.feat_dim, "train_gan: critic dimensions");

  // Real seen foreground only; background and heldout records never reach the critic.
  std::vector<std::vector<const FeatureRecord*>> by_class(semantics.num_seen());
  std::size_t total = 0;
  for (const auto* r : real_seen_records(features, semantics, false)) {
    by_class[*semantics.seen_index(r->label)].push_back(r);
    ++total;
  }
  if (total == 0) throw DataError("train_gan: no real seen foreground records");
  std::vector<std::size_t> classes;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (!by_class[k].empty()) classes.push_back(k);
  }

  const SemanticClassifier unseen_classifier =
      semantics.num_unseen() > 0 ? semantic_classifier.attach_unseen(semantics) : semantic_classifier;
  const LossWeights& w = cfg.weights;
  const std::size_t batch = cfg.batch_size;
  const auto n_critic = static_cast<std::size_t>(cfg.n_critic);
  const std::size_t critic_steps_per_epoch = (total + batch - 1) / batch;
  const std::size_t gen_steps_per_epoch = std::max<std::size_t>(1, (critic_steps_per_epoch + n_critic - 1) / n_critic);

  Optimizer g_opt(g);
  Optimizer c_opt(c);
  GanResult result;
  LossReport last_critic;

  auto diverged = [&](const std::string& what) {
    throw GanDivergence("train_gan: non-finite " + what + " at generator step " +
                            std::to_string(result.generator_steps),
                        g, c, result.log);
  };

  for (int epoch = 0; epoch < cfg.gan_epochs; ++epoch) {
    for (std::size_t step = 0; step < gen_steps_per_epoch; ++step) {
      for (std::size_t k = 0; k < n_critic; ++k) {
        std::vector<Vector> real, fake, sem;
        std::vector<int> labels;
        for (std::size_t i = 0; i < batch; ++i) {
          const auto& bucket = by_class[classes[stream.index(classes.size())]];
          const FeatureRecord& r = *bucket[stream.index(bucket.size())];
          real.push_back(r.values);
          sem.push_back(semantics.vector_of(r.label));
          labels.push_back(r.label);
        }
        if (hooks.on_real_batch) hooks.on_real_batch(labels);
        for (std::size_t i = 0; i < batch; ++i) {
          fake.push_back(generator_forward(g, sem[i], sample_gaussian(stream, g.sem_dim)));
        }
        const auto mix = draw_mix_coefficients(stream, batch, cfg.penalty_mix);
        CriticLoss loss = critic_loss(c, real, fake, sem, w.lambda, mix);
        if (!std::isfinite(loss.value) || !finite_model(std::as_const(loss.grad).tensors())) diverged("critic loss");
        c_opt.step(c, loss.grad, cfg.gan_adam);
        ++result.critic_steps;
        if (hooks.on_update) hooks.on_update(UpdateKind::Critic);
        last_critic.wgan = loss.wgan;
        last_critic.penalty = loss.penalty;
        last_critic.critic_total = loss.value;
      }

      std::vector<Vector> sem, noise;
      std::vector<int> labels;
      for (std::size_t i = 0; i < batch; ++i) {
        const ClassEntry& e = semantics.seen()[classes[stream.index(classes.size())]];
        sem.push_back(e.vec);
        labels.push_back(e.id);
        noise.push_back(sample_gaussian(stream, g.sem_dim));
      }
      LossReport report = last_critic;
      report.step = static_cast<std::int64_t>(result.generator_steps);
      GeneratorTerms terms;
      GeneratorGradient adv, lcs, lcu, div;
      if (w.alpha1 > 0.0) {
        adv = generator_adv_loss(c, g, sem, noise);
        terms.adv = &adv;
        report.adv = adv.value;
      }
      if (w.alpha2 > 0.0) {
        lcs = lcs_loss(g, seen_head, sem, labels, noise);
        terms.lcs = &lcs;
        report.lcs = lcs.value;
      }
      if (w.alpha3 > 0.0 && lcu_active(w, epoch) && semantics.num_unseen() > 0) {
        std::vector<Vector> usem, unoise;
        std::vector<int> ulabels;
        for (std::size_t i = 0; i < batch; ++i) {
          const ClassEntry& e = semantics.unseen()[stream.index(semantics.num_unseen())];
          usem.push_back(e.vec);
          ulabels.push_back(e.id);
          unoise.push_back(sample_gaussian(stream, g.sem_dim));
        }
        lcu = lcu_loss(g, unseen_classifier, usem, ulabels, unoise);
        terms.lcu = &lcu;
        report.lcu = lcu.value;
      }
      if (w.alpha4 > 0.0) {
        std::vector<Vector> za, zb;
        for (std::size_t i = 0; i < batch; ++i) {
          Vector a = sample_gaussian(stream, g.sem_dim);
          Vector b = sample_gaussian(stream, g.sem_dim);
          for (int redraw = 0; redraw < 16; ++redraw) {
            double dist = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) dist += std::abs(a[k] - b[k]);
            if (dist > 1e-9) break;
            b = sample_gaussian(stream, g.sem_dim);
          }
          za.push_back(std::move(a));
          zb.push_back(std::move(b));
        }
        div = diversity_loss(g, sem, za, zb);
        terms.div = &div;
        report.div = div.value;
      }
      if (terms.adv || terms.lcs || terms.lcu || terms.div) {
        GeneratorGradient total_loss = generator_total_loss(terms, w, epoch, cfg.diversity_sign);
        report.gen_total = total_loss.value;
        if (!std::isfinite(total_loss.value) || !finite_model(std::as_const(total_loss.grad).tensors())) {
          diverged("generator loss");
        }
        g_opt.step(g, total_loss.grad, cfg.gan_adam);
      }
      ++result.generator_steps;
      if (hooks.on_update) hooks.on_update(UpdateKind::Generator);
      result.log.push_back(report);
    }
  }
  result.generator = std::move(g);
  result.critic = std::move(c);
  return result;
}

FeatureSet synthesize_features(const GeneratorParams& g, const SemanticTable& semantics,
                               std::size_t n_per_class, RandomStream& stream) {
  FeatureSet set;
  set.feat_dim = g.feat_dim;
  set.records.reserve(semantics.num_unseen() * n_per_class);
  for (const ClassEntry& e : semantics.unseen()) {
    for (std::size_t n = 0; n < n_per_class; ++n) {
      set.records.push_back({e.id, 1.0, FeatureSource::Synthetic,
                             generator_forward(g, e.vec, sample_gaussian(stream, g.sem_dim))});
    }
  }
  return set;
}

std::vector<std::size_t> unseen_rows(const ClassifierHead& head) {
  std::vector<std::size_t> rows;
  for (std::size_t r = head.num_seen + 1; r < head.num_rows(); ++r) rows.push_back(r);
  return rows;
}

ClassifierHead update_classifier(const ClassifierHead& head, const FeatureSet& synthetic_unseen,
                                 const FeatureSet& real_seen_and_bg, const TrainConfig& cfg,
                                 UpdateMode mode, RandomStream& stream) {
  cfg.validate();
  require(synthetic_unseen.feat_dim == head.feat_dim, "update_classifier: feature dimension mismatch");
  std::map<int, std::size_t> counts;
  for (const auto& r : synthetic_unseen.records) ++counts[r.label];
  for (std::size_t r = head.num_seen + 1; r < head.num_rows(); ++r) {
    if (counts[head.class_ids[r]] == 0) {
      throw DataError("update_classifier: no synthetic features for unseen class " +
                      std::to_string(head.class_ids[r]));
    }
  }

  ClassifierHead out = head;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(head.feat_dim));
  for (std::size_t r = head.num_seen + 1; r < out.num_rows(); ++r) {
    for (double& v : out.weight.row(r)) v = stddev * stream.gaussian();
    out.bias[r] = 0.0;
  }
  out.unseen_ready = true;

  const auto active = out.rows(RowSet::All);
  std::vector<bool> trainable(out.num_rows(), mode == UpdateMode::Joint);
  for (std::size_t r = head.num_seen + 1; r < out.num_rows(); ++r) trainable[r] = true;

  std::vector<Sample> samples;
  for (const auto& r : synthetic_unseen.records) {
    const std::size_t row = out.row_of(r.label);
    require(out.is_unseen_row(row), "update_classifier: synthetic record for a non-unseen class");
    samples.push_back({&r.values, position_of(active, row)});
  }
  if (mode == UpdateMode::Joint) {
    require(real_seen_and_bg.feat_dim == head.feat_dim || real_seen_and_bg.records.empty(),
            "update_classifier: feature dimension mismatch");
    for (const auto& r : real_seen_and_bg.records) {
      if (r.source != FeatureSource::Real) continue;
      if (r.label != kBackground && !(out.row_of(r.label) >= 1 && out.row_of(r.label) <= out.num_seen)) continue;
      samples.push_back({&r.values, position_of(active, out.row_of(r.label))});
    }
  }
  fit_rows(out, samples, active, trainable, cfg.classifier_epochs, cfg.batch_size, cfg.classifier_adam, stream);
  return out;
}

double classification_accuracy(const ClassifierHead& head, const FeatureSet& features,
                               std::span<const std::size_t> rows, FeatureSource source) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& r : features.records) {
    if (r.source != source) continue;
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](std::size_t row) { return head.class_ids[row] == r.label; });
    if (it == rows.end()) continue;
    const Vector p = classifier_forward(head, r.values, rows);
    const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    correct += rows[arg] == *it;
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace zsdgen
