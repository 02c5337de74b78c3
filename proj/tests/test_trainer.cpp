#include <doctest.h>

#include <cmath>
#include <limits>

#include "support/fixtures.hpp"
#include "zsdgen/trainer.hpp"

using namespace zsdgen;
using doctest::Approx;

namespace {

FeatureRecord record(int label, Vector v, FeatureSource source = FeatureSource::Real) {
  return {label, 1.0, source, std::move(v)};
}

// Two seen classes and background as well-separated clusters in 4-D.
FeatureSet separable_set(RandomStream& rs, std::size_t per_class) {
  FeatureSet set;
  set.feat_dim = 4;
  const Vector centers[3] = {{0.0, 0.0, 0.0, 0.0}, {3.0, 0.0, 0.5, 0.0}, {0.0, 3.0, 0.0, 0.5}};
  for (int label = 0; label < 3; ++label) {
    for (std::size_t n = 0; n < per_class; ++n) {
      Vector v = centers[label];
      for (double& x : v) x += 0.2 * rs.gaussian();
      set.records.push_back(record(label, v));
    }
  }
  return set;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.classifier_epochs = 20;
  cfg.semantic_epochs = 20;
  cfg.gan_epochs = 2;
  cfg.hidden = 8;
  cfg.classifier_adam.lr = 1e-2;
  return cfg;
}

}  // namespace

TEST_CASE("seen classifier separates separable classes") {
  RandomStream rs(1);
  const SemanticTable table = fixture::random_table(3, 2, 1, rs);
  const FeatureSet set = separable_set(rs, 60);
  const SeenClassifierResult r = train_seen_classifier(set, table, quick_config(), rs);
  CHECK(r.train_accuracy >= 0.99);
  CHECK_FALSE(r.head.unseen_ready);
  CHECK(classification_accuracy(r.head, set, r.head.rows(RowSet::SeenAndBackground), FeatureSource::Real) ==
        r.train_accuracy);
}

TEST_CASE("seen classifier with zero epochs returns its initialization") {
  RandomStream rs(2);
  const SemanticTable table = fixture::random_table(3, 2, 1, rs);
  const FeatureSet set = separable_set(rs, 10);
  TrainConfig cfg = quick_config();
  cfg.classifier_epochs = 0;
  RandomStream init_rs(3);
  const ClassifierHead init = ClassifierHead::create(table, 4, init_rs);
  CHECK(train_seen_classifier(set, init, table, cfg, rs).head == init);
}

TEST_CASE("seen classifier is deterministic per seed") {
  RandomStream data_rs(4);
  const SemanticTable table = fixture::random_table(3, 2, 1, data_rs);
  const FeatureSet set = separable_set(data_rs, 20);
  RandomStream a(5), b(5);
  CHECK(train_seen_classifier(set, table, quick_config(), a).head ==
        train_seen_classifier(set, table, quick_config(), b).head);
}

TEST_CASE("seen classifier data errors") {
  RandomStream rs(6);
  const SemanticTable table = fixture::random_table(3, 2, 1, rs);
  FeatureSet set = separable_set(rs, 5);

  FeatureSet no_bg = set;
  std::erase_if(no_bg.records, [](const FeatureRecord& r) { return r.label == kBackground; });
  CHECK_THROWS_AS(train_seen_classifier(no_bg, table, quick_config(), rs), DataError);

  FeatureSet missing_class = set;
  std::erase_if(missing_class.records, [](const FeatureRecord& r) { return r.label == 2; });
  CHECK_THROWS_AS(train_seen_classifier(missing_class, table, quick_config(), rs), DataError);

  FeatureSet leaked = set;
  leaked.records.push_back(record(3, Vector(4, 1.0)));
  CHECK_THROWS_AS(train_seen_classifier(leaked, table, quick_config(), rs), DataError);

  FeatureSet heldout = set;
  heldout.records.push_back(record(3, Vector(4, 1.0), FeatureSource::Heldout));
  CHECK_NOTHROW(train_seen_classifier(heldout, table, quick_config(), rs));
}

TEST_CASE("semantic classifier reaches perfect accuracy on a noiseless linear image") {
  RandomStream rs(7);
  const SemanticTable table = fixture::random_table(4, 5, 2, rs);
  Matrix m(6, 4);
  for (double& v : m.flat()) v = rs.gaussian();
  FeatureSet set;
  set.feat_dim = 6;
  for (const ClassEntry& c : table.seen()) {
    for (int n = 0; n < 20; ++n) set.records.push_back(record(c.id, matvec(m, c.vec)));
  }
  TrainConfig cfg = quick_config();
  cfg.semantic_epochs = 60;
  const SemanticClassifierResult r = train_semantic_classifier(set, table, cfg, rs);
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.classifier.num_classes() == 5);

  const SemanticClassifier unseen = r.classifier.attach_unseen(table);
  CHECK(unseen.num_classes() == 2);
  CHECK(unseen.w_fc == r.classifier.w_fc);
  CHECK(unseen.b_fc == r.classifier.b_fc);
}

TEST_CASE("semantic classifier from zero with zero epochs is uniform") {
  RandomStream rs(8);
  const SemanticTable table = fixture::random_table(4, 5, 0, rs);
  FeatureSet set;
  set.feat_dim = 6;
  for (const ClassEntry& c : table.seen()) set.records.push_back(record(c.id, fixture::random_vector(rs, 6)));
  TrainConfig cfg = quick_config();
  cfg.semantic_epochs = 0;
  const SemanticClassifierResult r = train_semantic_classifier(set, SemanticClassifier::zeros(4, 6), table, cfg, rs);
  for (const FeatureRecord& rec : set.records) {
    const Vector p = semantic_classifier_forward(r.classifier, rec.values);
    const double loss = -std::log(p[r.classifier.column_of(rec.label)]);
    CHECK(loss == Approx(std::log(5.0)).epsilon(1e-12));
  }
}

TEST_CASE("semantic classifier data errors") {
  RandomStream rs(9);
  const SemanticTable table = fixture::random_table(3, 2, 1, rs);
  FeatureSet set;
  set.feat_dim = 4;
  CHECK_THROWS_AS(train_semantic_classifier(set, table, quick_config(), rs), DataError);
  set.records.push_back(record(1, Vector(4, 1.0)));
  set.records.push_back(record(42, Vector(4, 1.0)));
  CHECK_THROWS_AS(train_semantic_classifier(set, table, quick_config(), rs), DataError);
}

namespace {

struct GanFixture {
  SemanticTable table;
  FeatureSet features;
  ClassifierHead head;
  SemanticClassifier semantic;
};

GanFixture small_gan_fixture(std::uint64_t seed) {
  RandomStream rs(seed);
  GanFixture f{fixture::random_table(3, 3, 2, rs), {}, {}, {}};
  f.features.feat_dim = 5;
  for (const ClassEntry& c : f.table.seen()) {
    for (int n = 0; n < 16; ++n) f.features.records.push_back(record(c.id, fixture::random_vector(rs, 5)));
  }
  for (const ClassEntry& c : f.table.unseen()) {
    for (int n = 0; n < 16; ++n) {
      f.features.records.push_back(record(c.id, fixture::random_vector(rs, 5), FeatureSource::Heldout));
    }
  }
  for (int n = 0; n < 16; ++n) f.features.records.push_back(record(kBackground, fixture::random_vector(rs, 5)));
  f.head = ClassifierHead::create(f.table, 5, rs);
  f.semantic = SemanticClassifier::init(3, 5, rs).attach_seen(f.table);
  return f;
}

}  // namespace

// The distribution lies on a line; the second coordinate is identically zero.
// In a literal one-dimensional feature space the critic cannot reverse its
// slope without crossing zero gradient, which the penalty forbids.
TEST_CASE("gan without classifier terms matches the mean of a distribution on a line") {
  RandomStream rs(10);
  const SemanticTable table(2, {{1, "one", {1.0, 0.0}}}, {});
  FeatureSet set;
  set.feat_dim = 2;
  double real_mean = 0.0;
  for (int n = 0; n < 400; ++n) {
    const double v = std::max(0.0, 2.0 + 0.3 * rs.gaussian());
    set.records.push_back(record(1, {v, 0.0}));
    real_mean += v / 400.0;
  }
  TrainConfig cfg;
  cfg.weights.alpha2 = cfg.weights.alpha3 = cfg.weights.alpha4 = 0.0;
  cfg.gan_adam.beta2 = 0.9;
  cfg.n_critic = 20;
  cfg.hidden = 16;
  cfg.gan_epochs = 1200;
  const GanResult r = train_gan(set, table, ClassifierHead::create(table, 2, rs), SemanticClassifier::zeros(2, 2),
                                cfg, rs);
  Vector fake_mean(2, 0.0);
  for (int n = 0; n < 2000; ++n) {
    axpy(1.0 / 2000.0, generator_forward(r.generator, table.vector_of(1), sample_gaussian(rs, 2)), fake_mean);
  }
  CHECK(std::abs(fake_mean[0] - real_mean) < 0.1);
  CHECK(std::abs(fake_mean[1]) < 0.1);
}

TEST_CASE("gan with zero epochs returns its initialization") {
  const GanFixture f = small_gan_fixture(11);
  RandomStream rs(12);
  const GeneratorParams g = GeneratorParams::init(3, 5, 8, 0.2, rs);
  const CriticParams c = CriticParams::init(5, 3, 8, 0.2, rs);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 0;
  const GanResult r = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs, g, c);
  CHECK(r.generator == g);
  CHECK(r.critic == c);
  CHECK(r.log.empty());
}

TEST_CASE("unseen term is logged as zero before warmup") {
  const GanFixture f = small_gan_fixture(13);
  RandomStream rs(14);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 3;
  const GanResult early = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs);
  REQUIRE_FALSE(early.log.empty());
  for (const LossReport& row : early.log) CHECK(row.lcu == 0.0);

  cfg.gan_epochs = 7;
  cfg.weights.warmup_epochs = 5;
  RandomStream rs2(14);
  const GanResult late = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs2);
  CHECK(late.log.back().lcu > 0.0);
}

TEST_CASE("gan alternates exactly n_critic critic updates per generator update") {
  const GanFixture f = small_gan_fixture(15);
  for (int n_critic : {1, 3, 5}) {
    TrainConfig cfg = quick_config();
    cfg.n_critic = n_critic;
    cfg.gan_epochs = 3;
    std::vector<UpdateKind> updates;
    GanHooks hooks;
    hooks.on_update = [&](UpdateKind k) { updates.push_back(k); };
    RandomStream rs(16);
    const GanResult r = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs, hooks);
    REQUIRE(!updates.empty());
    std::size_t run = 0;
    for (UpdateKind k : updates) {
      if (k == UpdateKind::Critic) {
        ++run;
      } else {
        CHECK(run == static_cast<std::size_t>(n_critic));
        run = 0;
      }
    }
    CHECK(updates.back() == UpdateKind::Generator);
    CHECK(r.critic_steps == r.generator_steps * static_cast<std::size_t>(n_critic));
    CHECK(r.log.size() == r.generator_steps);
  }
}

TEST_CASE("held-out features never reach a real gan batch") {
  const GanFixture f = small_gan_fixture(17);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 4;
  std::size_t batches = 0;
  GanHooks hooks;
  hooks.on_real_batch = [&](const std::vector<int>& labels) {
    ++batches;
    for (int l : labels) CHECK(f.table.is_seen(l));
  };
  RandomStream rs(18);
  train_gan(f.features, f.table, f.head, f.semantic, cfg, rs, hooks);
  CHECK(batches > 0);
}

TEST_CASE("log rows recombine into the logged objectives") {
  const GanFixture f = small_gan_fixture(19);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 8;
  cfg.weights.warmup_epochs = 2;
  RandomStream rs(20);
  const GanResult r = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs);
  const LossWeights& w = cfg.weights;
  for (const LossReport& row : r.log) {
    CHECK(std::abs(row.gen_total - (w.alpha1 * row.adv + w.alpha2 * row.lcs + w.alpha3 * row.lcu - w.alpha4 * row.div)) < 1e-9);
    CHECK(std::abs(row.critic_total - (-row.wgan + row.penalty)) < 1e-9);
  }
}

TEST_CASE("zero weights silence their log columns") {
  const GanFixture f = small_gan_fixture(21);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 7;
  cfg.weights.alpha2 = cfg.weights.alpha3 = cfg.weights.alpha4 = 0.0;
  RandomStream rs(22);
  const GanResult r = train_gan(f.features, f.table, f.head, f.semantic, cfg, rs);
  for (const LossReport& row : r.log) {
    CHECK(row.lcs == 0.0);
    CHECK(row.lcu == 0.0);
    CHECK(row.div == 0.0);
    CHECK(row.gen_total == row.adv);
  }
}

TEST_CASE("without classifier and diversity terms the generator ignores the classifiers") {
  const GanFixture f = small_gan_fixture(23);
  const GanFixture other = small_gan_fixture(24);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 7;
  cfg.weights.alpha2 = cfg.weights.alpha3 = cfg.weights.alpha4 = 0.0;
  RandomStream a(25), b(25);
  const GanResult ra = train_gan(f.features, f.table, f.head, f.semantic, cfg, a);
  const GanResult rb = train_gan(f.features, f.table, other.head, other.semantic, cfg, b);
  CHECK(ra.generator == rb.generator);
  CHECK(ra.critic == rb.critic);
}

TEST_CASE("gan is deterministic per seed") {
  const GanFixture f = small_gan_fixture(26);
  TrainConfig cfg = quick_config();
  cfg.gan_epochs = 6;
  cfg.weights.warmup_epochs = 2;
  RandomStream a(27), b(27);
  const GanResult ra = train_gan(f.features, f.table, f.head, f.semantic, cfg, a);
  const GanResult rb = train_gan(f.features, f.table, f.head, f.semantic, cfg, b);
  CHECK(ra.generator == rb.generator);
  CHECK(ra.critic == rb.critic);
}

TEST_CASE("gan input errors") {
  GanFixture f = small_gan_fixture(28);
  TrainConfig cfg = quick_config();
  RandomStream rs(29);

  FeatureSet empty;
  empty.feat_dim = 5;
  CHECK_THROWS_AS(train_gan(empty, f.table, f.head, f.semantic, cfg, rs), DataError);

  FeatureSet poisoned = f.features;
  for (FeatureRecord& r : poisoned.records) {
    if (r.label == 1) r.values[0] = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    train_gan(poisoned, f.table, f.head, f.semantic, cfg, rs);
    FAIL("expected divergence");
  } catch (const GanDivergence& e) {
    for (auto block : std::as_const(e.generator).tensors()) CHECK(all_finite(block));
    for (auto block : std::as_const(e.critic).tensors()) CHECK(all_finite(block));
  }
}

TEST_CASE("synthesized features: counts, provenance and determinism") {
  RandomStream rs(30);
  const SemanticTable table = fixture::random_table(3, 2, 2, rs);
  const GeneratorParams g = GeneratorParams::init(3, 5, 8, 0.2, rs);
  RandomStream a(31), b(31);
  const FeatureSet set = synthesize_features(g, table, 300, a);
  CHECK(set.size() == 600);
  CHECK(set.feat_dim == 5);
  std::map<int, int> counts;
  for (const FeatureRecord& r : set.records) {
    ++counts[r.label];
    CHECK(r.source == FeatureSource::Synthetic);
    CHECK(r.iou == 1.0);
  }
  CHECK(counts == std::map<int, int>{{3, 300}, {4, 300}});
  CHECK(synthesize_features(g, table, 300, b) == set);
  CHECK(synthesize_features(g, table, 0, a).records.empty());
}

namespace {

struct UpdateFixture {
  SemanticTable table;
  FeatureSet real;
  FeatureSet synthetic;
  ClassifierHead head;
};

// Unseen classes as tight clusters away from the seen clusters.
UpdateFixture update_fixture(std::uint64_t seed) {
  RandomStream rs(seed);
  UpdateFixture f{fixture::random_table(3, 2, 2, rs), separable_set(rs, 30), {}, {}};
  f.synthetic.feat_dim = 4;
  const Vector centers[2] = {{0.0, 0.0, 3.0, 0.0}, {0.0, 0.0, 0.0, 3.0}};
  for (int u = 0; u < 2; ++u) {
    for (int n = 0; n < 40; ++n) {
      Vector v = centers[u];
      for (double& x : v) x += 0.2 * rs.gaussian();
      f.synthetic.records.push_back(record(3 + u, v, FeatureSource::Synthetic));
    }
  }
  f.head = train_seen_classifier(f.real, f.table, quick_config(), rs).head;
  return f;
}

}  // namespace

TEST_CASE("frozen-seen update leaves seen and background rows bitwise unchanged") {
  const UpdateFixture f = update_fixture(32);
  RandomStream rs(33);
  const ClassifierHead out = update_classifier(f.head, f.synthetic, f.real, quick_config(), UpdateMode::FrozenSeen, rs);
  CHECK(out.unseen_ready);
  for (std::size_t r = 0; r <= out.num_seen; ++r) {
    CHECK(std::equal(out.weight.row(r).begin(), out.weight.row(r).end(), f.head.weight.row(r).begin()));
    CHECK(out.bias[r] == f.head.bias[r]);
  }
  CHECK(classification_accuracy(out, f.synthetic, out.rows(RowSet::All), FeatureSource::Synthetic) >= 0.9);
}

TEST_CASE("joint update trains every row") {
  const UpdateFixture f = update_fixture(34);
  RandomStream rs(35);
  const ClassifierHead out = update_classifier(f.head, f.synthetic, f.real, quick_config(), UpdateMode::Joint, rs);
  CHECK(out.weight.row(1)[0] != f.head.weight.row(1)[0]);
  CHECK(classification_accuracy(out, f.synthetic, out.rows(RowSet::All), FeatureSource::Synthetic) >= 0.9);
  CHECK(classification_accuracy(out, f.real, out.rows(RowSet::All), FeatureSource::Real) >= 0.9);
}

TEST_CASE("update with zero epochs leaves unseen rows at their initialization") {
  const UpdateFixture f = update_fixture(36);
  TrainConfig cfg = quick_config();
  cfg.classifier_epochs = 0;
  RandomStream rs(37);
  const ClassifierHead out = update_classifier(f.head, f.synthetic, f.real, cfg, UpdateMode::FrozenSeen, rs);
  RandomStream expected(37);
  const double stddev = 1.0 / std::sqrt(4.0);
  for (std::size_t r = out.num_seen + 1; r < out.num_rows(); ++r) {
    for (double v : out.weight.row(r)) CHECK(v == stddev * expected.gaussian());
    CHECK(out.bias[r] == 0.0);
  }
}

TEST_CASE("update requires synthetic features for every unseen class") {
  UpdateFixture f = update_fixture(38);
  std::erase_if(f.synthetic.records, [](const FeatureRecord& r) { return r.label == 4; });
  RandomStream rs(39);
  CHECK_THROWS_AS(update_classifier(f.head, f.synthetic, f.real, quick_config(), UpdateMode::FrozenSeen, rs),
                  DataError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_critic = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.weights.alpha3 = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("update at toy defaults classifies its synthetic training set") {
  const ToyWorldSpec spec;
  RandomStream root(42);
  RandomStream world_rs = root.derive(1), feature_rs = root.derive(2), rs = root.derive(3);
  const ToyWorld world = gen_toy_world(spec, world_rs);
  const FeatureSet features = gen_feature_set(world, spec, feature_rs);
  const TrainConfig cfg;
  const ClassifierHead head = train_seen_classifier(features, world.semantics, cfg, rs).head;
  const SemanticClassifier sc = train_semantic_classifier(features, world.semantics, cfg, rs).classifier;
  const GanResult gan = train_gan(features, world.semantics, head, sc, cfg, rs);
  const FeatureSet synthetic = synthesize_features(gan.generator, world.semantics, cfg.features_per_unseen_class, rs);
  CHECK(synthetic.size() == 4 * 300);
  const ClassifierHead updated = update_classifier(head, synthetic, features, cfg, cfg.update_mode, rs);
  CHECK(classification_accuracy(updated, synthetic, updated.rows(RowSet::All), FeatureSource::Synthetic) >= 0.9);
}
