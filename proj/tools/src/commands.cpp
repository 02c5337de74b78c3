#include "zsdgen/cli/commands.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "zsdgen/checkpoint.hpp"
#include "zsdgen/gradcheck.hpp"

namespace zsdgen::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Sub-stream tags; every command derives its own stream from the seed so a
// pipeline run equals the commands run one by one.
enum StreamTag : std::uint64_t {
  kWorldStream = 1,
  kFeatureStream,
  kSceneStream,
  kSeenClassifierStream,
  kSemanticClassifierStream,
  kGanStream,
  kSynthesisStream,
  kUpdateStream,
};

RandomStream stream_for(const RunConfig& cfg, StreamTag tag) { return RandomStream(cfg.seed).derive(tag); }

std::ostream& progress(const RunOptions& opts) { return opts.progress ? *opts.progress : std::cerr; }

void require_inputs(std::initializer_list<fs::path> paths, const char* command) {
  for (const auto& p : paths) {
    if (!fs::exists(p)) {
      throw MissingPrerequisite(std::string(command) + ": missing input " + p.string());
    }
  }
}

void prepare_outputs(const RunConfig& cfg, const RunOptions& opts, std::initializer_list<fs::path> paths) {
  fs::create_directories(cfg.out_dir);
  if (!opts.no_clobber) return;
  for (const auto& p : paths) {
    if (fs::exists(p)) throw OutputExists("refusing to overwrite " + p.string());
  }
}

void write_json(const fs::path& path, const ordered_json& doc) { write_file_atomically(path, doc.dump(2) + "\n"); }

void write_log(const fs::path& path, const std::vector<LossReport>& log) {
  std::string text;
  for (const auto& row : log) text += format_log_row(row);
  write_file_atomically(path, text);
}

FeatureSet only_real(const FeatureSet& set) {
  FeatureSet out;
  out.feat_dim = set.feat_dim;
  for (const auto& r : set.records) {
    if (r.source == FeatureSource::Real) out.records.push_back(r);
  }
  return out;
}

std::string fixed(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << v;
  return s.str();
}

}  // namespace

Artifacts::Artifacts(const RunConfig& cfg) {
  const fs::path& o = cfg.out_dir;
  semantics = cfg.semantics_path.value_or(o / "semantics.txt");
  features = cfg.features_path.value_or(o / "features.txt");
  scenes = cfg.scenes_path.value_or(o / "scenes.json");
  seen_head = o / "seen_head.ckpt";
  semantic_classifier = o / "semantic_classifier.ckpt";
  generator = o / "generator.ckpt";
  critic = o / "critic.ckpt";
  train_log = o / "train_log.tsv";
  training_summary = o / "training_summary.json";
  synthetic = o / "synthetic.txt";
  head = o / "head.ckpt";
  classifier_summary = o / "classifier_summary.json";
  detections = o / "detections.tsv";
  baseline_detections = o / "baseline_detections.tsv";
  report = o / "report.json";
  baseline_report = o / "baseline_report.json";
  grad_check = o / "grad_check.json";
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-data", "train-gan", "synthesize", "train-classifier",
                                                 "detect",   "evaluate",  "grad-check", "pipeline"};
  return names;
}

void cmd_gen_data(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  const fs::path semantics = cfg.out_dir / "semantics.txt";
  const fs::path features = cfg.out_dir / "features.txt";
  const fs::path scenes = cfg.out_dir / "scenes.json";
  prepare_outputs(cfg, opts, {semantics, features, scenes});
  RandomStream world_rs = stream_for(cfg, kWorldStream);
  const ToyWorld world = gen_toy_world(cfg.world, world_rs);
  RandomStream feature_rs = stream_for(cfg, kFeatureStream);
  const FeatureSet set = gen_feature_set(world, cfg.world, feature_rs);
  RandomStream scene_rs = stream_for(cfg, kSceneStream);
  const auto scene_list = gen_detection_scenes(world, cfg.world, scene_rs);
  write_semantics(world.semantics, semantics);
  write_features(set, features);
  write_scenes(scene_list, scenes);
  progress(opts) << "gen-data: " << world.semantics.num_seen() << " seen / " << world.semantics.num_unseen()
                 << " unseen classes, " << set.size() << " feature records, " << scene_list.size()
                 << " scenes\n";
}

void cmd_train_gan(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  require_inputs({a.semantics, a.features}, "train-gan");
  prepare_outputs(cfg, opts,
                  {a.seen_head, a.semantic_classifier, a.generator, a.critic, a.train_log, a.training_summary});
  const SemanticTable semantics = read_semantics(a.semantics);
  const FeatureSet features = read_features(a.features);

  RandomStream seen_rs = stream_for(cfg, kSeenClassifierStream);
  const auto seen = train_seen_classifier(features, semantics, cfg.train, seen_rs);
  save_classifier_head(seen.head, a.seen_head);
  progress(opts) << "train-gan: seen classifier train accuracy " << fixed(seen.train_accuracy) << "\n";

  RandomStream sem_rs = stream_for(cfg, kSemanticClassifierStream);
  const auto sc = train_semantic_classifier(features, semantics, cfg.train, sem_rs);
  save_semantic_classifier(sc.classifier, a.semantic_classifier);
  progress(opts) << "train-gan: semantic classifier train accuracy " << fixed(sc.train_accuracy) << "\n";

  RandomStream gan_rs = stream_for(cfg, kGanStream);
  GanResult gan;
  try {
    gan = train_gan(features, semantics, seen.head, sc.classifier, cfg.train, gan_rs);
  } catch (const GanDivergence& e) {
    save_generator(e.generator, a.generator);
    save_critic(e.critic, a.critic);
    write_log(a.train_log, e.log);
    throw;
  }
  save_generator(gan.generator, a.generator);
  save_critic(gan.critic, a.critic);
  write_log(a.train_log, gan.log);

  ordered_json summary;
  summary["seen_train_accuracy"] = seen.train_accuracy;
  summary["semantic_train_accuracy"] = sc.train_accuracy;
  summary["critic_steps"] = gan.critic_steps;
  summary["generator_steps"] = gan.generator_steps;
  write_json(a.training_summary, summary);
  progress(opts) << "train-gan: " << gan.generator_steps << " generator steps, " << gan.critic_steps
                 << " critic steps\n";
}

void cmd_synthesize(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  require_inputs({a.semantics, a.generator}, "synthesize");
  prepare_outputs(cfg, opts, {a.synthetic});
  const SemanticTable semantics = read_semantics(a.semantics);
  const GeneratorParams g = load_generator(a.generator);
  RandomStream rs = stream_for(cfg, kSynthesisStream);
  const FeatureSet synthetic = synthesize_features(g, semantics, cfg.train.features_per_unseen_class, rs);
  write_features(synthetic, a.synthetic);
  progress(opts) << "synthesize: " << synthetic.size() << " synthetic unseen records\n";
}

void cmd_train_classifier(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  require_inputs({a.features, a.seen_head, a.synthetic}, "train-classifier");
  prepare_outputs(cfg, opts, {a.head, a.classifier_summary});
  const FeatureSet features = read_features(a.features);
  const FeatureSet synthetic = read_features(a.synthetic);
  const ClassifierHead seen_head = load_classifier_head(a.seen_head);
  RandomStream rs = stream_for(cfg, kUpdateStream);
  const ClassifierHead head =
      update_classifier(seen_head, synthetic, only_real(features), cfg.train, cfg.train.update_mode, rs);
  save_classifier_head(head, a.head);

  const auto unseen = unseen_rows(head);
  const auto all = head.rows(RowSet::All);
  ordered_json summary;
  summary["update_mode"] = cfg.train.update_mode == UpdateMode::Joint ? "joint" : "frozen_seen";
  summary["heldout_unseen_accuracy"] = classification_accuracy(head, features, unseen, FeatureSource::Heldout);
  summary["heldout_all_rows_accuracy"] = classification_accuracy(head, features, all, FeatureSource::Heldout);
  summary["synthetic_unseen_accuracy"] = classification_accuracy(head, synthetic, unseen, FeatureSource::Synthetic);
  summary["real_seen_accuracy"] =
      classification_accuracy(head, features, head.rows(RowSet::SeenAndBackground), FeatureSource::Real);
  write_json(a.classifier_summary, summary);
  progress(opts) << "train-classifier: held-out unseen accuracy "
                 << fixed(summary["heldout_unseen_accuracy"].get<double>()) << "\n";
}

void cmd_detect(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  require_inputs({a.semantics, a.scenes, a.head, a.seen_head}, "detect");
  prepare_outputs(cfg, opts, {a.detections, a.baseline_detections});
  const SemanticTable semantics = read_semantics(a.semantics);
  const auto proposals = all_proposals(read_scenes(a.scenes));
  const ClassifierHead head = load_classifier_head(a.head);
  const ClassifierHead seen_head = load_classifier_head(a.seen_head);
  const auto dets = detect(proposals, head, cfg.detect);
  const auto base = detect_baseline(proposals, seen_head, semantics, cfg.detect);
  write_detections(dets, a.detections);
  write_detections(base, a.baseline_detections);
  progress(opts) << "detect (" << mode_name(cfg.detect.mode) << "): " << dets.size() << " detections, "
                 << base.size() << " baseline detections\n";
}

void cmd_evaluate(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  require_inputs({a.semantics, a.scenes, a.detections}, "evaluate");
  const bool with_baseline = fs::exists(a.baseline_detections);
  prepare_outputs(cfg, opts, {a.report, a.baseline_report});
  const SemanticTable semantics = read_semantics(a.semantics);
  const auto gts = all_ground_truths(read_scenes(a.scenes));
  auto evaluate = [&](const fs::path& in, const fs::path& out) {
    const auto dets = read_detections(in);
    const EvalReport report =
        build_report(dets, gts, semantics, cfg.detect.mode, cfg.recall_k, cfg.iou_threshold, cfg.ap_mode);
    write_file_atomically(out, report_to_json(report));
    return report;
  };
  const EvalReport report = evaluate(a.detections, a.report);
  progress(opts) << "evaluate (" << mode_name(report.mode) << "): mAP " << fixed(report.map) << ", recall@"
                 << report.k << " " << fixed(report.recall_at_k);
  if (report.unseen_map) progress(opts) << ", unseen mAP " << fixed(*report.unseen_map);
  if (report.harmonic_mean) progress(opts) << ", HM " << fixed(*report.harmonic_mean);
  progress(opts) << "\n";
  if (with_baseline) {
    const EvalReport base = evaluate(a.baseline_detections, a.baseline_report);
    progress(opts) << "evaluate: baseline mAP " << fixed(base.map);
    if (base.unseen_map) progress(opts) << ", unseen mAP " << fixed(*base.unseen_map);
    progress(opts) << "\n";
  }
}

void cmd_grad_check(const RunConfig& cfg, const RunOptions& opts) {
  const Artifacts a(cfg);
  prepare_outputs(cfg, opts, {a.grad_check});
  GradCheckOptions options;
  options.seed = cfg.seed;
  const GradCheckReport report = run_gradient_suite(options);
  ordered_json doc = ordered_json::array();
  for (const auto& e : report.entries) {
    doc.push_back({{"name", e.name},
                   {"points", e.points},
                   {"rejected", e.rejected},
                   {"max_rel_error", e.max_rel_error},
                   {"passed", e.passed}});
    progress(opts) << "grad-check: " << (e.passed ? "ok   " : "FAIL ") << e.name << " points=" << e.points
                   << " max_rel_error=" << e.max_rel_error << "\n";
  }
  write_json(a.grad_check, doc);
  if (!report.passed()) throw std::runtime_error("grad-check: analytic and numeric gradients disagree");
}

void cmd_pipeline(const RunConfig& cfg, const RunOptions& opts) {
  if (!cfg.semantics_path && !cfg.features_path && !cfg.scenes_path) {
    cmd_gen_data(cfg, opts);
  } else {
    const Artifacts a(cfg);
    require_inputs({a.semantics, a.features, a.scenes}, "pipeline");
  }
  cmd_train_gan(cfg, opts);
  cmd_synthesize(cfg, opts);
  cmd_train_classifier(cfg, opts);
  cmd_detect(cfg, opts);
  cmd_evaluate(cfg, opts);
}

int run_command(const std::string& name, const RunConfig& cfg, const RunOptions& opts) {
  static const std::map<std::string, std::function<void(const RunConfig&, const RunOptions&)>> table = {
      {"gen-data", cmd_gen_data},   {"train-gan", cmd_train_gan},   {"synthesize", cmd_synthesize},
      {"train-classifier", cmd_train_classifier}, {"detect", cmd_detect}, {"evaluate", cmd_evaluate},
      {"grad-check", cmd_grad_check}, {"pipeline", cmd_pipeline}};
  std::ostream& err = progress(opts);
  const auto it = table.find(name);
  if (it == table.end()) {
    err << "error: unknown command '" << name << "'\n";
    return kExitFailure;
  }
  try {
    it->second(cfg, opts);
    return kExitOk;
  } catch (const MissingPrerequisite& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingPrerequisite;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace zsdgen::cli
