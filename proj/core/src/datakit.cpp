#include "zsdgen/datakit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zsdgen/checkpoint.hpp"
#include "zsdgen/errors.hpp"

namespace zsdgen {

namespace fs = std::filesystem;

const char* source_name(FeatureSource source) {
  switch (source) {
    case FeatureSource::Real: return "real";
    case FeatureSource::Synthetic: return "synthetic";
    case FeatureSource::Heldout: return "heldout";
  }
  return "real";
}

void ToyWorldSpec::validate() const {
  require(sem_dim > 0 && feat_dim > 0, "ToyWorldSpec: dimensions must be positive");
  require(num_seen >= 1, "ToyWorldSpec: need at least one seen class");
  require(sigma > 0.0 && sigma_bg > 0.0, "ToyWorldSpec: noise levels must be positive");
  require(policy.fg_min > 0.0 && policy.fg_min < 1.0 && policy.bg_max > 0.0 && policy.bg_max < 1.0,
          "ToyWorldSpec: IoU thresholds must lie in (0, 1)");
  require(policy.fg_min > policy.bg_max, "ToyWorldSpec: fg_min must exceed bg_max");
  require(proposal_bg_max > 0.0 && proposal_bg_max < 1.0, "ToyWorldSpec: proposal_bg_max must lie in (0, 1)");
  require(proposal_iou_min > 0.0 && proposal_iou_min <= 1.0,
          "ToyWorldSpec: proposal_iou_min must lie in (0, 1]");
  require(image_size > 40.0, "ToyWorldSpec: image too small for the box sizes used");
}

Split ToyWorld::split() const { return {semantics.seen_ids(), semantics.unseen_ids()}; }

Vector ToyWorld::clean_feature(int class_id) const {
  Vector f = matvec(mixing, semantics.vector_of(class_id));
  for (double& v : f) v = std::max(v, 0.0);
  return f;
}

namespace {

Vector unit_gaussian(RandomStream& rs, std::size_t n) {
  Vector v = sample_gaussian(rs, n);
  const double norm = l2_norm(v);
  for (double& x : v) x /= norm;
  return v;
}

Vector noisy_feature(const Vector& mean, double stddev, RandomStream& rs) {
  Vector f(mean.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::max(mean[k] + stddev * rs.gaussian(), 0.0);
  return f;
}

Vector background_feature(const Vector& object_mean, double overlap, double stddev, RandomStream& rs) {
  Vector mean(object_mean.size());
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = overlap * object_mean[k];
  return noisy_feature(mean, stddev, rs);
}

Box random_box(double image_size, double min_side, double max_side, RandomStream& rs) {
  const double w = rs.uniform(min_side, max_side);
  const double h = rs.uniform(min_side, max_side);
  const double x1 = rs.uniform(0.0, image_size - w);
  const double y1 = rs.uniform(0.0, image_size - h);
  return {x1, y1, x1 + w, y1 + h};
}

}  // namespace

ToyWorld gen_toy_world(const ToyWorldSpec& spec, RandomStream& stream) {
  spec.validate();
  std::vector<ClassEntry> seen;
  for (std::size_t i = 0; i < spec.num_seen; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seen_%02zu", i + 1);
    seen.push_back({static_cast<int>(i + 1), name, unit_gaussian(stream, spec.sem_dim)});
  }

  ToyWorld world;
  std::vector<ClassEntry> unseen;
  for (std::size_t u = 0; u < spec.num_unseen; ++u) {
    const std::size_t a = stream.index(spec.num_seen);
    std::size_t b = a;
    if (spec.num_seen > 1) {
      // distinct parents in the same hemisphere
      for (int tries = 0; tries < 64; ++tries) {
        b = stream.index(spec.num_seen);
        if (b != a && dot(seen[a].vec, seen[b].vec) > 0.0) break;
      }
      if (b == a) b = (a + 1) % spec.num_seen;
    }
    const double mix = stream.uniform(0.3, 0.7);
    Vector v(spec.sem_dim);
    for (std::size_t k = 0; k < spec.sem_dim; ++k) {
      v[k] = mix * seen[a].vec[k] + (1.0 - mix) * seen[b].vec[k] + spec.parent_jitter * stream.gaussian();
    }
    char name[32];
    std::snprintf(name, sizeof(name), "unseen_%02zu", u + 1);
    unseen.push_back({static_cast<int>(spec.num_seen + u + 1), name, std::move(v)});
    world.parents.push_back({a, b});
  }
  world.semantics = SemanticTable(spec.sem_dim, std::move(seen), std::move(unseen));

  world.mixing = Matrix(spec.feat_dim, spec.sem_dim);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(spec.sem_dim));
  for (double& m : world.mixing.flat()) m = stddev * stream.gaussian();
  return world;
}

FeatureSet gen_feature_set(const ToyWorld& world, const ToyWorldSpec& spec, RandomStream& stream) {
  spec.validate();
  FeatureSet set;
  set.feat_dim = spec.feat_dim;
  auto emit_class = [&](const ClassEntry& c, std::size_t count, FeatureSource source) {
    const Vector mean = matvec(world.mixing, c.vec);
    for (std::size_t n = 0; n < count; ++n) {
      const double t = stream.uniform(spec.policy.fg_min, 1.0);
      set.records.push_back({c.id, t, source, noisy_feature(mean, spec.sigma * (2.0 - t), stream)});
    }
  };
  for (const auto& c : world.semantics.seen()) emit_class(c, spec.records_per_class, FeatureSource::Real);
  for (const auto& c : world.semantics.unseen()) emit_class(c, spec.heldout_per_class, FeatureSource::Heldout);
  // A background box overlapping a seen object at IoU t carries t of its signal.
  const auto& seen = world.semantics.seen();
  for (std::size_t n = 0; n < spec.background_records; ++n) {
    const double t = stream.uniform(0.0, spec.policy.bg_max);
    const Vector mean = matvec(world.mixing, seen[stream.index(seen.size())].vec);
    set.records.push_back({kBackground, t, FeatureSource::Real, background_feature(mean, t, spec.sigma_bg, stream)});
  }
  return set;
}

Box jitter_box(const Box& gt, double target, RandomStream& stream) {
  require(gt.valid(), "jitter_box: degenerate box");
  require(target > 0.0 && target <= 1.0, "jitter_box: target IoU must lie in (0, 1]");
  const std::size_t mode = stream.index(4);
  const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
  if (target == 1.0) return gt;
  const double w = gt.width();
  const double h = gt.height();
  switch (mode) {
    case 0: {  // horizontal shift: IoU = (w - s) / (w + s)
      const double s = sign * w * (1.0 - target) / (1.0 + target);
      return {gt.x1 + s, gt.y1, gt.x2 + s, gt.y2};
    }
    case 1: {
      const double s = sign * h * (1.0 - target) / (1.0 + target);
      return {gt.x1, gt.y1 + s, gt.x2, gt.y2 + s};
    }
    default: {  // concentric rescale: IoU = k^2 when shrinking, 1/k^2 when growing
      const double k = mode == 2 ? std::sqrt(target) : 1.0 / std::sqrt(target);
      const double cx = 0.5 * (gt.x1 + gt.x2);
      const double cy = 0.5 * (gt.y1 + gt.y2);
      return {cx - 0.5 * k * w, cy - 0.5 * k * h, cx + 0.5 * k * w, cy + 0.5 * k * h};
    }
  }
}

std::vector<Scene> gen_detection_scenes(const ToyWorld& world, const ToyWorldSpec& spec,
                                        RandomStream& stream) {
  spec.validate();
  const SemanticTable& table = world.semantics;
  require(table.num_unseen() >= 1, "gen_detection_scenes: scenes need at least one unseen class");
  const std::size_t num_classes = table.num_seen() + table.num_unseen();

  // Seen class whose offsets are exact for each unseen class: highest cosine.
  std::vector<std::size_t> nearest_seen(table.num_unseen(), 0);
  for (std::size_t u = 0; u < table.num_unseen(); ++u) {
    double best = -2.0;
    for (std::size_t s = 0; s < table.num_seen(); ++s) {
      const double c = dot(table.unseen()[u].vec, table.seen()[s].vec);
      if (c > best) {
        best = c;
        nearest_seen[u] = s;
      }
    }
  }

  std::vector<Scene> scenes;
  for (std::size_t n = 0; n < spec.scenes; ++n) {
    Scene scene;
    scene.image_id = static_cast<int>(n + 1);
    const std::size_t objects = 1 + stream.index(5);
    for (std::size_t o = 0; o < objects; ++o) {
      const std::size_t pick = o == 0 ? table.num_seen() + stream.index(table.num_unseen())
                                      : stream.index(num_classes);
      const ClassEntry& c = pick < table.num_seen() ? table.seen()[pick] : table.unseen()[pick - table.num_seen()];
      const std::size_t exact_seen = pick < table.num_seen() ? pick : nearest_seen[pick - table.num_seen()];
      const Box gt = random_box(spec.image_size, 15.0, 35.0, stream);
      scene.gts.push_back({scene.image_id, gt, c.id});

      const Vector mean = matvec(world.mixing, c.vec);
      for (std::size_t p = 0; p < spec.proposals_per_gt; ++p) {
        const double target = stream.uniform(spec.proposal_iou_min, 1.0);
        Proposal prop;
        prop.image_id = scene.image_id;
        prop.box = jitter_box(gt, target, stream);
        const double realized = iou(prop.box, gt);
        prop.feature = noisy_feature(mean, spec.sigma * (2.0 - realized), stream);
        const BoxOffset exact = offset_between(prop.box, gt);
        const double scale = spec.offset_jitter * 0.5 * (gt.width() + gt.height());
        for (std::size_t s = 0; s < table.num_seen(); ++s) {
          BoxOffset off = exact;
          if (s != exact_seen) {
            for (double& v : off) v += scale * stream.gaussian();
          }
          prop.offsets.push_back(off);
        }
        scene.proposals.push_back(std::move(prop));
      }
    }
    for (std::size_t b = 0; b < spec.background_proposals; ++b) {
      Box box = random_box(spec.image_size, 10.0, 40.0, stream);
      bool clear = false;
      for (int tries = 0; tries < 200 && !clear; ++tries) {
        clear = std::all_of(scene.gts.begin(), scene.gts.end(),
                            [&](const GroundTruth& g) { return iou(box, g.box) <= spec.proposal_bg_max; });
        if (!clear) box = random_box(spec.image_size, 10.0, 40.0, stream);
      }
      if (!clear) continue;
      Proposal prop;
      prop.image_id = scene.image_id;
      prop.box = box;
      std::size_t nearest = 0;
      double overlap = -1.0;
      for (std::size_t g = 0; g < scene.gts.size(); ++g) {
        const double o = iou(box, scene.gts[g].box);
        if (o > overlap) {
          overlap = o;
          nearest = g;
        }
      }
      prop.feature = background_feature(matvec(world.mixing, table.vector_of(scene.gts[nearest].class_id)),
                                        overlap, spec.sigma_bg, stream);
      prop.offsets.assign(table.num_seen(), BoxOffset{0.0, 0.0, 0.0, 0.0});
      scene.proposals.push_back(std::move(prop));
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<GroundTruth> all_ground_truths(const std::vector<Scene>& scenes) {
  std::vector<GroundTruth> out;
  for (const auto& s : scenes) out.insert(out.end(), s.gts.begin(), s.gts.end());
  return out;
}

std::vector<Proposal> all_proposals(const std::vector<Scene>& scenes) {
  std::vector<Proposal> out;
  for (const auto& s : scenes) out.insert(out.end(), s.proposals.begin(), s.proposals.end());
  return out;
}

// ---------------------------------------------------------------------------
// Text formats

std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

namespace {

class LineReader {
 public:
  explicit LineReader(const fs::path& path) : source_(path.string()), in_(path) {
    if (!in_) throw DataError("cannot open " + source_);
  }

  // Next non-empty line split on whitespace; false at end of file.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      tokens.clear();
      std::istringstream is(line);
      std::string tok;
      while (is >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_, what); }

  double real(const std::string& tok) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
    return v;
  }

  long long integer(const std::string& tok) const {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
    return v;
  }

  std::size_t count(const std::string& tok) const {
    const long long v = integer(tok);
    if (v < 0) fail("negative count '" + tok + "'");
    return static_cast<std::size_t>(v);
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

}  // namespace

void write_semantics(const SemanticTable& table, const fs::path& path) {
  std::string out = std::to_string(table.dim()) + " " + std::to_string(table.num_seen()) + " " +
                    std::to_string(table.num_unseen()) + "\n";
  for (const auto* group : {&table.seen(), &table.unseen()}) {
    for (const auto& c : *group) {
      require(!c.name.empty() && c.name.find_first_of(" \t\n") == std::string::npos,
              "write_semantics: class names must be non-empty and free of whitespace");
      out += std::to_string(c.id) + " " + c.name;
      for (double v : c.vec) out += " " + format_real(v);
      out += "\n";
    }
  }
  write_file_atomically(path, out);
}

SemanticTable read_semantics(const fs::path& path) {
  LineReader reader(path);
  std::vector<std::string> tok;
  if (!reader.next(tok)) reader.fail("empty semantics file");
  if (tok.size() != 3) reader.fail("header must be 'd S U'");
  const std::size_t dim = reader.count(tok[0]);
  const std::size_t num_seen = reader.count(tok[1]);
  const std::size_t num_unseen = reader.count(tok[2]);
  if (dim == 0) reader.fail("dimension must be positive");

  std::vector<ClassEntry> seen;
  std::vector<ClassEntry> unseen;
  for (std::size_t i = 0; i < num_seen + num_unseen; ++i) {
    if (!reader.next(tok)) reader.fail("expected " + std::to_string(num_seen + num_unseen) + " classes");
    if (tok.size() != dim + 2) {
      reader.fail("expected 'class_id name' and " + std::to_string(dim) + " values, got " +
                  std::to_string(tok.size()) + " fields");
    }
    ClassEntry entry;
    entry.id = static_cast<int>(reader.integer(tok[0]));
    entry.name = tok[1];
    for (std::size_t k = 0; k < dim; ++k) entry.vec.push_back(reader.real(tok[k + 2]));
    if (!all_finite(entry.vec) || l2_norm(entry.vec) == 0.0) reader.fail("vector must be finite and nonzero");
    (i < num_seen ? seen : unseen).push_back(std::move(entry));
  }
  if (reader.next(tok)) reader.fail("more classes than the header declares");
  try {
    return SemanticTable(dim, std::move(seen), std::move(unseen));
  } catch (const ContractError& e) {
    throw ParseError(path.string(), reader.line(), e.what());
  }
}

void write_features(const FeatureSet& set, const fs::path& path) {
  std::string out = std::to_string(set.feat_dim) + " " + std::to_string(set.records.size()) + "\n";
  for (const auto& r : set.records) {
    require(r.values.size() == set.feat_dim, "write_features: record has wrong length");
    out += std::to_string(r.label) + " " + format_real(r.iou) + " " + source_name(r.source);
    for (double v : r.values) out += " " + format_real(v);
    out += "\n";
  }
  write_file_atomically(path, out);
}

FeatureSet read_features(const fs::path& path) {
  LineReader reader(path);
  std::vector<std::string> tok;
  if (!reader.next(tok)) reader.fail("empty features file");
  if (tok.size() != 2) reader.fail("header must be 'D N'");
  FeatureSet set;
  set.feat_dim = reader.count(tok[0]);
  const std::size_t n = reader.count(tok[1]);
  set.records.reserve(n);
  while (reader.next(tok)) {
    if (set.records.size() == n) reader.fail("more records than the header declares");
    if (tok.size() != set.feat_dim + 3) reader.fail("record must have label, iou, source and D values");
    FeatureRecord r;
    r.label = static_cast<int>(reader.integer(tok[0]));
    r.iou = reader.real(tok[1]);
    if (tok[2] == "real") {
      r.source = FeatureSource::Real;
    } else if (tok[2] == "synthetic") {
      r.source = FeatureSource::Synthetic;
    } else if (tok[2] == "heldout") {
      r.source = FeatureSource::Heldout;
    } else {
      reader.fail("unknown source '" + tok[2] + "'");
    }
    r.values.reserve(set.feat_dim);
    for (std::size_t k = 0; k < set.feat_dim; ++k) r.values.push_back(reader.real(tok[k + 3]));
    set.records.push_back(std::move(r));
  }
  if (set.records.size() != n) {
    reader.fail("header declares " + std::to_string(n) + " records, found " + std::to_string(set.records.size()));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Scenes (JSON)

namespace {

nlohmann::json box_json(const Box& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of four numbers");
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw DataError("degenerate box in scenes file");
  return b;
}

}  // namespace

void write_scenes(const std::vector<Scene>& scenes, const fs::path& path) {
  nlohmann::json images = nlohmann::json::array();
  for (const Scene& s : scenes) {
    nlohmann::json gts = nlohmann::json::array();
    for (const auto& g : s.gts) gts.push_back({g.class_id, box_json(g.box)});
    nlohmann::json props = nlohmann::json::array();
    for (const auto& p : s.proposals) {
      nlohmann::json entry = nlohmann::json::array({box_json(p.box), p.feature});
      if (!p.offsets.empty()) {
        nlohmann::json offs = nlohmann::json::array();
        for (const auto& o : p.offsets) offs.push_back({o[0], o[1], o[2], o[3]});
        entry.push_back(offs);
      }
      props.push_back(entry);
    }
    nlohmann::json img;
    img["image_id"] = s.image_id;
    img["gts"] = gts;
    img["proposals"] = props;
    images.push_back(img);
  }
  nlohmann::json root;
  root["images"] = images;
  write_file_atomically(path, root.dump() + "\n");
}

std::vector<Scene> read_scenes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Scene> scenes;
  try {
    const nlohmann::json root = nlohmann::json::parse(in);
    for (const auto& img : root.at("images")) {
      Scene s;
      s.image_id = img.at("image_id").get<int>();
      for (const auto& g : img.at("gts")) {
        s.gts.push_back({s.image_id, box_from(g.at(1)), g.at(0).get<int>()});
      }
      for (const auto& p : img.at("proposals")) {
        Proposal prop;
        prop.image_id = s.image_id;
        prop.box = box_from(p.at(0));
        prop.feature = p.at(1).get<Vector>();
        if (p.size() > 2) {
          for (const auto& o : p.at(2)) {
            if (o.size() != 4) throw DataError("offset must have four entries");
            prop.offsets.push_back({o[0].get<double>(), o[1].get<double>(), o[2].get<double>(), o[3].get<double>()});
          }
        }
        s.proposals.push_back(std::move(prop));
      }
      scenes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed scenes file: " + e.what());
  }
  return scenes;
}

void write_detections(const std::vector<Detection>& dets, const fs::path& path) {
  std::string out;
  char buf[256];
  for (const auto& d : dets) {
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", d.image_id, d.class_id,
                  d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2);
    out += buf;
  }
  write_file_atomically(path, out);
}

std::vector<Detection> read_detections(const fs::path& path) {
  LineReader reader(path);
  std::vector<std::string> tok;
  std::vector<Detection> dets;
  while (reader.next(tok)) {
    if (tok.size() != 7) reader.fail("expected 'image_id class_id score x1 y1 x2 y2'");
    Detection d;
    d.image_id = static_cast<int>(reader.integer(tok[0]));
    d.class_id = static_cast<int>(reader.integer(tok[1]));
    d.score = reader.real(tok[2]);
    d.box = {reader.real(tok[3]), reader.real(tok[4]), reader.real(tok[5]), reader.real(tok[6])};
    if (!d.box.valid()) reader.fail("degenerate box");
    dets.push_back(d);
  }
  return dets;
}

}  // namespace zsdgen
