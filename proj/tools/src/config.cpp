#include "zsdgen/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace zsdgen::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (quote == 0 && (line[i] == '"' || line[i] == '\'')) {
      quote = line[i];
    } else if (line[i] == quote) {
      quote = 0;
    }
    if (line[i] == '#' && quote == 0) return line.substr(0, i);
  }
  return line;
}

struct Value {
  std::string key;
  std::string text;

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key, what); }

  double real() const {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) fail("expected a number, got '" + text + "'");
    return v;
  }

  double non_negative() const {
    const double v = real();
    if (!(v >= 0.0)) fail("must be non-negative");
    return v;
  }

  double positive() const {
    const double v = real();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }

  double unit_interval() const {
    const double v = real();
    if (!(v > 0.0 && v < 1.0)) fail("must lie in (0, 1)");
    return v;
  }

  std::uint64_t count() const {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) {
      fail("expected a non-negative integer, got '" + text + "'");
    }
    return v;
  }

  std::uint64_t positive_count() const {
    const auto v = count();
    if (v == 0) fail("must be positive");
    return v;
  }

  std::string string() const {
    for (char q : {'"', '\''}) {
      if (text.size() >= 2 && text.front() == q && text.back() == q) return text.substr(1, text.size() - 2);
    }
    if (text.find_first_of("\"'") != std::string::npos) fail("unterminated string");
    return text;
  }

  template <class E>
  E choice(const std::map<std::string, E>& options) const {
    const std::string s = string();
    if (const auto it = options.find(s); it != options.end()) return it->second;
    std::string names;
    for (const auto& [name, _] : options) names += (names.empty() ? "" : ", ") + name;
    fail("expected one of " + names + ", got '" + s + "'");
  }
};

using Setter = std::function<void(RunConfig&, const Value&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto as_int = [](const Value& v) { return static_cast<int>(v.count()); };
    t["seed"] = [](RunConfig& c, const Value& v) { c.seed = v.count(); };

    t["alpha1"] = [](RunConfig& c, const Value& v) { c.train.weights.alpha1 = v.non_negative(); };
    t["alpha2"] = [](RunConfig& c, const Value& v) { c.train.weights.alpha2 = v.non_negative(); };
    t["alpha3"] = [](RunConfig& c, const Value& v) { c.train.weights.alpha3 = v.non_negative(); };
    t["alpha4"] = [](RunConfig& c, const Value& v) { c.train.weights.alpha4 = v.non_negative(); };
    t["lambda"] = [](RunConfig& c, const Value& v) { c.train.weights.lambda = v.non_negative(); };
    t["warmup_epochs"] = [as_int](RunConfig& c, const Value& v) { c.train.weights.warmup_epochs = as_int(v); };

    t["lr"] = [](RunConfig& c, const Value& v) { c.train.gan_adam.lr = v.positive(); };
    t["beta1"] = [](RunConfig& c, const Value& v) { c.train.gan_adam.beta1 = v.non_negative(); };
    t["beta2"] = [](RunConfig& c, const Value& v) { c.train.gan_adam.beta2 = v.non_negative(); };
    t["adam_eps"] = [](RunConfig& c, const Value& v) {
      c.train.gan_adam.eps = v.positive();
      c.train.classifier_adam.eps = c.train.gan_adam.eps;
    };
    t["classifier_lr"] = [](RunConfig& c, const Value& v) { c.train.classifier_adam.lr = v.positive(); };
    t["classifier_beta1"] = [](RunConfig& c, const Value& v) { c.train.classifier_adam.beta1 = v.non_negative(); };
    t["classifier_beta2"] = [](RunConfig& c, const Value& v) { c.train.classifier_adam.beta2 = v.non_negative(); };
    t["n_critic"] = [](RunConfig& c, const Value& v) { c.train.n_critic = static_cast<int>(v.positive_count()); };
    t["batch_size"] = [](RunConfig& c, const Value& v) { c.train.batch_size = v.positive_count(); };
    t["gan_epochs"] = [as_int](RunConfig& c, const Value& v) { c.train.gan_epochs = as_int(v); };
    t["features_per_unseen_class"] = [](RunConfig& c, const Value& v) { c.train.features_per_unseen_class = v.count(); };
    t["classifier_epochs"] = [as_int](RunConfig& c, const Value& v) { c.train.classifier_epochs = as_int(v); };
    t["semantic_epochs"] = [as_int](RunConfig& c, const Value& v) { c.train.semantic_epochs = as_int(v); };
    t["hidden"] = [](RunConfig& c, const Value& v) { c.train.hidden = v.positive_count(); };
    t["slope"] = [](RunConfig& c, const Value& v) { c.train.slope = v.non_negative(); };
    t["penalty_mix"] = [](RunConfig& c, const Value& v) {
      c.train.penalty_mix = v.choice<PenaltyMix>({{"uniform", PenaltyMix::Uniform}, {"normal", PenaltyMix::Normal}});
    };
    t["diversity_sign"] = [](RunConfig& c, const Value& v) {
      c.train.diversity_sign =
          v.choice<DiversitySign>({{"maximize", DiversitySign::Maximize}, {"minimize", DiversitySign::Minimize}});
    };
    t["update_mode"] = [](RunConfig& c, const Value& v) {
      c.train.update_mode =
          v.choice<UpdateMode>({{"frozen_seen", UpdateMode::FrozenSeen}, {"joint", UpdateMode::Joint}});
    };

    t["sem_dim"] = [](RunConfig& c, const Value& v) { c.world.sem_dim = v.positive_count(); };
    t["feat_dim"] = [](RunConfig& c, const Value& v) { c.world.feat_dim = v.positive_count(); };
    t["num_seen"] = [](RunConfig& c, const Value& v) { c.world.num_seen = v.positive_count(); };
    t["num_unseen"] = [](RunConfig& c, const Value& v) { c.world.num_unseen = v.count(); };
    t["sigma"] = [](RunConfig& c, const Value& v) { c.world.sigma = v.positive(); };
    t["sigma_bg"] = [](RunConfig& c, const Value& v) { c.world.sigma_bg = v.positive(); };
    t["parent_jitter"] = [](RunConfig& c, const Value& v) { c.world.parent_jitter = v.non_negative(); };
    t["records_per_class"] = [](RunConfig& c, const Value& v) { c.world.records_per_class = v.count(); };
    t["heldout_per_class"] = [](RunConfig& c, const Value& v) { c.world.heldout_per_class = v.count(); };
    t["background_records"] = [](RunConfig& c, const Value& v) { c.world.background_records = v.count(); };
    t["scenes"] = [](RunConfig& c, const Value& v) { c.world.scenes = v.count(); };
    t["proposals_per_gt"] = [](RunConfig& c, const Value& v) { c.world.proposals_per_gt = v.count(); };
    t["background_proposals"] = [](RunConfig& c, const Value& v) { c.world.background_proposals = v.count(); };
    t["proposal_iou_min"] = [](RunConfig& c, const Value& v) { c.world.proposal_iou_min = v.unit_interval(); };
    t["proposal_bg_max"] = [](RunConfig& c, const Value& v) { c.world.proposal_bg_max = v.unit_interval(); };
    t["offset_jitter"] = [](RunConfig& c, const Value& v) { c.world.offset_jitter = v.non_negative(); };
    t["image_size"] = [](RunConfig& c, const Value& v) { c.world.image_size = v.positive(); };
    t["extraction_policy"] = [](RunConfig& c, const Value& v) {
      c.world.policy = v.choice<ExtractionPolicy>(
          {{"distinct", ExtractionPolicy::distinct()}, {"overlapping", ExtractionPolicy::overlapping()}});
    };
    t["fg_min"] = [](RunConfig& c, const Value& v) { c.world.policy.fg_min = v.unit_interval(); };
    t["bg_max"] = [](RunConfig& c, const Value& v) { c.world.policy.bg_max = v.unit_interval(); };

    t["mode"] = [](RunConfig& c, const Value& v) {
      c.detect.mode = v.choice<DetectMode>({{"zsd", DetectMode::Zsd}, {"gzsd", DetectMode::Gzsd}});
    };
    t["top_k"] = [](RunConfig& c, const Value& v) { c.detect.top_k = v.positive_count(); };
    t["nms_threshold"] = [](RunConfig& c, const Value& v) { c.detect.nms_threshold = v.non_negative(); };
    t["score_threshold"] = [](RunConfig& c, const Value& v) { c.detect.score_threshold = v.non_negative(); };
    t["iou_threshold"] = [](RunConfig& c, const Value& v) { c.iou_threshold = v.unit_interval(); };
    t["recall_k"] = [](RunConfig& c, const Value& v) { c.recall_k = v.positive_count(); };
    t["ap_mode"] = [](RunConfig& c, const Value& v) {
      c.ap_mode = v.choice<ApMode>({{"all_point", ApMode::AllPoint}, {"eleven_point", ApMode::ElevenPoint}});
    };

    t["out_dir"] = [](RunConfig& c, const Value& v) { c.out_dir = v.string(); };
    auto input = [](std::optional<std::filesystem::path> RunConfig::*member) {
      return [member](RunConfig& c, const Value& v) {
        std::filesystem::path p = v.string();
        if (!std::filesystem::exists(p)) v.fail("file not found: " + p.string());
        c.*member = std::move(p);
      };
    };
    t["semantics_path"] = input(&RunConfig::semantics_path);
    t["features_path"] = input(&RunConfig::features_path);
    t["scenes_path"] = input(&RunConfig::scenes_path);
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    world.validate();
  } catch (const ContractError& e) {
    throw ConfigError("", std::string("invalid data settings: ") + e.what());
  }
  try {
    train.validate();
  } catch (const ContractError& e) {
    throw ConfigError("", std::string("invalid training settings: ") + e.what());
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen_keys;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError("", where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("", where + ": missing key");
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, where + ": unknown key");
    if (const auto dup = seen_keys.find(key); dup != seen_keys.end()) {
      throw ConfigError(key, where + ": duplicate key (first set on line " + std::to_string(dup->second) + ")");
    }
    seen_keys[key] = line_no;
    if (value.empty()) throw ConfigError(key, where + ": missing value");
    it->second(cfg, Value{key, value});
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

}  // namespace zsdgen::cli
