#include "zsdgen/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "zsdgen/errors.hpp"

namespace zsdgen {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "zsdgen-checkpoint 1";

std::string render_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct Header {
  std::vector<std::pair<std::string, std::string>> fields;

  void add(std::string key, std::string value) { fields.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, std::size_t value) { add(std::move(key), std::to_string(value)); }
};

std::string serialize(const Header& header, const std::vector<std::span<const double>>& blocks) {
  std::string out = std::string(kMagic) + "\n";
  for (const auto& [k, v] : header.fields) out += k + " " + v + "\n";
  const std::size_t n = parameter_count(blocks);
  out += "params " + std::to_string(n) + "\n";
  out.reserve(out.size() + 8 * n);
  for (const auto& block : blocks) {
    for (double v : block) append_le(out, v);
  }
  return out;
}

struct Parsed {
  std::map<std::string, std::string> fields;
  std::vector<double> values;

  const std::string& get(const std::string& key, const std::string& source) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError(source, 0, "missing header field '" + key + "'");
    return it->second;
  }

  std::size_t get_size(const std::string& key, const std::string& source) const {
    const std::string& s = get(key, source);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError(source, 0, "bad integer for '" + key + "'");
    }
    return v;
  }

  double get_double(const std::string& key, const std::string& source) const {
    const std::string& s = get(key, source);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError(source, 0, "bad number for '" + key + "'");
    }
    return v;
  }
};

Parsed parse(const fs::path& path, const std::string& expected_kind) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + source);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kMagic) {
    throw ParseError(source, line_no, "not a zsdgen checkpoint");
  }
  Parsed parsed;
  std::size_t count = 0;
  bool have_params = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw ParseError(source, line_no, "expected 'key value'");
    std::string key = line.substr(0, space);
    std::string value = line.substr(space + 1);
    if (key == "params") {
      parsed.fields[key] = value;
      count = parsed.get_size("params", source);
      have_params = true;
      break;
    }
    parsed.fields[key] = value;
  }
  if (!have_params) throw ParseError(source, line_no, "missing 'params' line");
  if (parsed.get("kind", source) != expected_kind) {
    throw ParseError(source, 2, "expected kind '" + expected_kind + "'");
  }
  std::string payload(count * 8, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
    throw ParseError(source, line_no, "truncated parameter payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(source, line_no, "trailing bytes after parameter payload");
  }
  parsed.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) parsed.values[i] = read_le(payload.data() + 8 * i);
  return parsed;
}

void fill_blocks(const Parsed& parsed, const std::vector<std::span<double>>& blocks,
                 const std::string& source) {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  if (n != parsed.values.size()) {
    throw ParseError(source, 0, "parameter count does not match declared dimensions");
  }
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    std::memcpy(b.data(), parsed.values.data() + offset, b.size() * sizeof(double));
    offset += b.size();
  }
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<int> split_ids(const std::string& s, const std::string& source) {
  std::vector<int> ids;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError(source, 0, "bad class id '" + tok + "'");
    }
    ids.push_back(v);
  }
  return ids;
}

}  // namespace

void write_file_atomically(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_generator(const GeneratorParams& g, const fs::path& path) {
  Header h;
  h.add("kind", "generator");
  h.add("sem_dim", g.sem_dim);
  h.add("feat_dim", g.feat_dim);
  h.add("hidden", g.hidden);
  h.add("slope", render_double(g.slope));
  write_file_atomically(path, serialize(h, g.tensors()));
}

GeneratorParams load_generator(const fs::path& path) {
  const std::string source = path.string();
  Parsed p = parse(path, "generator");
  GeneratorParams g = GeneratorParams::zeros(p.get_size("sem_dim", source), p.get_size("feat_dim", source),
                                             p.get_size("hidden", source), p.get_double("slope", source));
  fill_blocks(p, g.tensors(), source);
  return g;
}

void save_critic(const CriticParams& c, const fs::path& path) {
  Header h;
  h.add("kind", "critic");
  h.add("feat_dim", c.feat_dim);
  h.add("sem_dim", c.sem_dim);
  h.add("hidden", c.hidden);
  h.add("slope", render_double(c.slope));
  write_file_atomically(path, serialize(h, c.tensors()));
}

CriticParams load_critic(const fs::path& path) {
  const std::string source = path.string();
  Parsed p = parse(path, "critic");
  CriticParams c = CriticParams::zeros(p.get_size("feat_dim", source), p.get_size("sem_dim", source),
                                       p.get_size("hidden", source), p.get_double("slope", source));
  fill_blocks(p, c.tensors(), source);
  return c;
}

void save_classifier_head(const ClassifierHead& head, const fs::path& path) {
  Header h;
  h.add("kind", "classifier_head");
  h.add("feat_dim", head.feat_dim);
  h.add("num_seen", head.num_seen);
  h.add("num_unseen", head.num_unseen);
  h.add("unseen_ready", head.unseen_ready ? std::string("1") : std::string("0"));
  h.add("classes", join_ids(head.class_ids));
  write_file_atomically(path, serialize(h, head.tensors()));
}

ClassifierHead load_classifier_head(const fs::path& path) {
  const std::string source = path.string();
  Parsed p = parse(path, "classifier_head");
  ClassifierHead head;
  head.feat_dim = p.get_size("feat_dim", source);
  head.num_seen = p.get_size("num_seen", source);
  head.num_unseen = p.get_size("num_unseen", source);
  head.unseen_ready = p.get("unseen_ready", source) == "1";
  head.class_ids = split_ids(p.get("classes", source), source);
  if (head.class_ids.size() != 1 + head.num_seen + head.num_unseen ||
      head.class_ids.front() != kBackground) {
    throw ParseError(source, 0, "class list does not match row counts");
  }
  head.weight = Matrix(head.class_ids.size(), head.feat_dim);
  head.bias.assign(head.class_ids.size(), 0.0);
  fill_blocks(p, head.tensors(), source);
  return head;
}

void save_semantic_classifier(const SemanticClassifier& sc, const fs::path& path) {
  Header h;
  h.add("kind", "semantic_classifier");
  h.add("sem_dim", sc.sem_dim());
  h.add("feat_dim", sc.feat_dim());
  h.add("classes", join_ids(sc.class_ids));
  auto blocks = sc.tensors();
  blocks.push_back(sc.semantics.flat());
  write_file_atomically(path, serialize(h, blocks));
}

SemanticClassifier load_semantic_classifier(const fs::path& path) {
  const std::string source = path.string();
  Parsed p = parse(path, "semantic_classifier");
  SemanticClassifier sc = SemanticClassifier::zeros(p.get_size("sem_dim", source), p.get_size("feat_dim", source));
  sc.class_ids = split_ids(p.get("classes", source), source);
  sc.semantics = Matrix(sc.sem_dim(), sc.class_ids.size());
  auto blocks = sc.tensors();
  blocks.push_back(sc.semantics.flat());
  fill_blocks(p, blocks, source);
  return sc;
}

}  // namespace zsdgen
