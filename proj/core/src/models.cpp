#include "zsdgen/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "zsdgen/errors.hpp"

namespace zsdgen {

namespace {

void fill_gaussian(std::span<double> block, double stddev, RandomStream& stream) {
  for (double& v : block) v = stddev * stream.gaussian();
}

void normalize_entries(std::vector<ClassEntry>& entries, std::size_t dim) {
  for (auto& entry : entries) {
    require(entry.vec.size() == dim,
            "SemanticTable: class " + std::to_string(entry.id) + " has wrong vector length");
    require(all_finite(entry.vec), "SemanticTable: non-finite semantic vector");
    const double norm = l2_norm(entry.vec);
    require(norm > 0.0, "SemanticTable: zero semantic vector for class " + std::to_string(entry.id));
    for (double& v : entry.vec) v /= norm;
  }
}

Matrix columns_of(const std::vector<ClassEntry>& entries, std::size_t dim) {
  Matrix m(dim, entries.size());
  for (std::size_t c = 0; c < entries.size(); ++c) {
    for (std::size_t r = 0; r < dim; ++r) m(r, c) = entries[c].vec[r];
  }
  return m;
}

}  // namespace

SemanticTable::SemanticTable(std::size_t dim, std::vector<ClassEntry> seen,
                             std::vector<ClassEntry> unseen)
    : dim_(dim), seen_(std::move(seen)), unseen_(std::move(unseen)) {
  require(dim_ > 0, "SemanticTable: dimension must be positive");
  std::set<int> ids;
  for (const auto* group : {&seen_, &unseen_}) {
    for (const auto& entry : *group) {
      require(entry.id > kBackground, "SemanticTable: class ids must be positive");
      require(ids.insert(entry.id).second,
              "SemanticTable: duplicate class id " + std::to_string(entry.id));
    }
  }
  normalize_entries(seen_, dim_);
  normalize_entries(unseen_, dim_);
}

std::vector<int> SemanticTable::seen_ids() const {
  std::vector<int> ids;
  for (const auto& e : seen_) ids.push_back(e.id);
  return ids;
}

std::vector<int> SemanticTable::unseen_ids() const {
  std::vector<int> ids;
  for (const auto& e : unseen_) ids.push_back(e.id);
  return ids;
}

std::optional<std::size_t> SemanticTable::seen_index(int id) const {
  for (std::size_t i = 0; i < seen_.size(); ++i) {
    if (seen_[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> SemanticTable::unseen_index(int id) const {
  for (std::size_t i = 0; i < unseen_.size(); ++i) {
    if (unseen_[i].id == id) return i;
  }
  return std::nullopt;
}

bool SemanticTable::is_seen(int id) const { return seen_index(id).has_value(); }
bool SemanticTable::is_unseen(int id) const { return unseen_index(id).has_value(); }

const Vector& SemanticTable::vector_of(int id) const {
  if (auto i = seen_index(id)) return seen_[*i].vec;
  if (auto i = unseen_index(id)) return unseen_[*i].vec;
  throw DataError("no semantic vector for class " + std::to_string(id));
}

Matrix SemanticTable::seen_matrix() const { return columns_of(seen_, dim_); }
Matrix SemanticTable::unseen_matrix() const { return columns_of(unseen_, dim_); }

// ---------------------------------------------------------------------------
// Generator

GeneratorParams GeneratorParams::zeros(std::size_t sem_dim, std::size_t feat_dim,
                                       std::size_t hidden, double slope) {
  require(sem_dim > 0 && feat_dim > 0 && hidden > 0, "GeneratorParams: dimensions must be positive");
  GeneratorParams g;
  g.sem_dim = sem_dim;
  g.feat_dim = feat_dim;
  g.hidden = hidden;
  g.slope = slope;
  g.w1 = Matrix(hidden, 2 * sem_dim);
  g.b1.assign(hidden, 0.0);
  g.w2 = Matrix(feat_dim, hidden);
  g.b2.assign(feat_dim, 0.0);
  return g;
}

GeneratorParams GeneratorParams::init(std::size_t sem_dim, std::size_t feat_dim,
                                      std::size_t hidden, double slope, RandomStream& stream) {
  GeneratorParams g = zeros(sem_dim, feat_dim, hidden, slope);
  fill_gaussian(g.w1.flat(), 1.0 / std::sqrt(static_cast<double>(2 * sem_dim)), stream);
  fill_gaussian(g.w2.flat(), 1.0 / std::sqrt(static_cast<double>(hidden)), stream);
  return g;
}

std::vector<std::span<double>> GeneratorParams::tensors() {
  return {w1.flat(), b1, w2.flat(), b2};
}

std::vector<std::span<const double>> GeneratorParams::tensors() const {
  return {w1.flat(), b1, w2.flat(), b2};
}

GeneratorTrace generator_trace(const GeneratorParams& g, std::span<const double> w,
                               std::span<const double> z) {
  require(w.size() == g.sem_dim && z.size() == g.sem_dim,
          "generator_forward: semantic/noise dimension mismatch");
  GeneratorTrace t;
  t.input = concat(w, z);
  t.hidden_pre = matvec(g.w1, t.input);
  t.hidden.resize(g.hidden);
  for (std::size_t j = 0; j < g.hidden; ++j) {
    t.hidden_pre[j] += g.b1[j];
    t.hidden[j] = leaky_relu(t.hidden_pre[j], g.slope);
  }
  t.out_pre = matvec(g.w2, t.hidden);
  t.out.resize(g.feat_dim);
  for (std::size_t k = 0; k < g.feat_dim; ++k) {
    t.out_pre[k] += g.b2[k];
    t.out[k] = std::max(t.out_pre[k], 0.0);
  }
  return t;
}

Vector generator_forward(const GeneratorParams& g, std::span<const double> w,
                         std::span<const double> z) {
  return generator_trace(g, w, z).out;
}

void generator_backward(const GeneratorParams& g, const GeneratorTrace& trace,
                        std::span<const double> grad_out, GeneratorParams& grad) {
  require(grad_out.size() == g.feat_dim, "generator_backward: gradient length mismatch");
  Vector grad_out_pre(g.feat_dim);
  for (std::size_t k = 0; k < g.feat_dim; ++k) {
    grad_out_pre[k] = trace.out_pre[k] > 0.0 ? grad_out[k] : 0.0;
  }
  add_outer(grad.w2, grad_out_pre, trace.hidden);
  axpy(1.0, grad_out_pre, grad.b2);
  Vector grad_hidden = matvec_t(g.w2, grad_out_pre);
  for (std::size_t j = 0; j < g.hidden; ++j) {
    grad_hidden[j] *= leaky_relu_slope(trace.hidden_pre[j], g.slope);
  }
  add_outer(grad.w1, grad_hidden, trace.input);
  axpy(1.0, grad_hidden, grad.b1);
}

// ---------------------------------------------------------------------------
// Critic

CriticParams CriticParams::zeros(std::size_t feat_dim, std::size_t sem_dim, std::size_t hidden,
                                 double slope) {
  require(sem_dim > 0 && feat_dim > 0 && hidden > 0, "CriticParams: dimensions must be positive");
  CriticParams c;
  c.feat_dim = feat_dim;
  c.sem_dim = sem_dim;
  c.hidden = hidden;
  c.slope = slope;
  c.w1 = Matrix(hidden, feat_dim + sem_dim);
  c.b1.assign(hidden, 0.0);
  c.w2.assign(hidden, 0.0);
  c.b2 = 0.0;
  return c;
}

CriticParams CriticParams::init(std::size_t feat_dim, std::size_t sem_dim, std::size_t hidden,
                                double slope, RandomStream& stream) {
  CriticParams c = zeros(feat_dim, sem_dim, hidden, slope);
  fill_gaussian(c.w1.flat(), 1.0 / std::sqrt(static_cast<double>(feat_dim + sem_dim)), stream);
  fill_gaussian(c.w2, 1.0 / std::sqrt(static_cast<double>(hidden)), stream);
  return c;
}

std::vector<std::span<double>> CriticParams::tensors() {
  return {w1.flat(), b1, w2, std::span<double>(&b2, 1)};
}

std::vector<std::span<const double>> CriticParams::tensors() const {
  return {w1.flat(), b1, w2, std::span<const double>(&b2, 1)};
}

CriticTrace critic_trace(const CriticParams& c, std::span<const double> f,
                         std::span<const double> w) {
  require(f.size() == c.feat_dim && w.size() == c.sem_dim,
          "critic_forward: feature/semantic dimension mismatch");
  CriticTrace t;
  t.input = concat(f, w);
  t.hidden_pre = matvec(c.w1, t.input);
  t.hidden.resize(c.hidden);
  for (std::size_t j = 0; j < c.hidden; ++j) {
    t.hidden_pre[j] += c.b1[j];
    t.hidden[j] = leaky_relu(t.hidden_pre[j], c.slope);
  }
  t.score = dot(c.w2, t.hidden) + c.b2;
  return t;
}

double critic_forward(const CriticParams& c, std::span<const double> f,
                      std::span<const double> w) {
  return critic_trace(c, f, w).score;
}

Vector critic_input_grad(const CriticParams& c, std::span<const double> f,
                         std::span<const double> w) {
  const CriticTrace t = critic_trace(c, f, w);
  Vector gate(c.hidden);
  for (std::size_t j = 0; j < c.hidden; ++j) {
    gate[j] = c.w2[j] * leaky_relu_slope(t.hidden_pre[j], c.slope);
  }
  Vector grad(c.feat_dim, 0.0);
  for (std::size_t j = 0; j < c.hidden; ++j) {
    if (gate[j] == 0.0) continue;
    axpy(gate[j], c.w1.row(j).first(c.feat_dim), grad);
  }
  return grad;
}

void critic_backward(const CriticParams& c, const CriticTrace& trace, double grad_score,
                     CriticParams& grad) {
  grad.b2 += grad_score;
  axpy(grad_score, trace.hidden, grad.w2);
  Vector grad_pre(c.hidden);
  for (std::size_t j = 0; j < c.hidden; ++j) {
    grad_pre[j] = grad_score * c.w2[j] * leaky_relu_slope(trace.hidden_pre[j], c.slope);
  }
  add_outer(grad.w1, grad_pre, trace.input);
  axpy(1.0, grad_pre, grad.b1);
}

// ---------------------------------------------------------------------------
// Classifier head

ClassifierHead ClassifierHead::create(const SemanticTable& semantics, std::size_t feat_dim,
                                      RandomStream& stream) {
  require(feat_dim > 0, "ClassifierHead: feature dimension must be positive");
  ClassifierHead h;
  h.feat_dim = feat_dim;
  h.num_seen = semantics.num_seen();
  h.num_unseen = semantics.num_unseen();
  h.class_ids.push_back(kBackground);
  for (int id : semantics.seen_ids()) h.class_ids.push_back(id);
  for (int id : semantics.unseen_ids()) h.class_ids.push_back(id);
  h.weight = Matrix(h.class_ids.size(), feat_dim);
  h.bias.assign(h.class_ids.size(), 0.0);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(feat_dim));
  for (std::size_t r = 0; r <= h.num_seen; ++r) fill_gaussian(h.weight.row(r), stddev, stream);
  h.unseen_ready = h.num_unseen == 0;
  return h;
}

std::size_t ClassifierHead::row_of(int class_id) const {
  for (std::size_t r = 0; r < class_ids.size(); ++r) {
    if (class_ids[r] == class_id) return r;
  }
  throw ContractError("ClassifierHead: no row for class " + std::to_string(class_id));
}

std::vector<std::size_t> ClassifierHead::rows(RowSet set) const {
  std::vector<std::size_t> out{0};
  if (set != RowSet::UnseenAndBackground) {
    for (std::size_t r = 1; r <= num_seen; ++r) out.push_back(r);
  }
  if (set != RowSet::SeenAndBackground) {
    for (std::size_t r = num_seen + 1; r < class_ids.size(); ++r) out.push_back(r);
  }
  return out;
}

double ClassifierHead::logit(std::size_t row, std::span<const double> f) const {
  return dot(weight.row(row), f) + bias[row];
}

std::vector<std::span<double>> ClassifierHead::tensors() { return {weight.flat(), bias}; }
std::vector<std::span<const double>> ClassifierHead::tensors() const {
  return {weight.flat(), bias};
}

Vector classifier_forward(const ClassifierHead& head, std::span<const double> f,
                          std::span<const std::size_t> active_rows) {
  require(f.size() == head.feat_dim, "classifier_forward: feature dimension mismatch");
  require(!active_rows.empty(), "classifier_forward: no active rows");
  Vector logits;
  logits.reserve(active_rows.size());
  for (std::size_t r : active_rows) {
    require(r < head.num_rows(), "classifier_forward: row out of range");
    require(!head.is_unseen_row(r) || head.unseen_ready,
            "classifier_forward: unseen rows are not initialized");
    logits.push_back(head.logit(r, f));
  }
  return softmax(logits);
}

// ---------------------------------------------------------------------------
// Semantic classifier

SemanticClassifier SemanticClassifier::zeros(std::size_t sem_dim, std::size_t feat_dim) {
  require(sem_dim > 0 && feat_dim > 0, "SemanticClassifier: dimensions must be positive");
  SemanticClassifier sc;
  sc.w_fc = Matrix(sem_dim, feat_dim);
  sc.b_fc.assign(sem_dim, 0.0);
  sc.semantics = Matrix(sem_dim, 0);
  return sc;
}

SemanticClassifier SemanticClassifier::init(std::size_t sem_dim, std::size_t feat_dim,
                                            RandomStream& stream) {
  SemanticClassifier sc = zeros(sem_dim, feat_dim);
  fill_gaussian(sc.w_fc.flat(), 1.0 / std::sqrt(static_cast<double>(feat_dim)), stream);
  return sc;
}

SemanticClassifier SemanticClassifier::attach(const Matrix& semantic_columns,
                                              std::vector<int> ids) const {
  require(semantic_columns.rows() == sem_dim(), "SemanticClassifier: semantic dimension mismatch");
  require(semantic_columns.cols() == ids.size(), "SemanticClassifier: one id per column required");
  SemanticClassifier out = *this;
  out.semantics = semantic_columns;
  out.class_ids = std::move(ids);
  return out;
}

SemanticClassifier SemanticClassifier::attach_seen(const SemanticTable& table) const {
  return attach(table.seen_matrix(), table.seen_ids());
}

SemanticClassifier SemanticClassifier::attach_unseen(const SemanticTable& table) const {
  return attach(table.unseen_matrix(), table.unseen_ids());
}

std::size_t SemanticClassifier::column_of(int class_id) const {
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    if (class_ids[c] == class_id) return c;
  }
  throw ContractError("SemanticClassifier: class " + std::to_string(class_id) +
                      " is not attached");
}

Vector SemanticClassifier::project(std::span<const double> f) const {
  require(f.size() == feat_dim(), "SemanticClassifier: feature dimension mismatch");
  Vector e = matvec(w_fc, f);
  axpy(1.0, b_fc, e);
  return e;
}

Vector SemanticClassifier::logits(std::span<const double> f) const {
  return matvec_t(semantics, project(f));
}

std::vector<std::span<double>> SemanticClassifier::tensors() { return {w_fc.flat(), b_fc}; }
std::vector<std::span<const double>> SemanticClassifier::tensors() const {
  return {w_fc.flat(), b_fc};
}

Vector semantic_classifier_forward(const SemanticClassifier& sc, std::span<const double> f) {
  require(sc.num_classes() > 0, "semantic_classifier_forward: no semantics attached");
  return softmax(sc.logits(f));
}

std::size_t parameter_count(const std::vector<std::span<const double>>& blocks) {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

}  // namespace zsdgen
