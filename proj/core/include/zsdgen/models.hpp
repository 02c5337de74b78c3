#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsdgen/numerics.hpp"

namespace zsdgen {

// Class id reserved for the background row / background records.
inline constexpr int kBackground = 0;

struct ClassEntry {
  int id = 0;
  std::string name;
  Vector vec;

  bool operator==(const ClassEntry&) const = default;
};

/// Seen and unseen class embeddings. Every vector is normalized to unit
/// length on construction; ids are positive and the two sets are disjoint.
class SemanticTable {
 public:
  SemanticTable() = default;
  SemanticTable(std::size_t dim, std::vector<ClassEntry> seen, std::vector<ClassEntry> unseen);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_seen() const noexcept { return seen_.size(); }
  std::size_t num_unseen() const noexcept { return unseen_.size(); }
  const std::vector<ClassEntry>& seen() const noexcept { return seen_; }
  const std::vector<ClassEntry>& unseen() const noexcept { return unseen_; }

  std::vector<int> seen_ids() const;
  std::vector<int> unseen_ids() const;
  bool is_seen(int id) const;
  bool is_unseen(int id) const;
  // Throws DataError for unknown ids.
  const Vector& vector_of(int id) const;
  // Position of a seen id within seen(); nullopt when not seen.
  std::optional<std::size_t> seen_index(int id) const;
  std::optional<std::size_t> unseen_index(int id) const;

  // d x S and d x U, one column per class in table order.
  Matrix seen_matrix() const;
  Matrix unseen_matrix() const;

  bool operator==(const SemanticTable&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<ClassEntry> seen_;
  std::vector<ClassEntry> unseen_;
};

inline constexpr double kDefaultSlope = 0.2;

/// G(w, z) = relu(W2 * lrelu(W1 [w; z] + b1) + b2). Noise has the same
/// dimension as the semantic vector.
struct GeneratorParams {
  std::size_t sem_dim = 0;
  std::size_t feat_dim = 0;
  std::size_t hidden = 0;
  double slope = kDefaultSlope;
  Matrix w1;  // hidden x 2*sem_dim
  Vector b1;
  Matrix w2;  // feat_dim x hidden
  Vector b2;

  static GeneratorParams zeros(std::size_t sem_dim, std::size_t feat_dim, std::size_t hidden,
                               double slope = kDefaultSlope);
  static GeneratorParams init(std::size_t sem_dim, std::size_t feat_dim, std::size_t hidden,
                              double slope, RandomStream& stream);

  // Parameter blocks in checkpoint order: w1, b1, w2, b2.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const GeneratorParams&) const = default;
};

struct GeneratorTrace {
  Vector input;
  Vector hidden_pre;
  Vector hidden;
  Vector out_pre;
  Vector out;
};

GeneratorTrace generator_trace(const GeneratorParams& g, std::span<const double> w,
                               std::span<const double> z);
Vector generator_forward(const GeneratorParams& g, std::span<const double> w,
                         std::span<const double> z);
// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
void generator_backward(const GeneratorParams& g, const GeneratorTrace& trace,
                        std::span<const double> grad_out, GeneratorParams& grad);

/// D(f, w) = v . lrelu(W1 [f; w] + b1) + c.
struct CriticParams {
  std::size_t feat_dim = 0;
  std::size_t sem_dim = 0;
  std::size_t hidden = 0;
  double slope = kDefaultSlope;
  Matrix w1;  // hidden x (feat_dim + sem_dim)
  Vector b1;
  Vector w2;  // hidden
  double b2 = 0.0;

  static CriticParams zeros(std::size_t feat_dim, std::size_t sem_dim, std::size_t hidden,
                            double slope = kDefaultSlope);
  static CriticParams init(std::size_t feat_dim, std::size_t sem_dim, std::size_t hidden,
                           double slope, RandomStream& stream);

  // Parameter blocks in checkpoint order: w1, b1, w2, b2.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const CriticParams&) const = default;
};

struct CriticTrace {
  Vector input;
  Vector hidden_pre;
  Vector hidden;
  double score = 0.0;
};

CriticTrace critic_trace(const CriticParams& c, std::span<const double> f,
                         std::span<const double> w);
double critic_forward(const CriticParams& c, std::span<const double> f, std::span<const double> w);
/// Closed form: W1_f^T (lrelu'(pre) * v), where W1_f is the feature block.
Vector critic_input_grad(const CriticParams& c, std::span<const double> f,
                         std::span<const double> w);
// Accumulates grad_score * d(score)/d(params) into grad.
void critic_backward(const CriticParams& c, const CriticTrace& trace, double grad_score,
                     CriticParams& grad);

enum class RowSet { SeenAndBackground, UnseenAndBackground, All };

/// Linear softmax head. Row 0 is background, then seen rows, then unseen
/// rows, following the order of the semantic table it was built from.
struct ClassifierHead {
  std::size_t feat_dim = 0;
  std::size_t num_seen = 0;
  std::size_t num_unseen = 0;
  std::vector<int> class_ids;  // row -> class id; row 0 holds kBackground
  Matrix weight;               // (1 + S + U) x feat_dim
  Vector bias;
  bool unseen_ready = false;

  // Seen rows drawn N(0, 1/feat_dim), zero biases; unseen rows zero and
  // marked uninitialized.
  static ClassifierHead create(const SemanticTable& semantics, std::size_t feat_dim,
                               RandomStream& stream);

  std::size_t num_rows() const noexcept { return class_ids.size(); }
  // Throws ContractError for ids without a row.
  std::size_t row_of(int class_id) const;
  std::vector<std::size_t> rows(RowSet set) const;
  bool is_unseen_row(std::size_t row) const noexcept { return row > num_seen; }
  double logit(std::size_t row, std::span<const double> f) const;

  // Parameter blocks in checkpoint order: weight, bias.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const ClassifierHead&) const = default;
};

/// Softmax over the affine scores of the given rows, in the given order.
Vector classifier_forward(const ClassifierHead& head, std::span<const double> f,
                          std::span<const std::size_t> active_rows);

/// f -> W_fc f + b_fc -> semantics^T -> softmax. The semantics matrix is
/// fixed; attach() swaps it without touching the projection.
struct SemanticClassifier {
  Matrix w_fc;  // d x feat_dim
  Vector b_fc;  // d
  Matrix semantics;  // d x K
  std::vector<int> class_ids;  // column -> class id

  static SemanticClassifier zeros(std::size_t sem_dim, std::size_t feat_dim);
  static SemanticClassifier init(std::size_t sem_dim, std::size_t feat_dim, RandomStream& stream);

  std::size_t sem_dim() const noexcept { return w_fc.rows(); }
  std::size_t feat_dim() const noexcept { return w_fc.cols(); }
  std::size_t num_classes() const noexcept { return class_ids.size(); }

  SemanticClassifier attach(const Matrix& semantic_columns, std::vector<int> ids) const;
  SemanticClassifier attach_seen(const SemanticTable& table) const;
  SemanticClassifier attach_unseen(const SemanticTable& table) const;

  std::size_t column_of(int class_id) const;
  Vector project(std::span<const double> f) const;
  Vector logits(std::span<const double> f) const;

  // Trainable blocks in checkpoint order: w_fc, b_fc.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const SemanticClassifier&) const = default;
};

Vector semantic_classifier_forward(const SemanticClassifier& sc, std::span<const double> f);

// Total number of scalars across parameter blocks.
std::size_t parameter_count(const std::vector<std::span<const double>>& blocks);

}  // namespace zsdgen
