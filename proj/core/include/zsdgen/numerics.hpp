#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace zsdgen {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l1_norm(std::span<const double> x);
double l2_norm(std::span<const double> x);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

// A x
Vector matvec(const Matrix& a, std::span<const double> x);
// A^T x
Vector matvec_t(const Matrix& a, std::span<const double> x);
// A += scale * u v^T
void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale = 1.0);

Vector concat(std::span<const double> a, std::span<const double> b);

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_relu_slope(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

bool all_finite(std::span<const double> x);

/// Numerically stable softmax. Throws InvalidInput on non-finite or empty input.
Vector softmax(std::span<const double> logits);

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place. Shapes of params, grads and
/// both accumulators must match.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper);

/// Seeded random source. Built on std::mt19937_64, whose output sequence is
/// fixed by the standard, so streams reproduce across platforms.
///
/// uniform() uses the top 53 bits of one engine draw. gaussian() is
/// Box-Muller: u1 = 1 - uniform(), u2 = uniform(), r = sqrt(-2 ln u1);
/// the first call returns r*cos(2 pi u2), the next returns the cached
/// r*sin(2 pi u2).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  // Engine draws consumed so far.
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  double gaussian();

  // Independent stream keyed by (seed, tag); does not advance this stream.
  RandomStream derive(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Vector sample_gaussian(RandomStream& stream, std::size_t n);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient estimate. Throws InvalidInput when an
/// evaluation is not finite.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> point, double h);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace zsdgen
