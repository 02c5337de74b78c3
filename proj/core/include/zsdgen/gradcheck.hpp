#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace zsdgen {

struct GradCheckOptions {
  std::size_t points = 100;  // kink-free points per check
  std::uint64_t seed = 7;
  double step = 1e-6;
  double tolerance = 1e-4;
  // Pre-activations and L1 arguments closer than this to zero are rejected.
  double kink_margin = 1e-3;
  std::size_t sem_dim = 3;
  std::size_t feat_dim = 5;
  std::size_t hidden = 7;
  std::size_t num_seen = 3;
  std::size_t num_unseen = 2;
  std::size_t batch = 4;
};

struct GradCheckEntry {
  std::string name;
  std::size_t points = 0;
  std::size_t rejected = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  bool passed() const;
};

/// Compares every analytic gradient in the library against central finite
/// differences at random kink-free points: generator and critic parameter
/// gradients, the critic input gradient, the gradient penalty, the critic
/// loss, and the adversarial, seen-classifier, unseen-classifier and
/// diversity generator terms.
GradCheckReport run_gradient_suite(const GradCheckOptions& options = {});

}  // namespace zsdgen
