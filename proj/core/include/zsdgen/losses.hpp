#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zsdgen/models.hpp"
#include "zsdgen/numerics.hpp"

namespace zsdgen {

// Distribution of the real/fake mixing coefficient in the gradient penalty.
enum class PenaltyMix { Uniform, Normal };

// Direction the generator pushes the diversity term. Maximize subtracts
// alpha4 * L_div from the generator objective; Minimize adds it.
enum class DiversitySign { Maximize, Minimize };

struct LossWeights {
  double alpha1 = 1.0;
  double alpha2 = 0.1;
  double alpha3 = 0.1;
  double alpha4 = 1.0;
  double lambda = 10.0;
  int warmup_epochs = 5;

  // Throws ContractError when any weight is negative.
  void validate() const;
};

struct CriticGradient {
  double value = 0.0;
  CriticParams grad;
};

struct GeneratorGradient {
  double value = 0.0;
  GeneratorParams grad;
};

struct CriticLoss {
  double value = 0.0;    // -(wgan) + penalty
  double wgan = 0.0;     // mean D(real) - mean D(fake)
  double penalty = 0.0;
  CriticParams grad;
};

std::vector<double> draw_mix_coefficients(RandomStream& stream, std::size_t n, PenaltyMix mix);

/// lambda * mean((||grad_f D(f_hat, w)|| - 1)^2) with f_hat = a f + (1 - a) f_fake,
/// one coefficient per pair. The norm is sqrt(||.||^2 + 1e-12).
CriticGradient gradient_penalty(const CriticParams& c, std::span<const Vector> real,
                                std::span<const Vector> fake, std::span<const Vector> sem,
                                double lambda, std::span<const double> mix);

CriticLoss critic_loss(const CriticParams& c, std::span<const Vector> real,
                       std::span<const Vector> fake, std::span<const Vector> sem, double lambda,
                       std::span<const double> mix);

/// -mean D(G(w, z), w). Gradients are for the generator only.
GeneratorGradient generator_adv_loss(const CriticParams& c, const GeneratorParams& g,
                                     std::span<const Vector> sem, std::span<const Vector> noise);

/// Cross-entropy of seen labels under the frozen head (background + seen rows).
GeneratorGradient lcs_loss(const GeneratorParams& g, const ClassifierHead& head,
                           std::span<const Vector> sem, std::span<const int> labels,
                           std::span<const Vector> noise);

/// Cross-entropy of unseen labels under the frozen semantic classifier with
/// the unseen semantics attached.
GeneratorGradient lcu_loss(const GeneratorParams& g, const SemanticClassifier& unseen_classifier,
                           std::span<const Vector> sem, std::span<const int> labels,
                           std::span<const Vector> noise);

/// mean ||G(w, z1) - G(w, z2)||_1 / ||z1 - z2||_1. Throws DegenerateInput
/// when a noise pair is closer than 1e-9 in L1.
GeneratorGradient diversity_loss(const GeneratorParams& g, std::span<const Vector> sem,
                                 std::span<const Vector> noise_a, std::span<const Vector> noise_b);

// Terms that were not evaluated are passed as nullptr and contribute 0.
struct GeneratorTerms {
  const GeneratorGradient* adv = nullptr;
  const GeneratorGradient* lcs = nullptr;
  const GeneratorGradient* lcu = nullptr;
  const GeneratorGradient* div = nullptr;
};

bool lcu_active(const LossWeights& weights, int epoch);

/// a1*adv + a2*lcs + a3*lcu*[epoch >= warmup] -/+ a4*div.
GeneratorGradient generator_total_loss(const GeneratorTerms& terms, const LossWeights& weights,
                                       int epoch, DiversitySign sign = DiversitySign::Maximize);

// Telemetry for one generator step. lcu is 0 while the term is inactive.
struct LossReport {
  std::int64_t step = 0;
  double wgan = 0.0;
  double penalty = 0.0;
  double adv = 0.0;
  double lcs = 0.0;
  double lcu = 0.0;
  double div = 0.0;
  double gen_total = 0.0;
  double critic_total = 0.0;
};

// `step wgan penalty lcs lcu div gen_total critic_total`, tab-separated, newline-terminated.
std::string format_log_row(const LossReport& report);

}  // namespace zsdgen
