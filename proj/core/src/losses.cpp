#include "zsdgen/losses.hpp"

#include <cmath>
#include <cstdio>

#include "zsdgen/errors.hpp"

namespace zsdgen {

namespace {

constexpr double kNormSmoothing = 1e-12;
constexpr double kMinNoiseDistance = 1e-9;

GeneratorParams zeros_like(const GeneratorParams& g) {
  return GeneratorParams::zeros(g.sem_dim, g.feat_dim, g.hidden, g.slope);
}

CriticParams zeros_like(const CriticParams& c) {
  return CriticParams::zeros(c.feat_dim, c.sem_dim, c.hidden, c.slope);
}

void add_scaled(GeneratorParams& into, const GeneratorParams& from, double scale) {
  auto dst = into.tensors();
  const auto src = from.tensors();
  for (std::size_t b = 0; b < dst.size(); ++b) axpy(scale, src[b], dst[b]);
}

void check_batch(std::size_t n, std::size_t other, const char* what) {
  if (n == 0) throw ContractError(std::string(what) + ": empty batch");
  require(n == other, std::string(what) + ": batches are not aligned");
}

}  // namespace

void LossWeights::validate() const {
  require(alpha1 >= 0.0 && alpha2 >= 0.0 && alpha3 >= 0.0 && alpha4 >= 0.0,
          "LossWeights: alphas must be non-negative");
  require(lambda >= 0.0, "LossWeights: lambda must be non-negative");
  require(warmup_epochs >= 0, "LossWeights: warmup_epochs must be non-negative");
}

std::vector<double> draw_mix_coefficients(RandomStream& stream, std::size_t n, PenaltyMix mix) {
  std::vector<double> out(n);
  for (double& a : out) a = mix == PenaltyMix::Uniform ? stream.uniform() : stream.gaussian();
  return out;
}

CriticGradient gradient_penalty(const CriticParams& c, std::span<const Vector> real,
                                std::span<const Vector> fake, std::span<const Vector> sem,
                                double lambda, std::span<const double> mix) {
  check_batch(real.size(), fake.size(), "gradient_penalty");
  require(sem.size() == real.size() && mix.size() == real.size(),
          "gradient_penalty: batches are not aligned");
  require(lambda >= 0.0, "gradient_penalty: lambda must be non-negative");

  CriticGradient out{0.0, zeros_like(c)};
  const double scale = lambda / static_cast<double>(real.size());
  const std::size_t fd = c.feat_dim;
  Vector mixed(fd);
  Vector gate(c.hidden);
  Vector slopes(c.hidden);

  for (std::size_t i = 0; i < real.size(); ++i) {
    require(real[i].size() == fd && fake[i].size() == fd,
            "gradient_penalty: feature dimension mismatch");
    const double a = mix[i];
    for (std::size_t k = 0; k < fd; ++k) mixed[k] = a * real[i][k] + (1.0 - a) * fake[i][k];

    const CriticTrace t = critic_trace(c, mixed, sem[i]);
    for (std::size_t j = 0; j < c.hidden; ++j) {
      slopes[j] = leaky_relu_slope(t.hidden_pre[j], c.slope);
      gate[j] = c.w2[j] * slopes[j];
    }
    // gamma = grad_f D at the mixed point
    Vector gamma(fd, 0.0);
    for (std::size_t j = 0; j < c.hidden; ++j) axpy(gate[j], c.w1.row(j).first(fd), gamma);
    const double norm = std::sqrt(dot(gamma, gamma) + kNormSmoothing);
    out.value += scale * (norm - 1.0) * (norm - 1.0);

    // d(term)/d(gamma); the activation slopes are piecewise constant.
    const double coeff = scale * 2.0 * (norm - 1.0) / norm;
    Vector e(fd);
    for (std::size_t k = 0; k < fd; ++k) e[k] = coeff * gamma[k];
    for (std::size_t j = 0; j < c.hidden; ++j) {
      auto w_row = c.w1.row(j).first(fd);
      auto g_row = out.grad.w1.row(j).first(fd);
      axpy(gate[j], e, g_row);
      out.grad.w2[j] += slopes[j] * dot(w_row, e);
    }
  }
  return out;
}

CriticLoss critic_loss(const CriticParams& c, std::span<const Vector> real,
                       std::span<const Vector> fake, std::span<const Vector> sem, double lambda,
                       std::span<const double> mix) {
  check_batch(real.size(), fake.size(), "critic_loss");
  require(sem.size() == real.size(), "critic_loss: batches are not aligned");

  CriticGradient gp = gradient_penalty(c, real, fake, sem, lambda, mix);
  CriticLoss out;
  out.grad = std::move(gp.grad);
  out.penalty = gp.value;

  const double inv = 1.0 / static_cast<double>(real.size());
  double mean_real = 0.0;
  double mean_fake = 0.0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const CriticTrace tr = critic_trace(c, real[i], sem[i]);
    mean_real += inv * tr.score;
    critic_backward(c, tr, -inv, out.grad);
    const CriticTrace tf = critic_trace(c, fake[i], sem[i]);
    mean_fake += inv * tf.score;
    critic_backward(c, tf, inv, out.grad);
  }
  out.wgan = mean_real - mean_fake;
  out.value = -out.wgan + out.penalty;
  return out;
}

GeneratorGradient generator_adv_loss(const CriticParams& c, const GeneratorParams& g,
                                     std::span<const Vector> sem, std::span<const Vector> noise) {
  check_batch(sem.size(), noise.size(), "generator_adv_loss");
  require(c.feat_dim == g.feat_dim && c.sem_dim == g.sem_dim,
          "generator_adv_loss: critic and generator dimensions differ");
  GeneratorGradient out{0.0, zeros_like(g)};
  const double inv = 1.0 / static_cast<double>(sem.size());
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const GeneratorTrace gt = generator_trace(g, sem[i], noise[i]);
    out.value -= inv * critic_forward(c, gt.out, sem[i]);
    Vector grad_f = critic_input_grad(c, gt.out, sem[i]);
    for (double& v : grad_f) v *= -inv;
    generator_backward(g, gt, grad_f, out.grad);
  }
  return out;
}

GeneratorGradient lcs_loss(const GeneratorParams& g, const ClassifierHead& head,
                           std::span<const Vector> sem, std::span<const int> labels,
                           std::span<const Vector> noise) {
  check_batch(sem.size(), noise.size(), "lcs_loss");
  require(labels.size() == sem.size(), "lcs_loss: batches are not aligned");
  require(head.feat_dim == g.feat_dim, "lcs_loss: head and generator dimensions differ");
  const std::vector<std::size_t> rows = head.rows(RowSet::SeenAndBackground);
  GeneratorGradient out{0.0, zeros_like(g)};
  const double inv = 1.0 / static_cast<double>(sem.size());
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const std::size_t target = head.row_of(labels[i]);
    require(target >= 1 && target <= head.num_seen,
            "lcs_loss: label " + std::to_string(labels[i]) + " is not a seen class");
    const GeneratorTrace gt = generator_trace(g, sem[i], noise[i]);
    const Vector probs = classifier_forward(head, gt.out, rows);
    // rows are 0..S so the active position equals the row index
    out.value -= inv * std::log(probs[target]);
    Vector grad_f(g.feat_dim, 0.0);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const double dlogit = inv * (probs[a] - (a == target ? 1.0 : 0.0));
      axpy(dlogit, head.weight.row(rows[a]), grad_f);
    }
    generator_backward(g, gt, grad_f, out.grad);
  }
  return out;
}

GeneratorGradient lcu_loss(const GeneratorParams& g, const SemanticClassifier& unseen_classifier,
                           std::span<const Vector> sem, std::span<const int> labels,
                           std::span<const Vector> noise) {
  check_batch(sem.size(), noise.size(), "lcu_loss");
  require(labels.size() == sem.size(), "lcu_loss: batches are not aligned");
  const SemanticClassifier& sc = unseen_classifier;
  require(sc.feat_dim() == g.feat_dim, "lcu_loss: classifier and generator dimensions differ");
  GeneratorGradient out{0.0, zeros_like(g)};
  const double inv = 1.0 / static_cast<double>(sem.size());
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const std::size_t target = sc.column_of(labels[i]);
    const GeneratorTrace gt = generator_trace(g, sem[i], noise[i]);
    const Vector probs = semantic_classifier_forward(sc, gt.out);
    out.value -= inv * std::log(probs[target]);
    Vector dlogits(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
      dlogits[k] = inv * (probs[k] - (k == target ? 1.0 : 0.0));
    }
    const Vector d_embed = matvec(sc.semantics, dlogits);
    const Vector grad_f = matvec_t(sc.w_fc, d_embed);
    generator_backward(g, gt, grad_f, out.grad);
  }
  return out;
}

GeneratorGradient diversity_loss(const GeneratorParams& g, std::span<const Vector> sem,
                                 std::span<const Vector> noise_a, std::span<const Vector> noise_b) {
  check_batch(sem.size(), noise_a.size(), "diversity_loss");
  require(noise_b.size() == sem.size(), "diversity_loss: batches are not aligned");
  GeneratorGradient out{0.0, zeros_like(g)};
  const double inv = 1.0 / static_cast<double>(sem.size());
  for (std::size_t i = 0; i < sem.size(); ++i) {
    require(noise_a[i].size() == noise_b[i].size(), "diversity_loss: noise dimension mismatch");
    double noise_dist = 0.0;
    for (std::size_t k = 0; k < noise_a[i].size(); ++k) noise_dist += std::abs(noise_a[i][k] - noise_b[i][k]);
    if (!(noise_dist > kMinNoiseDistance)) {
      throw DegenerateInput("diversity_loss: coincident noise pair");
    }
    const GeneratorTrace ta = generator_trace(g, sem[i], noise_a[i]);
    const GeneratorTrace tb = generator_trace(g, sem[i], noise_b[i]);
    double out_dist = 0.0;
    Vector grad_a(g.feat_dim);
    Vector grad_b(g.feat_dim);
    for (std::size_t k = 0; k < g.feat_dim; ++k) {
      const double d = ta.out[k] - tb.out[k];
      out_dist += std::abs(d);
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      grad_a[k] = inv * sign / noise_dist;
      grad_b[k] = -grad_a[k];
    }
    out.value += inv * out_dist / noise_dist;
    generator_backward(g, ta, grad_a, out.grad);
    generator_backward(g, tb, grad_b, out.grad);
  }
  return out;
}

bool lcu_active(const LossWeights& weights, int epoch) { return epoch >= weights.warmup_epochs; }

GeneratorGradient generator_total_loss(const GeneratorTerms& terms, const LossWeights& weights,
                                       int epoch, DiversitySign sign) {
  weights.validate();
  require(epoch >= 0, "generator_total_loss: epoch must be non-negative");
  const GeneratorGradient* any = terms.adv ? terms.adv
                                 : terms.lcs ? terms.lcs
                                 : terms.lcu ? terms.lcu
                                             : terms.div;
  require(any != nullptr, "generator_total_loss: no terms supplied");

  GeneratorGradient out{0.0, zeros_like(any->grad)};
  auto add = [&](const GeneratorGradient* term, double coeff) {
    if (term == nullptr || coeff == 0.0) return;
    out.value += coeff * term->value;
    add_scaled(out.grad, term->grad, coeff);
  };
  add(terms.adv, weights.alpha1);
  add(terms.lcs, weights.alpha2);
  add(terms.lcu, lcu_active(weights, epoch) ? weights.alpha3 : 0.0);
  add(terms.div, sign == DiversitySign::Maximize ? -weights.alpha4 : weights.alpha4);
  return out;
}

std::string format_log_row(const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                static_cast<long long>(r.step), r.wgan, r.penalty, r.lcs, r.lcu, r.div,
                r.gen_total, r.critic_total);
  return buf;
}

}  // namespace zsdgen
