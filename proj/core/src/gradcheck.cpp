#include "zsdgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "zsdgen/errors.hpp"
#include "zsdgen/losses.hpp"
#include "zsdgen/models.hpp"

namespace zsdgen {

namespace {

template <class Model>
Vector flatten(const Model& m) {
  Vector out;
  for (const auto& block : m.tensors()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

template <class Model>
Model unflatten(Model m, std::span<const double> flat) {
  std::size_t offset = 0;
  for (auto block : m.tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  }
  return m;
}

bool clear_of_kinks(std::span<const double> pre, double margin) {
  return std::all_of(pre.begin(), pre.end(), [&](double v) { return std::abs(v) > margin; });
}

struct Setup {
  SemanticTable table;
  GeneratorParams gen;
  CriticParams critic;
  ClassifierHead head;
  SemanticClassifier unseen_sc;
  std::vector<Vector> sem_seen;
  std::vector<int> seen_labels;
  std::vector<Vector> sem_unseen;
  std::vector<int> unseen_labels;
  std::vector<Vector> noise;
  std::vector<Vector> noise_b;
  std::vector<Vector> real;
  std::vector<Vector> fake;
  std::vector<double> mix;
};

Setup random_setup(const GradCheckOptions& o, RandomStream& rs) {
  Setup s;
  std::vector<ClassEntry> seen;
  std::vector<ClassEntry> unseen;
  int id = 1;
  for (std::size_t i = 0; i < o.num_seen; ++i, ++id) {
    seen.push_back({id, "s" + std::to_string(id), sample_gaussian(rs, o.sem_dim)});
  }
  for (std::size_t i = 0; i < o.num_unseen; ++i, ++id) {
    unseen.push_back({id, "u" + std::to_string(id), sample_gaussian(rs, o.sem_dim)});
  }
  s.table = SemanticTable(o.sem_dim, seen, unseen);

  s.gen = GeneratorParams::init(o.sem_dim, o.feat_dim, o.hidden, kDefaultSlope, rs);
  for (double& b : s.gen.b1) b = 0.5 * rs.gaussian();
  for (double& b : s.gen.b2) b = 0.3 + 0.5 * rs.gaussian();
  s.critic = CriticParams::init(o.feat_dim, o.sem_dim, o.hidden, kDefaultSlope, rs);
  for (double& b : s.critic.b1) b = 0.5 * rs.gaussian();
  s.critic.b2 = rs.gaussian();

  s.head = ClassifierHead::create(s.table, o.feat_dim, rs);
  for (double& b : s.head.bias) b = rs.gaussian();
  s.unseen_sc = SemanticClassifier::init(o.sem_dim, o.feat_dim, rs).attach_unseen(s.table);
  for (double& b : s.unseen_sc.b_fc) b = rs.gaussian();

  for (std::size_t i = 0; i < o.batch; ++i) {
    const auto& sc = s.table.seen()[rs.index(o.num_seen)];
    s.sem_seen.push_back(sc.vec);
    s.seen_labels.push_back(sc.id);
    const auto& uc = s.table.unseen()[rs.index(o.num_unseen)];
    s.sem_unseen.push_back(uc.vec);
    s.unseen_labels.push_back(uc.id);
    s.noise.push_back(sample_gaussian(rs, o.sem_dim));
    s.noise_b.push_back(sample_gaussian(rs, o.sem_dim));
    Vector r(o.feat_dim);
    for (double& v : r) v = std::abs(rs.gaussian());
    s.real.push_back(std::move(r));
    s.fake.push_back(generator_forward(s.gen, s.sem_seen.back(), s.noise.back()));
    s.mix.push_back(rs.uniform());
  }
  return s;
}

bool generator_clear(const GeneratorParams& g, std::span<const Vector> sem,
                     std::span<const Vector> noise, double margin) {
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const GeneratorTrace t = generator_trace(g, sem[i], noise[i]);
    if (!clear_of_kinks(t.hidden_pre, margin) || !clear_of_kinks(t.out_pre, margin)) return false;
  }
  return true;
}

bool critic_clear(const CriticParams& c, std::span<const double> f, std::span<const double> w,
                  double margin) {
  return clear_of_kinks(critic_trace(c, f, w).hidden_pre, margin);
}

bool penalty_clear(const Setup& s, double margin) {
  for (std::size_t i = 0; i < s.real.size(); ++i) {
    Vector mixed(s.real[i].size());
    for (std::size_t k = 0; k < mixed.size(); ++k) {
      mixed[k] = s.mix[i] * s.real[i][k] + (1.0 - s.mix[i]) * s.fake[i][k];
    }
    if (!critic_clear(s.critic, mixed, s.sem_seen[i], margin)) return false;
  }
  return true;
}

bool diversity_clear(const Setup& s, double margin) {
  if (!generator_clear(s.gen, s.sem_seen, s.noise, margin) ||
      !generator_clear(s.gen, s.sem_seen, s.noise_b, margin)) {
    return false;
  }
  for (std::size_t i = 0; i < s.sem_seen.size(); ++i) {
    const Vector a = generator_forward(s.gen, s.sem_seen[i], s.noise[i]);
    const Vector b = generator_forward(s.gen, s.sem_seen[i], s.noise_b[i]);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      // both rectified to zero is smooth (locally constant); otherwise stay off |d| = 0
      if (d != 0.0 && std::abs(d) <= margin) return false;
    }
  }
  return true;
}

struct Check {
  std::string name;
  // Returns false when the sampled point sits too close to a kink.
  std::function<bool(const Setup&)> admissible;
  std::function<Vector(const Setup&)> analytic;
  std::function<Vector(const Setup&)> point;
  std::function<double(const Setup&, std::span<const double>)> evaluate;
};

std::vector<Check> build_checks(double margin) {
  std::vector<Check> checks;

  checks.push_back({
      "generator_forward/params",
      [margin](const Setup& s) { return generator_clear(s.gen, s.sem_seen, s.noise, margin); },
      [](const Setup& s) {
        GeneratorParams grad = GeneratorParams::zeros(s.gen.sem_dim, s.gen.feat_dim, s.gen.hidden, s.gen.slope);
        const GeneratorTrace t = generator_trace(s.gen, s.sem_seen[0], s.noise[0]);
        generator_backward(s.gen, t, s.real[0], grad);
        return flatten(grad);
      },
      [](const Setup& s) { return flatten(s.gen); },
      [](const Setup& s, std::span<const double> x) {
        return dot(generator_forward(unflatten(s.gen, x), s.sem_seen[0], s.noise[0]), s.real[0]);
      },
  });

  checks.push_back({
      "critic_forward/params",
      [margin](const Setup& s) { return critic_clear(s.critic, s.real[0], s.sem_seen[0], margin); },
      [](const Setup& s) {
        CriticParams grad = CriticParams::zeros(s.critic.feat_dim, s.critic.sem_dim, s.critic.hidden, s.critic.slope);
        critic_backward(s.critic, critic_trace(s.critic, s.real[0], s.sem_seen[0]), 1.0, grad);
        return flatten(grad);
      },
      [](const Setup& s) { return flatten(s.critic); },
      [](const Setup& s, std::span<const double> x) {
        return critic_forward(unflatten(s.critic, x), s.real[0], s.sem_seen[0]);
      },
  });

  checks.push_back({
      "critic_input_grad",
      [margin](const Setup& s) { return critic_clear(s.critic, s.real[0], s.sem_seen[0], margin); },
      [](const Setup& s) { return critic_input_grad(s.critic, s.real[0], s.sem_seen[0]); },
      [](const Setup& s) { return s.real[0]; },
      [](const Setup& s, std::span<const double> x) { return critic_forward(s.critic, x, s.sem_seen[0]); },
  });

  checks.push_back({
      "gradient_penalty/params",
      [margin](const Setup& s) { return penalty_clear(s, margin); },
      [](const Setup& s) {
        return flatten(gradient_penalty(s.critic, s.real, s.fake, s.sem_seen, 10.0, s.mix).grad);
      },
      [](const Setup& s) { return flatten(s.critic); },
      [](const Setup& s, std::span<const double> x) {
        return gradient_penalty(unflatten(s.critic, x), s.real, s.fake, s.sem_seen, 10.0, s.mix).value;
      },
  });

  checks.push_back({
      "critic_loss/params",
      [margin](const Setup& s) {
        if (!penalty_clear(s, margin)) return false;
        for (std::size_t i = 0; i < s.real.size(); ++i) {
          if (!critic_clear(s.critic, s.real[i], s.sem_seen[i], margin) ||
              !critic_clear(s.critic, s.fake[i], s.sem_seen[i], margin)) {
            return false;
          }
        }
        return true;
      },
      [](const Setup& s) {
        return flatten(critic_loss(s.critic, s.real, s.fake, s.sem_seen, 10.0, s.mix).grad);
      },
      [](const Setup& s) { return flatten(s.critic); },
      [](const Setup& s, std::span<const double> x) {
        return critic_loss(unflatten(s.critic, x), s.real, s.fake, s.sem_seen, 10.0, s.mix).value;
      },
  });

  checks.push_back({
      "generator_adv_loss/params",
      [margin](const Setup& s) {
        if (!generator_clear(s.gen, s.sem_seen, s.noise, margin)) return false;
        for (std::size_t i = 0; i < s.sem_seen.size(); ++i) {
          const Vector f = generator_forward(s.gen, s.sem_seen[i], s.noise[i]);
          if (!critic_clear(s.critic, f, s.sem_seen[i], margin)) return false;
        }
        return true;
      },
      [](const Setup& s) { return flatten(generator_adv_loss(s.critic, s.gen, s.sem_seen, s.noise).grad); },
      [](const Setup& s) { return flatten(s.gen); },
      [](const Setup& s, std::span<const double> x) {
        return generator_adv_loss(s.critic, unflatten(s.gen, x), s.sem_seen, s.noise).value;
      },
  });

  checks.push_back({
      "lcs_loss/params",
      [margin](const Setup& s) { return generator_clear(s.gen, s.sem_seen, s.noise, margin); },
      [](const Setup& s) {
        return flatten(lcs_loss(s.gen, s.head, s.sem_seen, s.seen_labels, s.noise).grad);
      },
      [](const Setup& s) { return flatten(s.gen); },
      [](const Setup& s, std::span<const double> x) {
        return lcs_loss(unflatten(s.gen, x), s.head, s.sem_seen, s.seen_labels, s.noise).value;
      },
  });

  checks.push_back({
      "lcu_loss/params",
      [margin](const Setup& s) { return generator_clear(s.gen, s.sem_unseen, s.noise, margin); },
      [](const Setup& s) {
        return flatten(lcu_loss(s.gen, s.unseen_sc, s.sem_unseen, s.unseen_labels, s.noise).grad);
      },
      [](const Setup& s) { return flatten(s.gen); },
      [](const Setup& s, std::span<const double> x) {
        return lcu_loss(unflatten(s.gen, x), s.unseen_sc, s.sem_unseen, s.unseen_labels, s.noise).value;
      },
  });

  checks.push_back({
      "diversity_loss/params",
      [margin](const Setup& s) { return diversity_clear(s, margin); },
      [](const Setup& s) {
        return flatten(diversity_loss(s.gen, s.sem_seen, s.noise, s.noise_b).grad);
      },
      [](const Setup& s) { return flatten(s.gen); },
      [](const Setup& s, std::span<const double> x) {
        return diversity_loss(unflatten(s.gen, x), s.sem_seen, s.noise, s.noise_b).value;
      },
  });

  return checks;
}

}  // namespace

bool GradCheckReport::passed() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.passed; });
}

GradCheckReport run_gradient_suite(const GradCheckOptions& options) {
  require(options.points > 0, "run_gradient_suite: need at least one point");
  GradCheckReport report;
  RandomStream root(options.seed);
  const std::size_t max_attempts = options.points * 200;

  std::uint64_t tag = 0;
  for (const Check& check : build_checks(options.kink_margin)) {
    RandomStream rs = root.derive(++tag);
    GradCheckEntry entry;
    entry.name = check.name;
    std::size_t attempts = 0;
    while (entry.points < options.points && attempts < max_attempts) {
      ++attempts;
      const Setup s = random_setup(options, rs);
      if (!check.admissible(s)) {
        ++entry.rejected;
        continue;
      }
      const Vector analytic = check.analytic(s);
      const Vector numeric = finite_diff_grad(
          [&](std::span<const double> x) { return check.evaluate(s, x); }, check.point(s), options.step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic, numeric));
      ++entry.points;
    }
    entry.passed = entry.points == options.points && entry.max_rel_error < options.tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace zsdgen
