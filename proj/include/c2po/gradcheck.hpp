#pragma once

// Finite-difference verification of every analytic gradient in the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "c2po/core.hpp"
#include "c2po/losses.hpp"
#include "c2po/policy.hpp"
#include "c2po/rng.hpp"
#include "c2po/triple.hpp"

namespace c2po {

struct GradCheckOptions {
  std::size_t instances = 100;
  double step = 1e-5;         // central difference half-width
  double tolerance = 1e-5;    // componentwise relative error
  // relative error = |a - n| / max(|a|, |n|, floor * max(1, |f|)); the floor
  // tracks the magnitude of the differentiated value f, which sets the
  // rounding noise of the difference quotient.
  double denom_floor = 1e-4;
  std::uint64_t seed = 2024;
};

struct GradCheckRow {
  std::string check;
  std::string policy;
  std::size_t instances = 0;
  std::size_t skipped = 0;
  std::size_t components = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Analytic d loss / d delta_s against central differences of loss_c2po over the
// fixed grid; absolute error, one-sided at the linear hinge's kink.
inline GradCheckRow check_margin_gradient_identity(HingeVariant variant = HingeVariant::SquaredHinge) {
  GradCheckRow row;
  row.check = std::string("grad_margin/") + to_string(variant);
  row.policy = "-";
  row.tolerance = 1e-8;
  for (double delta : {0.5, 1.0, 2.0}) {
    for (double lam : {0.0, 0.5, 0.7, 1.0}) {
      LossConfig cfg;
      cfg.lambda_balance = lam;
      cfg.delta_margin = delta;
      cfg.hinge_variant = variant;
      for (double ds : {-5.0, -2.0, -0.5, 0.0, 0.5, delta - 1e-6, delta, delta + 1.0, 10.0}) {
        auto f = [&](double x) { return loss_c2po(x, cfg).total; };
        double numeric;
        if (ds == delta) {
          const double h = 1e-8;
          numeric = variant == HingeVariant::LinearHinge ? (f(ds + h) - f(ds)) / h : (f(ds + h) - f(ds - h)) / (2 * h);
        } else {
          const double h = std::min(1e-6, std::abs(ds - delta) / 2);
          numeric = (f(ds + h) - f(ds - h)) / (2 * h);
        }
        row.max_error = std::max(row.max_error, std::abs(grad_margin(ds, cfg) - numeric));
        ++row.components;
      }
      ++row.instances;
    }
  }
  row.pass = row.max_error < row.tolerance;
  return row;
}

namespace detail {

inline Policy random_policy(PolicyKind kind, const Vocab& vocab, Rng& rng, std::size_t hidden) {
  Policy p = init_policy(kind, vocab, rng.next_u64(), hidden);
  const double scale = kind == PolicyKind::BigramWithPromptFeatures ? 1.0 : 0.5;
  for (double& w : p.params) w += scale * rng.normal();
  return p;
}

inline Sequence random_sequence(std::size_t V, std::size_t len, Rng& rng) {
  Sequence s(len);
  for (auto& x : s) x = static_cast<TokenId>(rng.below(V));
  return s;
}

inline Triple random_triple(std::size_t V, Rng& rng, const std::string& group, std::size_t index) {
  Triple t;
  t.id = "t" + std::to_string(index);
  t.prompt = random_sequence(V, rng.below(5), rng);
  t.chosen = random_sequence(V, 1 + rng.below(4), rng);
  do t.rejected = random_sequence(V, 1 + rng.below(4), rng);
  while (t.rejected == t.chosen);
  t.shortcut_tag = "z";
  t.group = group;
  return t;
}

}  // namespace detail

// Objective x policy family parameter-gradient check on random instances.
inline GradCheckRow check_objective_gradient(Objective objective, HingeVariant variant, PolicyKind kind,
                                             const GradCheckOptions& opt) {
  GradCheckRow row;
  row.check = objective == Objective::C2PO ? std::string("c2po/") + to_string(variant) : to_string(objective);
  row.policy = to_string(kind);
  row.tolerance = opt.tolerance;
  Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(objective) * 4 + static_cast<std::uint64_t>(variant) * 2 +
                                    static_cast<std::uint64_t>(kind)));
  const Vocab vocab({"a", "b", "c", "d", "e", "f"});
  // Draws on a non-differentiable point are replaced, so `instances` are all checked.
  while (row.instances < opt.instances && row.skipped < 10 * opt.instances + 10) {
    ObjectiveSettings s;
    s.objective = objective;
    s.loss.score.beta = rng.uniform(0.05, 3.0);
    s.loss.score.length_alpha = rng.uniform(0.0, 1.5);
    s.loss.lambda_balance = rng.uniform();
    s.loss.delta_margin = rng.uniform(0.05, 2.0);
    s.loss.gamma_offset = rng.uniform(-1.0, 1.0);
    s.loss.hinge_variant = variant;
    s.baseline.kind = objective == Objective::C2PO ? Objective::DPO : objective;
    s.baseline.beta = rng.uniform(0.05, 2.0);
    s.baseline.tau = rng.uniform(0.2, 2.0);
    s.baseline.cpo_lambda = rng.uniform(0.0, 2.0);
    s.baseline.bco_delta = rng.uniform(-1.0, 1.0);
    s.baseline.fr_alpha = rng.uniform(0.0, 2.0);

    const Policy policy = detail::random_policy(kind, vocab, rng, 4);
    const Policy ref = detail::random_policy(kind, vocab, rng, 4);
    const std::size_t n = 2 + rng.below(3);
    std::vector<Triple> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(detail::random_triple(vocab.size(), rng, i % 2 ? "g1" : "g0", i));

    bool kink = false;
    if (objective == Objective::C2PO && variant == HingeVariant::LinearHinge)
      for (const auto& t : batch)
        kink |= std::abs(causal_margin(policy, t, s.loss.score, s.loss.delta_margin).delta_s - s.loss.delta_margin) <
                1e-4;
    if (objective == Objective::GRPO) {
      double m[2] = {0, 0}, c[2] = {0, 0};
      for (std::size_t i = 0; i < n; ++i) {
        m[i % 2] += num::softplus(-dpo_margin(pair_log_probs(policy, &ref, batch[i]), s.baseline.beta));
        c[i % 2] += 1;
      }
      kink = std::abs(m[0] / c[0] - m[1] / c[1]) < 1e-4;
    }
    if (kink) {
      ++row.skipped;
      continue;
    }

    GradientVector analytic;
    const double floor = opt.denom_floor * std::max(1.0, std::abs(objective_loss(s, policy, &ref, batch, &analytic)));
    Policy probe = policy;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
      const double w = probe.params[i];
      probe.params[i] = w + opt.step;
      const double up = objective_loss(s, probe, &ref, batch);
      probe.params[i] = w - opt.step;
      const double down = objective_loss(s, probe, &ref, batch);
      probe.params[i] = w;
      const double numeric = (up - down) / (2 * opt.step);
      row.max_error = std::max(row.max_error, relative_error(analytic[i], numeric, floor));
      ++row.components;
    }
    ++row.instances;
  }
  row.pass = row.instances > 0 && row.max_error < row.tolerance;
  return row;
}

// grad_log_prob itself, on random policies and sequences.
inline GradCheckRow check_log_prob_gradient(PolicyKind kind, const GradCheckOptions& opt) {
  GradCheckRow row;
  row.check = "grad_log_prob";
  row.policy = to_string(kind);
  row.tolerance = opt.tolerance;
  Rng rng(derive_seed(opt.seed, 1000 + static_cast<std::uint64_t>(kind)));
  const Vocab vocab({"a", "b", "c", "d", "e", "f"});
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    Policy p = detail::random_policy(kind, vocab, rng, 4);
    const auto prompt = detail::random_sequence(vocab.size(), rng.below(5), rng);
    const auto resp = detail::random_sequence(vocab.size(), 1 + rng.below(4), rng);
    const auto analytic = grad_log_prob(p, prompt, resp);
    const double floor = opt.denom_floor * std::max(1.0, std::abs(sequence_log_prob(p, prompt, resp)));
    for (std::size_t i = 0; i < p.params.size(); ++i) {
      const double w = p.params[i];
      p.params[i] = w + opt.step;
      const double up = sequence_log_prob(p, prompt, resp);
      p.params[i] = w - opt.step;
      const double down = sequence_log_prob(p, prompt, resp);
      p.params[i] = w;
      row.max_error = std::max(row.max_error, relative_error(analytic[i], (up - down) / (2 * opt.step), floor));
      ++row.components;
    }
    ++row.instances;
  }
  row.pass = row.max_error < row.tolerance;
  return row;
}

inline std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckOptions& opt = {}) {
  std::vector<GradCheckRow> rows;
  rows.push_back(check_margin_gradient_identity(HingeVariant::SquaredHinge));
  rows.push_back(check_margin_gradient_identity(HingeVariant::LinearHinge));
  for (auto kind : {PolicyKind::BigramWithPromptFeatures, PolicyKind::TwoLayerPerceptron}) {
    rows.push_back(check_log_prob_gradient(kind, opt));
    rows.push_back(check_objective_gradient(Objective::C2PO, HingeVariant::SquaredHinge, kind, opt));
    rows.push_back(check_objective_gradient(Objective::C2PO, HingeVariant::LinearHinge, kind, opt));
    for (auto o : kAllObjectives)
      if (o != Objective::C2PO) rows.push_back(check_objective_gradient(o, HingeVariant::SquaredHinge, kind, opt));
  }
  return rows;
}

inline const char* gradcheck_csv_header() { return "check,policy,instances,skipped,components,max_error,tolerance,status"; }

inline void write_gradcheck_csv(std::ostream& os, const std::vector<GradCheckRow>& rows) {
  os << gradcheck_csv_header() << '\n';
  for (const auto& r : rows)
    os << r.check << ',' << r.policy << ',' << r.instances << ',' << r.skipped << ',' << r.components << ','
       << format_double(r.max_error) << ',' << format_double(r.tolerance) << ',' << (r.pass ? "pass" : "fail") << '\n';
}

}  // namespace c2po
