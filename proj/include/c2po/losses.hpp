#pragma once

// C2PO soft/hard contrast losses, their margin gradient, and the baseline
// preference objectives (DPO, IPO, CPO, BCO, worst-group DPO, fairness-
// regularized DPO). Batch losses are arithmetic means over the batch.
//
// Every objective here is a function of the summed log-probabilities of the
// chosen and rejected responses, so the parameter gradient of a batch is
//   sum_i  c_w[i] * grad sum log pi(y_w,i)  +  c_l[i] * grad sum log pi(y_l,i)
// and each objective only has to supply the scalar coefficients.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2po/core.hpp"
#include "c2po/kv.hpp"
#include "c2po/policy.hpp"
#include "c2po/scoring.hpp"
#include "c2po/triple.hpp"

namespace c2po {

enum class HingeVariant { SquaredHinge, LinearHinge };

inline const char* to_string(HingeVariant h) { return h == HingeVariant::SquaredHinge ? "squared" : "linear"; }

inline HingeVariant hinge_variant_from_string(const std::string& s) {
  if (s == "squared" || s == "SquaredHinge") return HingeVariant::SquaredHinge;
  if (s == "linear" || s == "LinearHinge") return HingeVariant::LinearHinge;
  throw ConfigError("unknown hinge variant '" + s + "' (expected squared or linear)");
}

enum class Objective { C2PO, DPO, IPO, CPO, BCO, GRPO, FR };

inline constexpr Objective kAllObjectives[] = {Objective::C2PO, Objective::DPO, Objective::IPO, Objective::CPO,
                                               Objective::BCO,  Objective::GRPO, Objective::FR};

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::C2PO: return "c2po";
    case Objective::DPO: return "dpo";
    case Objective::IPO: return "ipo";
    case Objective::CPO: return "cpo";
    case Objective::BCO: return "bco";
    case Objective::GRPO: return "grpo";
    case Objective::FR: return "fr";
  }
  return "?";
}

inline Objective objective_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto o : kAllObjectives)
    if (s == to_string(o)) return o;
  throw ConfigError("unknown objective '" + s + "' (expected c2po, dpo, ipo, cpo, bco, grpo or fr)");
}

inline bool needs_reference(Objective o) { return o != Objective::C2PO && o != Objective::CPO; }

struct LossConfig {
  ScoreConfig score;
  double lambda_balance = 0.7;
  double delta_margin = 1.0;
  double gamma_offset = 0.0;
  HingeVariant hinge_variant = HingeVariant::SquaredHinge;

  void check(Violations& v, const std::string& section = "loss") const {
    score.check(v, section);
    if (!(lambda_balance >= 0.0 && lambda_balance <= 1.0)) v.add(section + ".lambda_balance must lie in [0, 1]");
    if (!(delta_margin > 0.0) || !std::isfinite(delta_margin)) v.add(section + ".delta_margin must be > 0");
    if (!std::isfinite(gamma_offset)) v.add(section + ".gamma_offset must be finite");
  }
  void validate() const {
    Violations v;
    check(v);
    v.raise_if_any();
  }
};

struct BaselineConfig {
  Objective kind = Objective::DPO;
  double beta = 0.1;
  double tau = 0.5;
  double cpo_lambda = 1.0;
  double bco_delta = 0.0;
  double fr_alpha = 0.1;

  void check(Violations& v, const std::string& section = "baseline") const {
    if (kind == Objective::C2PO) v.add(section + ".kind must name a baseline, not c2po");
    if (!(beta > 0.0) || !std::isfinite(beta)) v.add(section + ".beta must be > 0");
    if (kind == Objective::IPO && (!(tau > 0.0) || !std::isfinite(tau))) v.add(section + ".tau must be > 0");
    if (kind == Objective::CPO && (!(cpo_lambda >= 0.0) || !std::isfinite(cpo_lambda)))
      v.add(section + ".cpo_lambda must be >= 0");
    if (kind == Objective::BCO && !std::isfinite(bco_delta)) v.add(section + ".bco_delta must be finite");
    if (kind == Objective::FR && (!(fr_alpha >= 0.0) || !std::isfinite(fr_alpha)))
      v.add(section + ".fr_alpha must be >= 0");
  }
  void validate() const {
    Violations v;
    check(v);
    v.raise_if_any();
  }
};

inline KeyValues to_kv(const LossConfig& c) {
  return {{"beta", format_double(c.score.beta)},
          {"length_alpha", format_double(c.score.length_alpha)},
          {"lambda_balance", format_double(c.lambda_balance)},
          {"delta_margin", format_double(c.delta_margin)},
          {"gamma_offset", format_double(c.gamma_offset)},
          {"hinge_variant", to_string(c.hinge_variant)}};
}

inline void read_kv(KvReader& r, LossConfig& c) {
  r.read("beta", c.score.beta);
  r.read("length_alpha", c.score.length_alpha);
  r.read("lambda_balance", c.lambda_balance);
  r.read("delta_margin", c.delta_margin);
  r.read("gamma_offset", c.gamma_offset);
  r.read_enum("hinge_variant", c.hinge_variant, hinge_variant_from_string);
}

inline LossConfig loss_config_from_kv(const KeyValues& kv) {
  Violations v;
  LossConfig c;
  KvReader r(kv, "loss", v);
  read_kv(r, c);
  r.finish();
  c.check(v);
  v.raise_if_any();
  return c;
}

inline KeyValues to_kv(const BaselineConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"beta", format_double(c.beta)},
          {"tau", format_double(c.tau)},
          {"cpo_lambda", format_double(c.cpo_lambda)},
          {"bco_delta", format_double(c.bco_delta)},
          {"fr_alpha", format_double(c.fr_alpha)}};
}

inline void read_kv(KvReader& r, BaselineConfig& c) {
  r.read_enum("kind", c.kind, objective_from_string);
  r.read("beta", c.beta);
  r.read("tau", c.tau);
  r.read("cpo_lambda", c.cpo_lambda);
  r.read("bco_delta", c.bco_delta);
  r.read("fr_alpha", c.fr_alpha);
}

inline BaselineConfig baseline_config_from_kv(const KeyValues& kv) {
  Violations v;
  BaselineConfig c;
  KvReader r(kv, "baseline", v);
  read_kv(r, c);
  r.finish();
  c.check(v);
  v.raise_if_any();
  return c;
}

struct LossValue {
  double total = 0.0;
  double align_term = 0.0;
  double suppress_term = 0.0;
};

// ---- C2PO scalar pieces -------------------------------------------------------

// -log sigma(delta_s - gamma)
inline double loss_align(double delta_s, double gamma) { return num::softplus(-(delta_s - gamma)); }

inline double loss_suppress(double delta_s, double delta, HingeVariant variant = HingeVariant::SquaredHinge) {
  if (!(delta > 0.0)) throw ConfigError("suppress margin delta must be > 0");
  const double gap = std::max(0.0, delta - delta_s);
  return variant == HingeVariant::SquaredHinge ? gap * gap : gap;
}

inline LossValue loss_c2po(double delta_s, const LossConfig& cfg) {
  LossValue v;
  v.align_term = loss_align(delta_s, cfg.gamma_offset);
  v.suppress_term = loss_suppress(delta_s, cfg.delta_margin, cfg.hinge_variant);
  v.total = cfg.lambda_balance * v.align_term + (1.0 - cfg.lambda_balance) * v.suppress_term;
  return v;
}

// Magnitude of the soft-contrast pull: lambda * sigma(-(delta_s - gamma)).
inline double soft_weight(double delta_s, const LossConfig& cfg) {
  return cfg.lambda_balance * num::sigmoid(-(delta_s - cfg.gamma_offset));
}

// Magnitude of the hard-contrast push; exactly zero once delta_s >= delta.
inline double hard_weight(double delta_s, const LossConfig& cfg) {
  if (!(delta_s < cfg.delta_margin)) return 0.0;
  const double w = 1.0 - cfg.lambda_balance;
  return cfg.hinge_variant == HingeVariant::SquaredHinge ? 2.0 * w * (cfg.delta_margin - delta_s) : w;
}

// d loss_c2po / d delta_s
inline double grad_margin(double delta_s, const LossConfig& cfg) {
  return -soft_weight(delta_s, cfg) - hard_weight(delta_s, cfg);
}

// ---- pair statistics -----------------------------------------------------------

// Summed log-probabilities of one triple under the policy and the reference.
struct PairLogProbs {
  double pol_w = 0.0;
  double pol_l = 0.0;
  double ref_w = 0.0;
  double ref_l = 0.0;
  std::size_t len_w = 0;
  std::size_t len_l = 0;
};

inline PairLogProbs pair_log_probs(const Policy& policy, const Policy* ref, const Triple& t) {
  PairLogProbs p;
  p.pol_w = sequence_log_prob(policy, t.prompt, t.chosen);
  p.pol_l = sequence_log_prob(policy, t.prompt, t.rejected);
  if (ref) {
    p.ref_w = sequence_log_prob(*ref, t.prompt, t.chosen);
    p.ref_l = sequence_log_prob(*ref, t.prompt, t.rejected);
  }
  p.len_w = t.chosen.size();
  p.len_l = t.rejected.size();
  return p;
}

// beta * [(log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l))]
inline double dpo_margin(const PairLogProbs& p, double beta) {
  return beta * ((p.pol_w - p.ref_w) - (p.pol_l - p.ref_l));
}

// Sigmoid weight on the DPO gradient; decays toward 0 as the margin grows.
inline double w_dpo_from_margin(double margin) { return num::sigmoid(-margin); }

// Loss value plus d loss / d(sum log pi(y_w,i)) and d loss / d(sum log pi(y_l,i)).
struct BatchTerms {
  double loss = 0.0;
  std::vector<double> coef_w;
  std::vector<double> coef_l;
};

struct ObjectiveSettings {
  Objective objective = Objective::C2PO;
  LossConfig loss;
  BaselineConfig baseline;
};

// Scalar core of every objective. `groups` is only consulted by GRPO.
inline BatchTerms objective_terms(const ObjectiveSettings& s, std::span<const PairLogProbs> pairs,
                                  std::span<const std::string> groups = {}) {
  const std::size_t n = pairs.size();
  if (n == 0) throw DomainError("objective evaluated on an empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchTerms out;
  out.coef_w.assign(n, 0.0);
  out.coef_l.assign(n, 0.0);
  std::vector<double> losses(n);
  const auto& b = s.baseline;

  switch (s.objective) {
    case Objective::C2PO: {
      for (std::size_t i = 0; i < n; ++i) {
        const double sw = s.loss.score.length_scale(pairs[i].len_w);
        const double sl = s.loss.score.length_scale(pairs[i].len_l);
        const double ds = sw * pairs[i].pol_w - sl * pairs[i].pol_l;
        losses[i] = loss_c2po(ds, s.loss).total;
        const double gm = grad_margin(ds, s.loss) * inv_n;
        out.coef_w[i] = gm * sw;
        out.coef_l[i] = -gm * sl;
      }
      break;
    }
    case Objective::DPO: {
      for (std::size_t i = 0; i < n; ++i) {
        const double h = dpo_margin(pairs[i], b.beta);
        losses[i] = num::softplus(-h);
        const double g = -w_dpo_from_margin(h) * b.beta * inv_n;
        out.coef_w[i] = g;
        out.coef_l[i] = -g;
      }
      break;
    }
    case Objective::IPO: {
      const double target = 1.0 / (2.0 * b.tau);
      for (std::size_t i = 0; i < n; ++i) {
        const double m = (pairs[i].pol_w - pairs[i].ref_w) - (pairs[i].pol_l - pairs[i].ref_l);
        losses[i] = (m - target) * (m - target);
        const double g = 2.0 * (m - target) * inv_n;
        out.coef_w[i] = g;
        out.coef_l[i] = -g;
      }
      break;
    }
    case Objective::CPO: {
      for (std::size_t i = 0; i < n; ++i) {
        const double u = b.beta * (pairs[i].pol_w - pairs[i].pol_l);
        losses[i] = num::softplus(-u) - b.cpo_lambda * pairs[i].pol_w;
        const double g = -num::sigmoid(-u) * b.beta;
        out.coef_w[i] = (g - b.cpo_lambda) * inv_n;
        out.coef_l[i] = -g * inv_n;
      }
      break;
    }
    case Objective::BCO: {
      for (std::size_t i = 0; i < n; ++i) {
        const double rw = b.beta * (pairs[i].pol_w - pairs[i].ref_w);
        const double rl = b.beta * (pairs[i].pol_l - pairs[i].ref_l);
        losses[i] = num::softplus(-(rw - b.bco_delta)) + num::softplus(rl - b.bco_delta);
        out.coef_w[i] = -num::sigmoid(-(rw - b.bco_delta)) * b.beta * inv_n;
        out.coef_l[i] = num::sigmoid(rl - b.bco_delta) * b.beta * inv_n;
      }
      break;
    }
    case Objective::GRPO: {
      if (groups.size() != n) throw DomainError("worst-group objective needs one group label per triple");
      std::map<std::string, std::vector<std::size_t>> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (groups[i].empty()) throw DomainError("worst-group objective: triple without a group label");
        members[groups[i]].push_back(i);
      }
      std::vector<double> per(n);
      for (std::size_t i = 0; i < n; ++i) per[i] = num::softplus(-dpo_margin(pairs[i], b.beta));
      // std::map iterates in ascending label order, so ties keep the lowest group id.
      const std::vector<std::size_t>* worst = nullptr;
      double worst_loss = 0.0;
      for (const auto& [g, idx] : members) {
        std::vector<double> vals;
        for (auto i : idx) vals.push_back(per[i]);
        const double m = num::mean(vals);
        if (!worst || m > worst_loss) worst = &idx, worst_loss = m;
      }
      const double inv_g = 1.0 / static_cast<double>(worst->size());
      for (auto i : *worst) {
        const double g = -w_dpo_from_margin(dpo_margin(pairs[i], b.beta)) * b.beta * inv_g;
        out.coef_w[i] = g;
        out.coef_l[i] = -g;
      }
      out.loss = worst_loss;
      return out;
    }
    case Objective::FR: {
      if (n < 2) throw DomainError("fairness-regularized objective needs a batch of at least 2");
      std::vector<double> h(n);
      for (std::size_t i = 0; i < n; ++i) h[i] = dpo_margin(pairs[i], b.beta);
      for (std::size_t i = 0; i < n; ++i) losses[i] = num::softplus(-h[i]);
      const double mu = num::mean(h);
      std::vector<double> sq(n);
      for (std::size_t i = 0; i < n; ++i) sq[i] = (h[i] - mu) * (h[i] - mu);
      const double sd = std::sqrt(num::mean(sq));
      // loss = mean DPO - alpha * F with F = -std(margins)
      out.loss = num::mean(losses) + b.fr_alpha * sd;
      for (std::size_t i = 0; i < n; ++i) {
        double dh = -w_dpo_from_margin(h[i]) * inv_n;
        if (sd > 0.0) dh += b.fr_alpha * (h[i] - mu) * inv_n / sd;
        out.coef_w[i] = dh * b.beta;
        out.coef_l[i] = -dh * b.beta;
      }
      return out;
    }
  }
  out.loss = num::mean(losses);
  return out;
}

namespace detail {

inline void check_reference(Objective o, const Policy& policy, const Policy* ref) {
  if (!needs_reference(o)) return;
  if (!ref) throw DomainError(std::string(to_string(o)) + " needs a frozen reference policy");
  if (ref->params.size() != policy.params.size() || !(ref->vocab == policy.vocab))
    throw DomainError("reference policy shape does not match the policy");
}

}  // namespace detail

// Mean objective over a batch; when `grad` is non-null it receives the exact
// parameter gradient of that mean (overwritten, not accumulated).
inline double objective_loss(const ObjectiveSettings& s, const Policy& policy, const Policy* ref,
                             std::span<const Triple> batch, GradientVector* grad = nullptr) {
  detail::check_reference(s.objective, policy, ref);
  std::vector<PairLogProbs> pairs;
  std::vector<std::string> groups;
  pairs.reserve(batch.size());
  for (const auto& t : batch) {
    pairs.push_back(pair_log_probs(policy, needs_reference(s.objective) ? ref : nullptr, t));
    groups.push_back(t.group);
  }
  const auto terms = objective_terms(s, pairs, groups);
  if (grad) {
    grad->assign(policy.params.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (terms.coef_w[i] != 0.0) accumulate_grad_log_prob(policy, batch[i].prompt, batch[i].chosen, terms.coef_w[i], *grad);
      if (terms.coef_l[i] != 0.0)
        accumulate_grad_log_prob(policy, batch[i].prompt, batch[i].rejected, terms.coef_l[i], *grad);
    }
  }
  return terms.loss;
}

// ---- C2PO on a triple ----------------------------------------------------------

// The two grouped effects of the chain rule: grad_margin * g(r+) raises the
// valid path, -grad_margin * g(r-) lowers the biased one.
struct C2poGradient {
  GradientVector promote_validity;
  GradientVector suppress_bias;

  GradientVector total() const {
    GradientVector g = promote_validity;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += suppress_bias[i];
    return g;
  }
};

inline C2poGradient c2po_gradient_parts(const Policy& policy, const Triple& t, const LossConfig& cfg) {
  const double sw = cfg.score.length_scale(t.chosen.size());
  const double sl = cfg.score.length_scale(t.rejected.size());
  const double ds = validity_score(policy, t.prompt, t.chosen, cfg.score) -
                    validity_score(policy, t.prompt, t.rejected, cfg.score);
  const double gm = grad_margin(ds, cfg);
  C2poGradient out;
  out.promote_validity.assign(policy.params.size(), 0.0);
  out.suppress_bias.assign(policy.params.size(), 0.0);
  accumulate_grad_log_prob(policy, t.prompt, t.chosen, gm * sw, out.promote_validity);
  accumulate_grad_log_prob(policy, t.prompt, t.rejected, -gm * sl, out.suppress_bias);
  return out;
}

inline GradientVector backward_c2po(const Policy& policy, const Triple& t, const LossConfig& cfg) {
  if (t.chosen == t.rejected) {
    if (t.chosen.empty()) throw DomainError("response must be non-empty");
    return GradientVector(policy.params.size(), 0.0);
  }
  return c2po_gradient_parts(policy, t, cfg).total();
}

inline LossValue loss_c2po(const Policy& policy, const Triple& t, const LossConfig& cfg) {
  return loss_c2po(causal_margin(policy, t, cfg.score, cfg.delta_margin).delta_s, cfg);
}

// ---- baselines on a triple / batch ---------------------------------------------

namespace detail {

inline ObjectiveSettings baseline_settings(Objective o, BaselineConfig b) {
  b.kind = o;
  return ObjectiveSettings{o, LossConfig{}, b};
}

inline GradientVector backward_of(const ObjectiveSettings& s, const Policy& policy, const Policy* ref,
                                  std::span<const Triple> batch) {
  GradientVector g;
  objective_loss(s, policy, ref, batch, &g);
  return g;
}

}  // namespace detail

inline double loss_dpo(const Policy& policy, const Policy& ref, const Triple& t, double beta) {
  return objective_loss(detail::baseline_settings(Objective::DPO, {.beta = beta}), policy, &ref, {&t, 1});
}
inline GradientVector backward_dpo(const Policy& policy, const Policy& ref, const Triple& t, double beta) {
  return detail::backward_of(detail::baseline_settings(Objective::DPO, {.beta = beta}), policy, &ref, {&t, 1});
}
inline double w_dpo(const Policy& policy, const Policy& ref, const Triple& t, double beta) {
  return w_dpo_from_margin(dpo_margin(pair_log_probs(policy, &ref, t), beta));
}

inline double loss_ipo(const Policy& policy, const Policy& ref, const Triple& t, double tau) {
  return objective_loss(detail::baseline_settings(Objective::IPO, {.tau = tau}), policy, &ref, {&t, 1});
}
inline GradientVector backward_ipo(const Policy& policy, const Policy& ref, const Triple& t, double tau) {
  return detail::backward_of(detail::baseline_settings(Objective::IPO, {.tau = tau}), policy, &ref, {&t, 1});
}

inline double loss_cpo(const Policy& policy, const Triple& t, double beta, double cpo_lambda) {
  return objective_loss(detail::baseline_settings(Objective::CPO, {.beta = beta, .cpo_lambda = cpo_lambda}), policy,
                        nullptr, {&t, 1});
}
inline GradientVector backward_cpo(const Policy& policy, const Triple& t, double beta, double cpo_lambda) {
  return detail::backward_of(detail::baseline_settings(Objective::CPO, {.beta = beta, .cpo_lambda = cpo_lambda}),
                             policy, nullptr, {&t, 1});
}

// Binary-classifier terms on implicit rewards r = beta * log pi / ref.
inline double loss_bco(double reward_w, double reward_l, double bco_delta) {
  return num::softplus(-(reward_w - bco_delta)) + num::softplus(reward_l - bco_delta);
}
inline double loss_bco(const Policy& policy, const Policy& ref, const Triple& t, double beta, double bco_delta) {
  return objective_loss(detail::baseline_settings(Objective::BCO, {.beta = beta, .bco_delta = bco_delta}), policy,
                        &ref, {&t, 1});
}
inline GradientVector backward_bco(const Policy& policy, const Policy& ref, const Triple& t, double beta,
                                   double bco_delta) {
  return detail::backward_of(detail::baseline_settings(Objective::BCO, {.beta = beta, .bco_delta = bco_delta}),
                             policy, &ref, {&t, 1});
}

inline double loss_grpo(std::span<const Triple> batch, const Policy& policy, const Policy& ref, double beta) {
  return objective_loss(detail::baseline_settings(Objective::GRPO, {.beta = beta}), policy, &ref, batch);
}
inline GradientVector backward_grpo(std::span<const Triple> batch, const Policy& policy, const Policy& ref,
                                    double beta) {
  return detail::backward_of(detail::baseline_settings(Objective::GRPO, {.beta = beta}), policy, &ref, batch);
}

inline double loss_fr(std::span<const Triple> batch, const Policy& policy, const Policy& ref, double beta,
                      double fr_alpha) {
  return objective_loss(detail::baseline_settings(Objective::FR, {.beta = beta, .fr_alpha = fr_alpha}), policy, &ref,
                        batch);
}
inline GradientVector backward_fr(std::span<const Triple> batch, const Policy& policy, const Policy& ref, double beta,
                                  double fr_alpha) {
  return detail::backward_of(detail::baseline_settings(Objective::FR, {.beta = beta, .fr_alpha = fr_alpha}), policy,
                             &ref, batch);
}

}  // namespace c2po
