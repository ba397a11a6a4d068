#pragma once

// Tiny autoregressive policies with exact log-probabilities and analytic
// parameter gradients.
//
// Two families share one interface:
//
//   BigramWithPromptFeatures
//     logits(next | prev, prompt) = T[prev] + sum_j count_j(prompt) * U[j]
//     params = [T (V x V, row = prev token), U (V x V, row = prompt token)]
//
//   TwoLayerPerceptron
//     x = [onehot(prev), bag(prompt)],  h = tanh(W1 x + b1),  logits = W2 h + b2
//     params = [W1 (H x 2V), b1 (H), W2 (V x H), b2 (V)]
//
// The first response token is conditioned on the last prompt token; with an
// empty prompt it has no previous-token term.

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "c2po/core.hpp"
#include "c2po/rng.hpp"

namespace c2po {

enum class PolicyKind { BigramWithPromptFeatures, TwoLayerPerceptron };

inline const char* to_string(PolicyKind k) {
  return k == PolicyKind::BigramWithPromptFeatures ? "bigram" : "mlp";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "bigram" || s == "BigramWithPromptFeatures") return PolicyKind::BigramWithPromptFeatures;
  if (s == "mlp" || s == "TwoLayerPerceptron") return PolicyKind::TwoLayerPerceptron;
  throw ConfigError("unknown policy kind '" + s + "' (expected bigram or mlp)");
}

inline constexpr std::size_t kDefaultHiddenWidth = 32;

struct Policy {
  PolicyKind kind = PolicyKind::BigramWithPromptFeatures;
  Vocab vocab;
  std::uint64_t seed = 0;
  std::size_t hidden = 0;  // TwoLayerPerceptron only
  std::vector<double> params;

  std::size_t vocab_size() const noexcept { return vocab.size(); }

  friend bool operator==(const Policy& a, const Policy& b) {
    return a.kind == b.kind && a.vocab == b.vocab && a.seed == b.seed && a.hidden == b.hidden &&
           a.params == b.params;
  }
};

inline std::size_t param_count(PolicyKind kind, std::size_t V, std::size_t hidden) {
  if (kind == PolicyKind::BigramWithPromptFeatures) return 2 * V * V;
  return hidden * 2 * V + hidden + V * hidden + V;
}

inline Policy init_policy(PolicyKind kind, const Vocab& vocab, std::uint64_t seed,
                          std::size_t hidden = kDefaultHiddenWidth) {
  if (vocab.size() < 2) throw ConfigError("policy vocab must have at least 2 tokens");
  Policy p;
  p.kind = kind;
  p.vocab = vocab;
  p.seed = seed;
  const std::size_t V = vocab.size();
  if (kind == PolicyKind::BigramWithPromptFeatures) {
    p.params.assign(param_count(kind, V, 0), 0.0);
    return p;
  }
  if (hidden == 0) throw ConfigError("perceptron hidden width must be positive");
  p.hidden = hidden;
  p.params.assign(param_count(kind, V, hidden), 0.0);
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(2 * V));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::size_t off = 0;
  for (std::size_t i = 0; i < hidden * 2 * V; ++i) p.params[off + i] = rng.uniform(-s1, s1);
  off += hidden * 2 * V + hidden;  // b1 stays zero
  for (std::size_t i = 0; i < V * hidden; ++i) p.params[off + i] = rng.uniform(-s2, s2);
  return p;
}

namespace detail {

// Sparse bag-of-tokens view of a prompt.
struct PromptContext {
  std::vector<std::pair<TokenId, double>> bag;
  std::optional<TokenId> last;
};

inline void check_ids(const Policy& p, const Sequence& seq, const char* what) {
  const auto V = static_cast<TokenId>(p.vocab_size());
  for (auto id : seq)
    if (id < 0 || id >= V)
      throw DomainError(std::string(what) + " token id " + std::to_string(id) + " out of vocabulary");
}

inline PromptContext make_context(const Policy& p, const Sequence& prompt) {
  check_ids(p, prompt, "prompt");
  PromptContext ctx;
  std::vector<double> counts(p.vocab_size(), 0.0);
  for (auto id : prompt) counts[static_cast<std::size_t>(id)] += 1.0;
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] != 0.0) ctx.bag.emplace_back(static_cast<TokenId>(j), counts[j]);
  if (!prompt.empty()) ctx.last = prompt.back();
  return ctx;
}

struct MlpView {
  std::size_t V, H;
  std::size_t w1, b1, w2, b2;  // offsets
  explicit MlpView(const Policy& p)
      : V(p.vocab_size()), H(p.hidden), w1(0), b1(H * 2 * V), w2(b1 + H), b2(w2 + V * H) {}
};

// Computes logits for one step. For the perceptron, `hidden_out` receives tanh activations.
inline void step_logits(const Policy& p, const PromptContext& ctx, std::optional<TokenId> prev,
                        std::span<double> logits, std::vector<double>* hidden_out) {
  const std::size_t V = p.vocab_size();
  const double* th = p.params.data();
  if (p.kind == PolicyKind::BigramWithPromptFeatures) {
    std::fill(logits.begin(), logits.end(), 0.0);
    if (prev) {
      const double* row = th + static_cast<std::size_t>(*prev) * V;
      for (std::size_t n = 0; n < V; ++n) logits[n] += row[n];
    }
    const double* U = th + V * V;
    for (auto [j, c] : ctx.bag) {
      const double* row = U + static_cast<std::size_t>(j) * V;
      for (std::size_t n = 0; n < V; ++n) logits[n] += c * row[n];
    }
    return;
  }
  const MlpView m(p);
  std::vector<double>& h = *hidden_out;
  h.assign(m.H, 0.0);
  for (std::size_t k = 0; k < m.H; ++k) {
    const double* w = th + m.w1 + k * 2 * V;
    double a = th[m.b1 + k];
    if (prev) a += w[static_cast<std::size_t>(*prev)];
    for (auto [j, c] : ctx.bag) a += c * w[V + static_cast<std::size_t>(j)];
    h[k] = std::tanh(a);
  }
  for (std::size_t n = 0; n < V; ++n) {
    const double* w = th + m.w2 + n * m.H;
    double a = th[m.b2 + n];
    for (std::size_t k = 0; k < m.H; ++k) a += w[k] * h[k];
    logits[n] = a;
  }
}

// In-place log-softmax.
inline void log_softmax(std::span<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : x) v -= lse;
}

// out += scale * d logits / d theta applied to `dlogits`.
inline void backprop_step(const Policy& p, const PromptContext& ctx, std::optional<TokenId> prev,
                          std::span<const double> dlogits, const std::vector<double>& h,
                          double scale, std::span<double> out) {
  const std::size_t V = p.vocab_size();
  if (p.kind == PolicyKind::BigramWithPromptFeatures) {
    if (prev) {
      double* row = out.data() + static_cast<std::size_t>(*prev) * V;
      for (std::size_t n = 0; n < V; ++n) row[n] += scale * dlogits[n];
    }
    double* U = out.data() + V * V;
    for (auto [j, c] : ctx.bag) {
      double* row = U + static_cast<std::size_t>(j) * V;
      for (std::size_t n = 0; n < V; ++n) row[n] += scale * c * dlogits[n];
    }
    return;
  }
  const MlpView m(p);
  const double* th = p.params.data();
  std::vector<double> dpre(m.H, 0.0);
  for (std::size_t n = 0; n < V; ++n) {
    const double g = scale * dlogits[n];
    if (g == 0.0) continue;
    out[m.b2 + n] += g;
    double* gw = out.data() + m.w2 + n * m.H;
    const double* w = th + m.w2 + n * m.H;
    for (std::size_t k = 0; k < m.H; ++k) {
      gw[k] += g * h[k];
      dpre[k] += g * w[k];
    }
  }
  for (std::size_t k = 0; k < m.H; ++k) {
    const double d = dpre[k] * (1.0 - h[k] * h[k]);
    out[m.b1 + k] += d;
    double* gw = out.data() + m.w1 + k * 2 * V;
    if (prev) gw[static_cast<std::size_t>(*prev)] += d;
    for (auto [j, c] : ctx.bag) gw[V + static_cast<std::size_t>(j)] += c * d;
  }
}

}  // namespace detail

// Next-token log-distribution after `prompt` followed by `prefix`.
inline std::vector<double> next_token_log_probs(const Policy& p, const Sequence& prompt,
                                                const Sequence& prefix = {}) {
  detail::check_ids(p, prefix, "prefix");
  const auto ctx = detail::make_context(p, prompt);
  std::optional<TokenId> prev = prefix.empty() ? ctx.last : std::optional<TokenId>(prefix.back());
  std::vector<double> logits(p.vocab_size());
  std::vector<double> h;
  detail::step_logits(p, ctx, prev, logits, &h);
  detail::log_softmax(logits);
  return logits;
}

// Per-token log pi(y_t | x, y_<t).
inline std::vector<double> log_prob(const Policy& p, const Sequence& prompt, const Sequence& response) {
  if (response.empty()) throw DomainError("response must be non-empty");
  detail::check_ids(p, response, "response");
  const auto ctx = detail::make_context(p, prompt);
  std::vector<double> out;
  out.reserve(response.size());
  std::vector<double> logits(p.vocab_size());
  std::vector<double> h;
  std::optional<TokenId> prev = ctx.last;
  for (auto y : response) {
    detail::step_logits(p, ctx, prev, logits, &h);
    detail::log_softmax(logits);
    out.push_back(logits[static_cast<std::size_t>(y)]);
    prev = y;
  }
  return out;
}

inline double sequence_log_prob(const Policy& p, const Sequence& prompt, const Sequence& response) {
  const auto lp = log_prob(p, prompt, response);
  return num::pairwise_sum(lp);
}

// out += scale * grad_theta sum_t log pi(y_t | x, y_<t); returns the summed log-probability.
inline double accumulate_grad_log_prob(const Policy& p, const Sequence& prompt, const Sequence& response,
                                       double scale, std::span<double> out) {
  if (response.empty()) throw DomainError("response must be non-empty");
  if (out.size() != p.params.size()) throw DomainError("gradient buffer size mismatch");
  detail::check_ids(p, response, "response");
  const auto ctx = detail::make_context(p, prompt);
  std::vector<double> logits(p.vocab_size());
  std::vector<double> h;
  std::vector<double> lps;
  lps.reserve(response.size());
  std::optional<TokenId> prev = ctx.last;
  for (auto y : response) {
    detail::step_logits(p, ctx, prev, logits, &h);
    detail::log_softmax(logits);
    lps.push_back(logits[static_cast<std::size_t>(y)]);
    // d log softmax_y / d logits = e_y - softmax
    for (double& v : logits) v = -std::exp(v);
    logits[static_cast<std::size_t>(y)] += 1.0;
    if (scale != 0.0) detail::backprop_step(p, ctx, prev, logits, h, scale, out);
    prev = y;
  }
  return num::pairwise_sum(lps);
}

inline GradientVector grad_log_prob(const Policy& p, const Sequence& prompt, const Sequence& response) {
  GradientVector g(p.params.size(), 0.0);
  accumulate_grad_log_prob(p, prompt, response, 1.0, g);
  return g;
}

// Argmax rollout; ties go to the lowest token id.
inline Sequence greedy_decode(const Policy& p, const Sequence& prompt, std::size_t max_len) {
  if (max_len == 0) throw DomainError("max_len must be at least 1");
  const auto ctx = detail::make_context(p, prompt);
  Sequence out;
  std::vector<double> logits(p.vocab_size());
  std::vector<double> h;
  std::optional<TokenId> prev = ctx.last;
  for (std::size_t t = 0; t < max_len; ++t) {
    detail::step_logits(p, ctx, prev, logits, &h);
    const auto best = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    out.push_back(best);
    prev = best;
  }
  return out;
}

// ---- checkpoint format ------------------------------------------------------

inline constexpr int kPolicyFormatVersion = 1;

inline nlohmann::json policy_to_json(const Policy& p) {
  return nlohmann::json{{"format", "c2po-policy"},
                        {"version", kPolicyFormatVersion},
                        {"kind", to_string(p.kind)},
                        {"vocab", p.vocab.tokens()},
                        {"seed", p.seed},
                        {"hidden", p.hidden},
                        {"params", p.params}};
}

inline Policy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "c2po-policy") throw LoadError("not a policy checkpoint");
    if (j.at("version").get<int>() != kPolicyFormatVersion)
      throw LoadError("unsupported policy format version " + std::to_string(j.at("version").get<int>()));
    Policy p;
    p.kind = policy_kind_from_string(j.at("kind").get<std::string>());
    p.vocab = Vocab(j.at("vocab").get<std::vector<std::string>>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.hidden = j.at("hidden").get<std::size_t>();
    p.params = j.at("params").get<std::vector<double>>();
    if (p.params.size() != param_count(p.kind, p.vocab.size(), p.hidden))
      throw LoadError("parameter vector length does not match policy shape");
    if (!num::all_finite(p.params)) throw LoadError("non-finite parameters");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed policy: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("malformed policy: ") + e.what());
  }
}

inline void save_policy(const Policy& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << policy_to_json(p).dump() << '\n';
}

inline Policy load_policy(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  return policy_from_json(j);
}

}  // namespace c2po
