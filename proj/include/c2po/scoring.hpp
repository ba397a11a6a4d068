#pragma once

// Causal validity score, causal margin, and three-zone bias discovery.

#include <algorithm>
#include <array>
#include <concepts>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2po/core.hpp"
#include "c2po/kv.hpp"
#include "c2po/policy.hpp"

namespace c2po {

struct ScoreConfig {
  double beta = 0.1;
  double length_alpha = 1.0;

  void check(Violations& v, const std::string& section) const {
    if (!(beta > 0.0) || !std::isfinite(beta)) v.add(section + ".beta must be > 0");
    if (!(length_alpha >= 0.0) || !std::isfinite(length_alpha)) v.add(section + ".length_alpha must be >= 0");
  }
  void validate() const {
    Violations v;
    check(v, "score");
    v.raise_if_any();
  }

  // beta / |y|^alpha
  double length_scale(std::size_t len) const {
    return beta / std::pow(static_cast<double>(len), length_alpha);
  }
};

enum class BiasZone { ActiveBias = 0, LatentSensitivity = 1, FairAlignment = 2 };

inline const char* to_string(BiasZone z) {
  switch (z) {
    case BiasZone::ActiveBias: return "active_bias";
    case BiasZone::LatentSensitivity: return "latent_sensitivity";
    case BiasZone::FairAlignment: return "fair_alignment";
  }
  return "?";
}

// Partition of the margin axis: (-inf, 0) active, [0, delta) latent, [delta, inf) fair.
inline BiasZone classify_zone(double delta_s, double delta) {
  if (!(delta > 0.0)) throw ConfigError("zone margin delta must be > 0");
  if (delta_s < 0.0) return BiasZone::ActiveBias;
  if (delta_s < delta) return BiasZone::LatentSensitivity;
  return BiasZone::FairAlignment;
}

// Anything carrying a prompt and a chosen / rejected pair.
template <typename T>
concept PreferencePair = requires(const T& t) {
  { t.prompt } -> std::convertible_to<Sequence>;
  { t.chosen } -> std::convertible_to<Sequence>;
  { t.rejected } -> std::convertible_to<Sequence>;
};

struct MarginRecord {
  std::string triple_id;
  double s_plus = 0.0;
  double s_minus = 0.0;
  double delta_s = 0.0;
  BiasZone zone = BiasZone::LatentSensitivity;
};

// (beta / |y|^alpha) * sum_t log pi(y_t | x, y_<t)
inline double validity_score(const Policy& policy, const Sequence& prompt, const Sequence& response,
                             const ScoreConfig& cfg) {
  if (response.empty()) throw DomainError("validity score needs a non-empty response");
  return cfg.length_scale(response.size()) * sequence_log_prob(policy, prompt, response);
}

template <PreferencePair T>
MarginRecord causal_margin(const Policy& policy, const T& triple, const ScoreConfig& cfg, double delta) {
  MarginRecord r;
  if constexpr (requires { triple.id; }) r.triple_id = triple.id;
  r.s_plus = validity_score(policy, triple.prompt, triple.chosen, cfg);
  r.s_minus = validity_score(policy, triple.prompt, triple.rejected, cfg);
  r.delta_s = r.s_plus - r.s_minus;
  r.zone = classify_zone(r.delta_s, delta);
  return r;
}

struct ZoneCounts {
  std::size_t active = 0;
  std::size_t latent = 0;
  std::size_t fair = 0;

  std::size_t total() const { return active + latent + fair; }
  void add(BiasZone z) {
    switch (z) {
      case BiasZone::ActiveBias: ++active; break;
      case BiasZone::LatentSensitivity: ++latent; break;
      case BiasZone::FairAlignment: ++fair; break;
    }
  }
  double fraction(BiasZone z) const {
    const double n = static_cast<double>(total());
    if (n == 0) return 0.0;
    switch (z) {
      case BiasZone::ActiveBias: return active / n;
      case BiasZone::LatentSensitivity: return latent / n;
      case BiasZone::FairAlignment: return fair / n;
    }
    return 0.0;
  }
  friend bool operator==(const ZoneCounts&, const ZoneCounts&) = default;
};

struct MarginSummary {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  ZoneCounts zones;
  friend bool operator==(const MarginSummary&, const MarginSummary&) = default;
};

// Summary over precomputed margins.
inline MarginSummary summarize_margins(std::span<const double> delta_s, double delta) {
  if (delta_s.empty()) throw DomainError("margin summary of an empty dataset");
  MarginSummary s;
  s.mean = num::mean(delta_s);
  std::vector<double> sorted(delta_s.begin(), delta_s.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.min = sorted.front();
  s.max = sorted.back();
  for (double d : delta_s) s.zones.add(classify_zone(d, delta));
  return s;
}

template <PreferencePair T>
std::vector<double> margins(const Policy& policy, std::span<const T> dataset, const ScoreConfig& cfg) {
  std::vector<double> out;
  out.reserve(dataset.size());
  for (const auto& t : dataset)
    out.push_back(validity_score(policy, t.prompt, t.chosen, cfg) -
                  validity_score(policy, t.prompt, t.rejected, cfg));
  return out;
}

template <PreferencePair T>
MarginSummary margin_stats(const Policy& policy, std::span<const T> dataset, const ScoreConfig& cfg,
                           double delta) {
  if (dataset.empty()) throw DomainError("margin_stats needs a non-empty dataset");
  if (!(delta > 0.0)) throw ConfigError("zone margin delta must be > 0");
  const auto ds = margins(policy, dataset, cfg);
  return summarize_margins(ds, delta);
}

inline nlohmann::json to_json(const MarginSummary& s) {
  return nlohmann::json{{"mean", s.mean},
                        {"median", s.median},
                        {"min", s.min},
                        {"max", s.max},
                        {"zone_counts",
                         {{"active_bias", s.zones.active},
                          {"latent_sensitivity", s.zones.latent},
                          {"fair_alignment", s.zones.fair}}}};
}

}  // namespace c2po
