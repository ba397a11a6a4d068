#pragma once

// Accuracy, group-fairness deviations and the anti-shortcut generalization gap.
//
// FPED = sum_d |FPR - FPR_d|,  FNED = sum_d |FNR - FNR_d|,  Bias = FPED + FNED
//
// Preference as prediction: a triple is correct iff delta_s > 0. For the
// fairness rates, the true class is whether r+ opens with the positive answer
// token and the predicted class is whether the preferred path does (ties
// prefer r-).

#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2po/core.hpp"
#include "c2po/policy.hpp"
#include "c2po/scoring.hpp"
#include "c2po/triple.hpp"

namespace c2po {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(bool predicted, bool label) {
    if (label) (predicted ? tp : fn)++;
    else (predicted ? fp : tn)++;
  }
  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct GroupConfusion {
  ConfusionCounts overall;
  std::map<std::string, ConfusionCounts> groups;
};

inline GroupConfusion confusion_by_group(std::span<const int> predictions, std::span<const int> labels,
                                         std::span<const std::string> groups) {
  if (predictions.size() != labels.size() || labels.size() != groups.size())
    throw DomainError("predictions, labels and groups must have equal length");
  GroupConfusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((predictions[i] != 0 && predictions[i] != 1) || (labels[i] != 0 && labels[i] != 1))
      throw DomainError("predictions and labels must be binary");
    c.overall.add(predictions[i] == 1, labels[i] == 1);
    c.groups[groups[i]].add(predictions[i] == 1, labels[i] == 1);
  }
  return c;
}

// Sum of |overall rate - group rate|. Groups whose rate is undefined
// contribute 0 and bump `degenerate`.
namespace detail {

template <typename Num, typename Den>
double rate_deviation(const GroupConfusion& c, Num num, Den den, std::size_t* degenerate) {
  const auto od = den(c.overall);
  const double overall = od ? static_cast<double>(num(c.overall)) / static_cast<double>(od) : 0.0;
  double sum = 0.0;
  for (const auto& [g, k] : c.groups) {
    const auto d = den(k);
    if (d == 0 || od == 0) {
      if (degenerate) ++*degenerate;
      continue;
    }
    sum += std::abs(overall - static_cast<double>(num(k)) / static_cast<double>(d));
  }
  return sum;
}

}  // namespace detail

inline double fped(const GroupConfusion& c, std::size_t* degenerate = nullptr) {
  return detail::rate_deviation(
      c, [](const ConfusionCounts& k) { return k.fp; }, [](const ConfusionCounts& k) { return k.fp + k.tn; },
      degenerate);
}

inline double fned(const GroupConfusion& c, std::size_t* degenerate = nullptr) {
  return detail::rate_deviation(
      c, [](const ConfusionCounts& k) { return k.fn; }, [](const ConfusionCounts& k) { return k.fn + k.tp; },
      degenerate);
}

inline double bias_score(const GroupConfusion& c, std::size_t* degenerate = nullptr) {
  return fped(c, degenerate) + fned(c, degenerate);
}

struct EvalConfig {
  ScoreConfig score;
  double delta = 1.0;
  std::string positive_token = "ans_1";
};

struct SplitMetrics {
  Split split = Split::InDomainTest;
  std::size_t n = 0;
  double accuracy = 0.0;
  double fped = 0.0;
  double fned = 0.0;
  double bias = 0.0;
  MarginSummary margins;
  friend bool operator==(const SplitMetrics&, const SplitMetrics&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double anti_shortcut_accuracy = 0.0;
  double fped = 0.0;
  double fned = 0.0;
  double bias = 0.0;
  double generalization_gap = 0.0;
  std::size_t degenerate_rates = 0;
  SplitMetrics in_domain;
  SplitMetrics anti_shortcut;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

namespace detail {

struct Scored {
  std::vector<double> delta_s;
  std::vector<int> pred, label;
  std::vector<std::string> group;
};

inline Scored score_split(const Policy& policy, std::span<const Triple> ts, const EvalConfig& cfg, TokenId positive) {
  Scored s;
  for (const auto& t : ts) {
    const double ds = causal_margin(policy, t, cfg.score, cfg.delta).delta_s;
    s.delta_s.push_back(ds);
    const Sequence& preferred = ds > 0.0 ? t.chosen : t.rejected;
    s.label.push_back(t.chosen.front() == positive);
    s.pred.push_back(preferred.front() == positive);
    s.group.push_back(t.group);
  }
  return s;
}

inline SplitMetrics split_metrics(Split split, const Scored& s, double delta) {
  SplitMetrics m;
  m.split = split;
  m.n = s.delta_s.size();
  std::size_t correct = 0;
  for (double d : s.delta_s) correct += d > 0.0;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  const auto conf = confusion_by_group(s.pred, s.label, s.group);
  m.fped = fped(conf);
  m.fned = fned(conf);
  m.bias = m.fped + m.fned;
  m.margins = summarize_margins(s.delta_s, delta);
  return m;
}

}  // namespace detail

inline MetricsReport evaluate(const Policy& policy, const Dataset& ds, const EvalConfig& cfg) {
  cfg.score.validate();
  if (!(cfg.delta > 0.0)) throw ConfigError("eval delta must be > 0");
  if (!policy.vocab.contains(cfg.positive_token))
    throw DomainError("positive answer token '" + cfg.positive_token + "' is not in the vocabulary");
  const TokenId pos = policy.vocab.id(cfg.positive_token);
  const auto in = ds.split(Split::InDomainTest);
  const auto anti = ds.split(Split::AntiShortcutTest);
  if (in.empty()) throw DomainError("dataset has no in_domain_test triples");
  if (anti.empty()) throw DomainError("dataset has no anti_shortcut_test triples");

  const auto si = detail::score_split(policy, in, cfg, pos);
  const auto sa = detail::score_split(policy, anti, cfg, pos);
  MetricsReport r;
  r.in_domain = detail::split_metrics(Split::InDomainTest, si, cfg.delta);
  r.anti_shortcut = detail::split_metrics(Split::AntiShortcutTest, sa, cfg.delta);
  r.accuracy = r.in_domain.accuracy;
  r.anti_shortcut_accuracy = r.anti_shortcut.accuracy;
  r.generalization_gap = r.accuracy - r.anti_shortcut_accuracy;

  auto pred = si.pred, label = si.label;
  auto group = si.group;
  pred.insert(pred.end(), sa.pred.begin(), sa.pred.end());
  label.insert(label.end(), sa.label.begin(), sa.label.end());
  group.insert(group.end(), sa.group.begin(), sa.group.end());
  const auto conf = confusion_by_group(pred, label, group);
  r.fped = fped(conf, &r.degenerate_rates);
  r.fned = fned(conf, &r.degenerate_rates);
  r.bias = r.fped + r.fned;
  return r;
}

inline constexpr int kMetricsSchemaVersion = 1;

inline nlohmann::json to_json(const SplitMetrics& m) {
  return nlohmann::json{{"split", to_string(m.split)}, {"n", m.n},       {"accuracy", m.accuracy},
                        {"fped", m.fped},              {"fned", m.fned}, {"bias", m.bias},
                        {"margins", to_json(m.margins)}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return nlohmann::json{{"schema", "c2po-metrics"},
                        {"version", kMetricsSchemaVersion},
                        {"accuracy", r.accuracy},
                        {"anti_shortcut_accuracy", r.anti_shortcut_accuracy},
                        {"generalization_gap", r.generalization_gap},
                        {"fped", r.fped},
                        {"fned", r.fned},
                        {"bias", r.bias},
                        {"degenerate_rates", r.degenerate_rates},
                        {"splits", {to_json(r.in_domain), to_json(r.anti_shortcut)}}};
}

inline const char* metrics_csv_header() {
  return "run,split,n,accuracy,fped,fned,bias,margin_mean,margin_median,margin_min,margin_max,active_bias,"
         "latent_sensitivity,fair_alignment";
}

// One row per (run, split).
inline void write_metrics_csv_rows(std::ostream& os, const std::string& run, const MetricsReport& r) {
  for (const auto* m : {&r.in_domain, &r.anti_shortcut}) {
    os << run << ',' << to_string(m->split) << ',' << m->n << ',' << format_double(m->accuracy) << ','
       << format_double(m->fped) << ',' << format_double(m->fned) << ',' << format_double(m->bias) << ','
       << format_double(m->margins.mean) << ',' << format_double(m->margins.median) << ','
       << format_double(m->margins.min) << ',' << format_double(m->margins.max) << ',' << m->margins.zones.active
       << ',' << m->margins.zones.latent << ',' << m->margins.zones.fair << '\n';
  }
}

}  // namespace c2po
