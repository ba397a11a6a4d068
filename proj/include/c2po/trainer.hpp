#pragma once

// Mini-batch Adam training for every objective, with periodic evaluation,
// bit-exact checkpoints, and lambda / delta sweeps.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2po/core.hpp"
#include "c2po/kv.hpp"
#include "c2po/losses.hpp"
#include "c2po/metrics.hpp"
#include "c2po/policy.hpp"
#include "c2po/rng.hpp"
#include "c2po/scoring.hpp"
#include "c2po/triple.hpp"

namespace c2po {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LrSchedule { Constant, LinearDecay };

inline const char* to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "linear"; }

inline LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "linear") return LrSchedule::LinearDecay;
  throw ConfigError("unknown lr schedule '" + s + "' (expected constant or linear)");
}

struct TrainConfig {
  Objective objective = Objective::C2PO;
  LossConfig loss;
  BaselineConfig baseline;
  PolicyKind policy_kind = PolicyKind::BigramWithPromptFeatures;
  std::size_t hidden = kDefaultHiddenWidth;
  std::size_t epochs = 3;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LrSchedule lr_schedule = LrSchedule::Constant;
  double warmup_ratio = 0.1;  // linear schedule only
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  // Supervised warm start on the rejected paths, giving the shortcut-biased
  // base model that preference optimization then corrects.
  std::size_t pretrain_steps = 200;
  double pretrain_lr = 0.05;
  std::string positive_token = "ans_1";

  ObjectiveSettings settings() const {
    ObjectiveSettings s{objective, loss, baseline};
    s.baseline.kind = objective == Objective::C2PO ? Objective::DPO : objective;
    return s;
  }

  void check(Violations& v, const std::string& section = "train") const {
    auto name = [&](const char* k) { return section + "." + k; };
    loss.check(v, "loss");
    if (objective != Objective::C2PO) settings().baseline.check(v, "baseline");
    if (epochs < 1) v.add(name("epochs") + " must be >= 1");
    if (batch_size < 1) v.add(name("batch_size") + " must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) v.add(name("learning_rate") + " must be >= 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) v.add(name("adam_beta1") + " must lie in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) v.add(name("adam_beta2") + " must lie in (0, 1)");
    if (!(adam_eps > 0.0)) v.add(name("adam_eps") + " must be > 0");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) v.add(name("warmup_ratio") + " must lie in [0, 1)");
    if (eval_every < 1) v.add(name("eval_every") + " must be >= 1");
    if (policy_kind == PolicyKind::TwoLayerPerceptron && hidden < 1) v.add(name("hidden") + " must be >= 1");
    if (!(pretrain_lr >= 0.0) || !std::isfinite(pretrain_lr)) v.add(name("pretrain_lr") + " must be >= 0");
    if (positive_token.empty()) v.add(name("positive_token") + " must be non-empty");
  }
  void validate() const {
    Violations v;
    check(v);
    v.raise_if_any();
  }
};

inline KeyValues to_kv(const TrainConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"policy", to_string(c.policy_kind)},
          {"hidden", std::to_string(c.hidden)},
          {"epochs", std::to_string(c.epochs)},
          {"max_steps", std::to_string(c.max_steps)},
          {"batch_size", std::to_string(c.batch_size)},
          {"learning_rate", format_double(c.learning_rate)},
          {"adam_beta1", format_double(c.adam_beta1)},
          {"adam_beta2", format_double(c.adam_beta2)},
          {"adam_eps", format_double(c.adam_eps)},
          {"lr_schedule", to_string(c.lr_schedule)},
          {"warmup_ratio", format_double(c.warmup_ratio)},
          {"seed", std::to_string(c.seed)},
          {"eval_every", std::to_string(c.eval_every)},
          {"pretrain_steps", std::to_string(c.pretrain_steps)},
          {"pretrain_lr", format_double(c.pretrain_lr)},
          {"positive_token", c.positive_token}};
}

inline void read_kv(KvReader& r, TrainConfig& c) {
  r.read_enum("objective", c.objective, objective_from_string);
  r.read_enum("policy", c.policy_kind, policy_kind_from_string);
  r.read("hidden", c.hidden);
  r.read("epochs", c.epochs);
  r.read("max_steps", c.max_steps);
  r.read("batch_size", c.batch_size);
  r.read("learning_rate", c.learning_rate);
  r.read("adam_beta1", c.adam_beta1);
  r.read("adam_beta2", c.adam_beta2);
  r.read("adam_eps", c.adam_eps);
  r.read_enum("lr_schedule", c.lr_schedule, lr_schedule_from_string);
  r.read("warmup_ratio", c.warmup_ratio);
  r.read("seed", c.seed);
  r.read("eval_every", c.eval_every);
  r.read("pretrain_steps", c.pretrain_steps);
  r.read("pretrain_lr", c.pretrain_lr);
  r.read("positive_token", c.positive_token);
}

// Full configuration as one flat map, used to pin checkpoints to their run.
inline KeyValues flat_kv(const TrainConfig& c) {
  KeyValues out;
  for (const auto& [k, v] : to_kv(c)) out["train." + k] = v;
  for (const auto& [k, v] : to_kv(c.loss)) out["loss." + k] = v;
  for (const auto& [k, v] : to_kv(c.baseline)) out["baseline." + k] = v;
  return out;
}

// ---- optimizer -------------------------------------------------------------------

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  void step(std::vector<double>& params, std::span<const double> grad, double lr) {
    if (m.size() != params.size()) m.assign(params.size(), 0.0), v.assign(params.size(), 0.0);
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

// ---- history -----------------------------------------------------------------------

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;  // epochs started so far
  double mean_loss = 0.0;     // objective over the whole train split
  double mean_delta_s = 0.0;  // train split
  double median_delta_s = 0.0;
  ZoneCounts zones;           // train split
  double mean_w_dpo = 0.0;    // train split, against the frozen reference
  double mean_abs_grad_margin = 0.0;
  std::optional<MetricsReport> metrics;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct RunHistory {
  std::vector<EvalRecord> records;

  void append(EvalRecord r) {
    if (!records.empty() && r.step <= records.back().step)
      throw DomainError("history steps must be strictly increasing");
    records.push_back(std::move(r));
  }
  const EvalRecord& back() const { return records.back(); }
  friend bool operator==(const RunHistory&, const RunHistory&) = default;
};

namespace detail {

inline nlohmann::json split_metrics_json(const SplitMetrics& m) { return to_json(m); }

inline SplitMetrics split_metrics_from_json(const nlohmann::json& j) {
  SplitMetrics m;
  m.split = split_from_string(j.at("split").get<std::string>());
  m.n = j.at("n").get<std::size_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.fped = j.at("fped").get<double>();
  m.fned = j.at("fned").get<double>();
  m.bias = j.at("bias").get<double>();
  const auto& mg = j.at("margins");
  m.margins.mean = mg.at("mean").get<double>();
  m.margins.median = mg.at("median").get<double>();
  m.margins.min = mg.at("min").get<double>();
  m.margins.max = mg.at("max").get<double>();
  m.margins.zones.active = mg.at("zone_counts").at("active_bias").get<std::size_t>();
  m.margins.zones.latent = mg.at("zone_counts").at("latent_sensitivity").get<std::size_t>();
  m.margins.zones.fair = mg.at("zone_counts").at("fair_alignment").get<std::size_t>();
  return m;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.anti_shortcut_accuracy = j.at("anti_shortcut_accuracy").get<double>();
  r.generalization_gap = j.at("generalization_gap").get<double>();
  r.fped = j.at("fped").get<double>();
  r.fned = j.at("fned").get<double>();
  r.bias = j.at("bias").get<double>();
  r.degenerate_rates = j.at("degenerate_rates").get<std::size_t>();
  r.in_domain = split_metrics_from_json(j.at("splits").at(0));
  r.anti_shortcut = split_metrics_from_json(j.at("splits").at(1));
  return r;
}

}  // namespace detail

inline nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"epoch", r.epoch},
                   {"mean_loss", r.mean_loss},
                   {"mean_delta_s", r.mean_delta_s},
                   {"median_delta_s", r.median_delta_s},
                   {"zone_counts",
                    {{"active_bias", r.zones.active},
                     {"latent_sensitivity", r.zones.latent},
                     {"fair_alignment", r.zones.fair}}},
                   {"mean_w_dpo", r.mean_w_dpo},
                   {"mean_abs_grad_margin", r.mean_abs_grad_margin}};
  j["metrics"] = r.metrics ? to_json(*r.metrics) : nlohmann::json(nullptr);
  return j;
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.epoch = j.at("epoch").get<std::size_t>();
  r.mean_loss = j.at("mean_loss").get<double>();
  r.mean_delta_s = j.at("mean_delta_s").get<double>();
  r.median_delta_s = j.at("median_delta_s").get<double>();
  r.zones.active = j.at("zone_counts").at("active_bias").get<std::size_t>();
  r.zones.latent = j.at("zone_counts").at("latent_sensitivity").get<std::size_t>();
  r.zones.fair = j.at("zone_counts").at("fair_alignment").get<std::size_t>();
  r.mean_w_dpo = j.at("mean_w_dpo").get<double>();
  r.mean_abs_grad_margin = j.at("mean_abs_grad_margin").get<double>();
  if (!j.at("metrics").is_null()) r.metrics = detail::metrics_from_json(j.at("metrics"));
  return r;
}

inline nlohmann::json to_json(const RunHistory& h) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : h.records) recs.push_back(to_json(r));
  return nlohmann::json{{"schema", "c2po-history"}, {"version", 1}, {"records", recs}};
}

inline const char* history_csv_header() {
  return "step,epoch,mean_loss,mean_delta_s,median_delta_s,active_bias,latent_sensitivity,fair_alignment,"
         "mean_w_dpo,mean_abs_grad_margin,accuracy,anti_shortcut_accuracy,generalization_gap,fped,fned,bias";
}

inline void write_history_csv(std::ostream& os, const RunHistory& h) {
  os << history_csv_header() << '\n';
  for (const auto& r : h.records) {
    os << r.step << ',' << r.epoch << ',' << format_double(r.mean_loss) << ',' << format_double(r.mean_delta_s) << ','
       << format_double(r.median_delta_s) << ',' << r.zones.active << ',' << r.zones.latent << ',' << r.zones.fair
       << ',' << format_double(r.mean_w_dpo) << ',' << format_double(r.mean_abs_grad_margin);
    if (r.metrics) {
      const auto& m = *r.metrics;
      os << ',' << format_double(m.accuracy) << ',' << format_double(m.anti_shortcut_accuracy) << ','
         << format_double(m.generalization_gap) << ',' << format_double(m.fped) << ',' << format_double(m.fned) << ','
         << format_double(m.bias);
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
}

// ---- warm start --------------------------------------------------------------------

// Fits the policy to the rejected paths of the train split by maximum
// likelihood, producing a base model that already follows the shortcut.
inline Policy pretrain_on_rejected(Policy policy, const Dataset& ds, std::size_t steps, double lr,
                                   std::size_t batch_size, std::uint64_t seed) {
  const auto train = ds.split(Split::Train);
  if (train.empty() || steps == 0) return policy;
  Rng rng(derive_seed(seed, 0x5f7));
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size();
  Adam adam;
  GradientVector grad(policy.params.size());
  for (std::size_t s = 0; s < steps; ++s) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t b = std::min(batch_size, train.size());
    for (std::size_t k = 0; k < b; ++k) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& t = train[order[cursor++]];
      accumulate_grad_log_prob(policy, t.prompt, t.rejected, -1.0 / static_cast<double>(b), grad);
    }
    adam.step(policy.params, grad, lr);
  }
  return policy;
}

// Initial policy for a run: fresh init followed by the configured warm start.
inline Policy prepare_base_policy(const Dataset& ds, const TrainConfig& cfg) {
  Policy p = init_policy(cfg.policy_kind, ds.vocab, derive_seed(cfg.seed, 0xba5e), cfg.hidden);
  return pretrain_on_rejected(std::move(p), ds, cfg.pretrain_steps, cfg.pretrain_lr, cfg.batch_size, cfg.seed);
}

// ---- trainer -------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

class Trainer {
 public:
  Trainer(Policy initial, const Dataset& ds, TrainConfig cfg)
      : cfg_(std::move(cfg)), ds_(&ds), policy_(std::move(initial)), rng_(derive_seed(cfg_.seed, 1)) {
    cfg_.validate();
    train_ = ds.split(Split::Train);
    if (train_.empty()) throw DomainError("dataset has no train triples");
    if (!(policy_.vocab == ds.vocab)) throw DomainError("policy vocabulary does not match the dataset");
    has_test_ = ds.count(Split::InDomainTest) > 0 && ds.count(Split::AntiShortcutTest) > 0;
    reference_ = policy_;
    adam_.beta1 = cfg_.adam_beta1;
    adam_.beta2 = cfg_.adam_beta2;
    adam_.eps = cfg_.adam_eps;
    order_.resize(train_.size());
    cursor_ = order_.size();
    steps_per_epoch_ = (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
    total_steps_ = steps_per_epoch_ * cfg_.epochs;
    if (cfg_.max_steps) total_steps_ = std::min(total_steps_, cfg_.max_steps);
    history_.append(evaluate_now());
  }

  const TrainConfig& config() const { return cfg_; }
  const Policy& policy() const { return policy_; }
  const Policy& reference() const { return reference_; }
  const RunHistory& history() const { return history_; }
  std::size_t step_count() const { return step_; }
  std::size_t total_steps() const { return total_steps_; }
  bool done() const { return step_ >= total_steps_; }

  double current_lr() const {
    if (cfg_.lr_schedule == LrSchedule::Constant) return cfg_.learning_rate;
    const double T = static_cast<double>(total_steps_);
    const double warm = std::floor(cfg_.warmup_ratio * T);
    const double s = static_cast<double>(step_);
    if (s < warm) return cfg_.learning_rate * (s + 1.0) / warm;
    return cfg_.learning_rate * std::max(0.0, (T - s) / std::max(1.0, T - warm));
  }

  // One optimizer step; evaluates when the step lands on the eval grid or ends the run.
  void step() {
    if (done()) return;
    std::vector<Triple> batch;
    batch.reserve(cfg_.batch_size);
    for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
      if (cursor_ == order_.size()) {
        if (k > 0) break;  // the last batch of an epoch may be short
        start_epoch();
      }
      batch.push_back(train_[order_[cursor_++]]);
    }
    GradientVector grad;
    const double loss = objective_loss(cfg_.settings(), policy_, &reference_, batch, &grad);
    if (!std::isfinite(loss) || !num::all_finite(grad))
      throw TrainingDiverged("training diverged at step " + std::to_string(step_ + 1) + ": batch loss " +
                             format_double(loss) + " (objective " + to_string(cfg_.objective) + ", lr " +
                             format_double(current_lr()) + ")");
    adam_.step(policy_.params, grad, current_lr());
    if (!num::all_finite(policy_.params))
      throw TrainingDiverged("training diverged at step " + std::to_string(step_ + 1) + ": non-finite parameters");
    ++step_;
    if (step_ % cfg_.eval_every == 0 || done()) history_.append(evaluate_now());
  }

  void run(std::size_t until_step = std::numeric_limits<std::size_t>::max()) {
    while (!done() && step_ < until_step) step();
  }

  nlohmann::json checkpoint_json() const {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : history_.records) hist.push_back(to_json(r));
    return nlohmann::json{{"format", "c2po-train-state"},
                          {"version", kCheckpointVersion},
                          {"config", flat_kv(cfg_)},
                          {"policy", policy_to_json(policy_)},
                          {"reference", policy_to_json(reference_)},
                          {"adam", {{"m", adam_.m}, {"v", adam_.v}, {"t", adam_.t}}},
                          {"step", step_},
                          {"epoch", epoch_},
                          {"cursor", cursor_},
                          {"order", order_},
                          {"rng", rng_.state()},
                          {"history", hist}};
  }

  void save_checkpoint(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << checkpoint_json().dump() << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
  }

  // Restores a run. The configuration must match the one that wrote the checkpoint.
  static Trainer from_checkpoint(const nlohmann::json& j, const Dataset& ds, const TrainConfig& cfg) {
    try {
      if (j.at("format").get<std::string>() != "c2po-train-state") throw LoadError("not a training checkpoint");
      const int version = j.at("version").get<int>();
      if (version != kCheckpointVersion)
        throw LoadError("unsupported checkpoint version " + std::to_string(version));
      if (j.at("config").get<KeyValues>() != flat_kv(cfg))
        throw LoadError("checkpoint was written with a different configuration");
      Policy ref = policy_from_json(j.at("reference"));
      Trainer t(ref, ds, cfg);
      t.policy_ = policy_from_json(j.at("policy"));
      if (t.policy_.params.size() != ref.params.size()) throw LoadError("policy and reference shapes differ");
      t.adam_.m = j.at("adam").at("m").get<std::vector<double>>();
      t.adam_.v = j.at("adam").at("v").get<std::vector<double>>();
      t.adam_.t = j.at("adam").at("t").get<std::uint64_t>();
      if (t.adam_.t && (t.adam_.m.size() != ref.params.size() || t.adam_.v.size() != ref.params.size()))
        throw LoadError("optimizer moments do not match the policy shape");
      t.step_ = j.at("step").get<std::size_t>();
      t.epoch_ = j.at("epoch").get<std::size_t>();
      t.cursor_ = j.at("cursor").get<std::size_t>();
      t.order_ = j.at("order").get<std::vector<std::size_t>>();
      if (t.order_.size() != t.train_.size() || t.cursor_ > t.order_.size())
        throw LoadError("checkpoint does not belong to this dataset");
      for (auto i : t.order_)
        if (i >= t.train_.size()) throw LoadError("checkpoint does not belong to this dataset");
      t.rng_.set_state(j.at("rng").get<std::string>());
      t.history_ = RunHistory{};
      for (const auto& r : j.at("history")) t.history_.append(eval_record_from_json(r));
      if (t.history_.records.empty()) throw LoadError("checkpoint history is empty");
      return t;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed checkpoint: ") + e.what());
    } catch (const DomainError& e) {
      throw LoadError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
      throw LoadError(std::string("malformed checkpoint: ") + e.what());
    }
  }

  static Trainer load_checkpoint(const std::string& path, const Dataset& ds, const TrainConfig& cfg) {
    std::ifstream is(path);
    if (!is) throw LoadError("cannot open " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("corrupt checkpoint " + path + ": " + e.what());
    }
    return from_checkpoint(j, ds, cfg);
  }

 private:
  void start_epoch() {
    ++epoch_;
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
    cursor_ = 0;
  }

  EvalRecord evaluate_now() const {
    EvalRecord r;
    r.step = step_;
    r.epoch = epoch_;
    r.mean_loss = objective_loss(cfg_.settings(), policy_, &reference_, train_);
    std::vector<double> ds, w, gm;
    ds.reserve(train_.size());
    const double beta = cfg_.settings().baseline.beta;
    for (const auto& t : train_) {
      const auto p = pair_log_probs(policy_, &reference_, t);
      const double d = cfg_.loss.score.length_scale(p.len_w) * p.pol_w - cfg_.loss.score.length_scale(p.len_l) * p.pol_l;
      ds.push_back(d);
      w.push_back(w_dpo_from_margin(dpo_margin(p, beta)));
      gm.push_back(std::abs(grad_margin(d, cfg_.loss)));
    }
    const auto summary = summarize_margins(ds, cfg_.loss.delta_margin);
    r.mean_delta_s = summary.mean;
    r.median_delta_s = summary.median;
    r.zones = summary.zones;
    r.mean_w_dpo = num::mean(w);
    r.mean_abs_grad_margin = num::mean(gm);
    if (has_test_)
      r.metrics = evaluate(policy_, *ds_, EvalConfig{cfg_.loss.score, cfg_.loss.delta_margin, cfg_.positive_token});
    return r;
  }

  TrainConfig cfg_;
  const Dataset* ds_;
  std::vector<Triple> train_;
  bool has_test_ = false;
  Policy policy_;
  Policy reference_;
  Adam adam_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t steps_per_epoch_ = 0;
  std::size_t total_steps_ = 0;
  RunHistory history_;
};

struct TrainResult {
  Policy policy;
  Policy reference;
  RunHistory history;
};

inline TrainResult train(Policy initial, const Dataset& ds, const TrainConfig& cfg) {
  Trainer t(std::move(initial), ds, cfg);
  t.run();
  return {t.policy(), t.reference(), t.history()};
}

// ---- sweep ---------------------------------------------------------------------------

struct SweepCell {
  double lambda = 0.0;
  double delta = 0.0;
  bool ok = false;
  std::string error;
  std::size_t steps = 0;
  ZoneCounts train_zones;
  std::optional<MetricsReport> metrics;
};

// One independent run per (lambda, delta) from the same initial policy and seed.
inline std::vector<SweepCell> sweep(const TrainConfig& base, std::span<const double> lambda_grid,
                                    std::span<const double> delta_grid, const Dataset& ds, const Policy& initial) {
  if (lambda_grid.empty() || delta_grid.empty()) throw ConfigError("sweep grids must be non-empty");
  std::vector<SweepCell> out;
  for (double lam : lambda_grid) {
    for (double del : delta_grid) {
      SweepCell c;
      c.lambda = lam;
      c.delta = del;
      try {
        TrainConfig cfg = base;
        cfg.objective = Objective::C2PO;
        cfg.loss.lambda_balance = lam;
        cfg.loss.delta_margin = del;
        const auto res = train(initial, ds, cfg);
        c.ok = true;
        c.steps = res.history.back().step;
        c.train_zones = res.history.back().zones;
        c.metrics = res.history.back().metrics;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

inline const char* sweep_csv_header() {
  return "lambda,delta,status,steps,accuracy,anti_shortcut_accuracy,generalization_gap,fped,fned,bias,"
         "train_active_bias,train_latent_sensitivity,train_fair_alignment,error";
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepCell> cells) {
  os << sweep_csv_header() << '\n';
  for (const auto& c : cells) {
    os << format_double(c.lambda) << ',' << format_double(c.delta) << ',' << (c.ok ? "ok" : "failed") << ',' << c.steps;
    if (c.ok && c.metrics) {
      const auto& m = *c.metrics;
      os << ',' << format_double(m.accuracy) << ',' << format_double(m.anti_shortcut_accuracy) << ','
         << format_double(m.generalization_gap) << ',' << format_double(m.fped) << ',' << format_double(m.fned) << ','
         << format_double(m.bias);
    } else {
      os << ",,,,,,";
    }
    if (c.ok)
      os << ',' << c.train_zones.active << ',' << c.train_zones.latent << ',' << c.train_zones.fair;
    else
      os << ",,,";
    os << ',' << (c.error.empty() ? "" : csv_quote(c.error)) << '\n';
  }
}

}  // namespace c2po
