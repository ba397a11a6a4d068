// Acceptance harness: one PASS/FAIL line per criterion, with the measured values.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "c2po/config.hpp"
#include "c2po/datagen.hpp"
#include "c2po/gradcheck.hpp"
#include "c2po/losses.hpp"
#include "c2po/metrics.hpp"
#include "c2po/trainer.hpp"

using namespace c2po;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << detail << std::endl;
  failures += !pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sq = check_margin_gradient_identity(HingeVariant::SquaredHinge);
  const auto lin = check_margin_gradient_identity(HingeVariant::LinearHinge);
  const double secs = seconds_since(t0);
  report(1, sq.pass && lin.pass && secs < 1.0,
         "grad_margin vs central differences, max abs error squared " + fmt(sq.max_error) + ", linear " +
             fmt(lin.max_error) + " (tol 1e-8, " + std::to_string(sq.components + lin.components) + " points), " +
             fmt(secs, 3) + " s");
}

// ---- 2 ----------------------------------------------------------------------------

void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_gradcheck_suite(GradCheckOptions{});
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  double worst = 0.0;
  std::size_t checks = 0;
  for (const auto& r : rows) {
    if (r.check.rfind("grad_margin", 0) == 0) continue;
    ok &= r.pass && r.instances == 100;
    worst = std::max(worst, r.max_error);
    ++checks;
    if (!r.pass || r.instances != 100)
      std::cout << "      " << r.check << '/' << r.policy << ": " << r.instances << " instances, max rel error "
                << fmt(r.max_error) << '\n';
  }
  report(2, ok,
         std::to_string(checks) + " objective x policy checks at 100 instances, max rel error " + fmt(worst) +
             " (tol 1e-5), " + fmt(secs, 3) + " s");
}

// ---- 3 ----------------------------------------------------------------------------

void criterion3() {
  const double a = loss_align(0.0, 0.0);
  const double s = loss_suppress(0.0, 1.0, HingeVariant::SquaredHinge);
  LossConfig c;  // lambda 0.7, delta 1, gamma 0, beta 0.1
  const double t = loss_c2po(0.0, c).total;
  const double ln2 = std::log(2.0);
  const bool ok = std::abs(a - ln2) <= 1e-12 && s == 1.0 && std::abs(t - (0.7 * ln2 + 0.3)) <= 1e-12 &&
                  c.lambda_balance == 0.7 && c.delta_margin == 1.0 && c.gamma_offset == 0.0 && c.score.beta == 0.1;
  report(3, ok,
         "loss_align(0,0) = " + fmt(a, 17) + ", loss_suppress(0,1) = " + fmt(s, 17) + ", loss_c2po(0) = " + fmt(t, 17));
}

// ---- 4 ----------------------------------------------------------------------------

void criterion4() {
  LossConfig c;
  bool ok = soft_weight(10.0, c) < c.lambda_balance * 1e-4 && hard_weight(10.0, c) == 0.0;
  const double mid = std::abs(grad_margin(0.5, c));
  ok &= mid >= 0.3 && std::abs(hard_weight(0.5, c) - 0.3) < 1e-15;
  bool zero = true;
  for (auto v : {HingeVariant::SquaredHinge, HingeVariant::LinearHinge})
    for (double lam : {0.0, 0.3, 0.7, 1.0})
      for (double delta : {0.5, 1.0, 2.0})
        for (double k = 0.0; k <= 50.0; k += 0.125) {
          LossConfig g = c;
          g.hinge_variant = v;
          g.lambda_balance = lam;
          g.delta_margin = delta;
          zero &= hard_weight(delta + k, g) == 0.0;
          if (lam == 0.0) zero &= grad_margin(delta + k, g) == 0.0;
        }
  report(4, ok && zero,
         "soft term at 10 = " + fmt(soft_weight(10.0, c)) + " (< " + fmt(c.lambda_balance * 1e-4) +
             "), |grad_margin(delta/2)| = " + fmt(mid) + ", hard term zero for all delta_s >= delta: " +
             (zero ? "yes" : "no"));
}

// ---- 5 ----------------------------------------------------------------------------

using Cells = std::array<int, 12>;  // [group][label][prediction]

double oracle_bias(const Cells& c, std::size_t& degenerate) {
  auto at = [&](int g, int l, int p) { return c[g * 4 + l * 2 + p]; };
  int fp = 0, neg = 0, fn = 0, pos = 0;
  for (int g = 0; g < 3; ++g) {
    fp += at(g, 0, 1), neg += at(g, 0, 0) + at(g, 0, 1);
    fn += at(g, 1, 0), pos += at(g, 1, 0) + at(g, 1, 1);
  }
  double total = 0.0;
  for (int g = 0; g < 3; ++g) {
    const int gneg = at(g, 0, 0) + at(g, 0, 1), gpos = at(g, 1, 0) + at(g, 1, 1);
    if (gneg + gpos == 0) continue;
    if (neg && gneg) total += std::abs(double(fp) / neg - double(at(g, 0, 1)) / gneg);
    else ++degenerate;
    if (pos && gpos) total += std::abs(double(fn) / pos - double(at(g, 1, 0)) / gpos);
    else ++degenerate;
  }
  return total;
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  // Every multiset of up to 12 samples over 3 groups x 2 labels x 2 predictions.
  Cells c{};
  std::size_t configs = 0, mismatches = 0;
  double worst = 0.0;
  std::vector<int> pred, label;
  std::vector<std::string> group;
  const std::string names[3] = {"g0", "g1", "g2"};
  std::function<void(int, int)> rec = [&](int cell, int left) {
    if (cell == 11) {
      c[11] = left;
      pred.clear(), label.clear(), group.clear();
      for (int i = 0; i < 12; ++i)
        for (int k = 0; k < c[i]; ++k) {
          group.push_back(names[i / 4]);
          label.push_back((i / 2) % 2);
          pred.push_back(i % 2);
        }
      std::size_t deg_o = 0, deg_l = 0;
      const double want = oracle_bias(c, deg_o);
      const auto conf = confusion_by_group(pred, label, group);
      const double got = fped(conf, &deg_l) + fned(conf, &deg_l);
      worst = std::max(worst, std::abs(got - want));
      mismatches += std::abs(got - want) > 1e-12 || deg_o != deg_l;
      ++configs;
      return;
    }
    for (int k = 0; k <= left; ++k) {
      c[cell] = k;
      rec(cell + 1, left - k);
    }
  };
  for (int n = 0; n <= 12; ++n) rec(0, n);

  // Two groups with FPR 0.2 and 0.4 around an overall 0.3.
  pred.clear(), label.clear(), group.clear();
  for (int i = 0; i < 10; ++i) pred.push_back(i < 2), label.push_back(0), group.push_back("a");
  for (int i = 0; i < 10; ++i) pred.push_back(i < 4), label.push_back(0), group.push_back("b");
  const double example = fped(confusion_by_group(pred, label, group));
  for (auto& g : group) g = "only";
  const double one_group = bias_score(confusion_by_group(pred, label, group));

  const bool ok = mismatches == 0 && std::abs(example - 0.2) < 1e-12 && one_group == 0.0;
  report(5, ok,
         std::to_string(configs) + " configurations, " + std::to_string(mismatches) + " mismatches (max diff " +
             fmt(worst) + "), two-group FPED = " + fmt(example, 17) + ", one-group Bias = " + fmt(one_group) + ", " +
             fmt(seconds_since(t0), 3) + " s");
}

// ---- 6 ----------------------------------------------------------------------------

struct RunSummary {
  EvalRecord last;
  RunHistory history;
  double seconds = 0.0;
};

RunSummary timed_train(const Policy& base, const Dataset& ds, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  auto res = train(base, ds, cfg);
  RunSummary s;
  s.seconds = seconds_since(t0);
  s.last = res.history.back();
  s.history = std::move(res.history);
  return s;
}

TrainConfig budget_config(Objective obj, std::size_t epochs, std::size_t eval_every) {
  TrainConfig c;
  c.objective = obj;
  c.epochs = epochs;
  c.eval_every = eval_every;
  return c;
}

void criterion6() {
  TaskSpec spec;
  spec.family = TaskFamily::LexicalOverlap;
  spec.rho = 0.9;
  spec.n_train = 1000;
  const auto ds = gen_task(spec);
  // 25 epochs x 16 batches of 64 = 400 steps for every objective.
  const auto dpo_cfg = budget_config(Objective::DPO, 25, 100);
  const auto c2po_cfg = budget_config(Objective::C2PO, 25, 100);
  const Policy base = prepare_base_policy(ds, dpo_cfg);
  const auto dpo = timed_train(base, ds, dpo_cfg);
  const auto c2 = timed_train(base, ds, c2po_cfg);
  const auto& md = *dpo.last.metrics;
  const auto& mc = *c2.last.metrics;
  const double fair_d = dpo.last.zones.fraction(BiasZone::FairAlignment);
  const double fair_c = c2.last.zones.fraction(BiasZone::FairAlignment);
  const bool a = md.accuracy - md.anti_shortcut_accuracy >= 0.10;
  const bool b = mc.generalization_gap < md.generalization_gap;
  const bool c = fair_c > fair_d;
  const bool time_ok = dpo.seconds < 60 && c2.seconds < 60 && dpo.last.step <= 2000;
  report(6, a && b && c && time_ok,
         "LexicalOverlap, " + std::to_string(dpo.last.step) + " steps: DPO in-domain " + fmt(md.accuracy) + " / anti " +
             fmt(md.anti_shortcut_accuracy) + " (gap " + fmt(md.generalization_gap) + "), C2PO in-domain " +
             fmt(mc.accuracy) + " / anti " + fmt(mc.anti_shortcut_accuracy) + " (gap " +
             fmt(mc.generalization_gap) + "), train Fair DPO " + fmt(fair_d) + " vs C2PO " + fmt(fair_c) + "; bias DPO " +
             fmt(md.bias) + " C2PO " + fmt(mc.bias) + "; " + fmt(dpo.seconds, 3) + " s + " + fmt(c2.seconds, 3) + " s");
  std::cout << "      (a) DPO gap >= 10 points: " << (a ? "yes" : "no") << "  (b) C2PO gap < DPO gap: " << (b ? "yes" : "no")
            << "  (c) C2PO Fair > DPO Fair: " << (c ? "yes" : "no") << '\n';
}

// ---- 7 ----------------------------------------------------------------------------

void criterion7() {
  TaskSpec spec;
  spec.family = TaskFamily::StereotypeCorrelation;
  const auto ds = gen_task(spec);
  // 60 epochs = 960 steps, evaluated every 32 steps.
  const auto dpo_cfg = budget_config(Objective::DPO, 60, 32);
  auto c07 = budget_config(Objective::C2PO, 60, 32);
  auto c10 = c07;
  c10.loss.lambda_balance = 1.0;
  const Policy base = prepare_base_policy(ds, dpo_cfg);
  const auto dpo = timed_train(base, ds, dpo_cfg);
  const auto r07 = timed_train(base, ds, c07);
  const auto r10 = timed_train(base, ds, c10);

  const auto latent = [](const EvalRecord& r) { return r.zones.fraction(BiasZone::LatentSensitivity); };
  const auto& h07 = r07.history.records;
  const std::size_t n = h07.size();
  const bool converged = n >= 4 && h07[n - 1].zones == h07[n - 2].zones && h07[n - 2].zones == h07[n - 3].zones;
  const double acc_d = dpo.last.metrics->accuracy, acc_c = r07.last.metrics->accuracy;
  const bool matched_acc = std::abs(acc_d - acc_c) <= 0.02;
  const bool a = converged && matched_acc && latent(r07.last) < latent(dpo.last);

  // Matched steps: every shared eval point after the common starting policy.
  double sum07 = 0, sum10 = 0;
  std::size_t points = 0;
  const auto& h10 = r10.history.records;
  std::ostringstream trace;
  for (std::size_t i = 1; i < std::min(h07.size(), h10.size()); ++i) {
    if (h07[i].step != h10[i].step) continue;
    sum07 += latent(h07[i]);
    sum10 += latent(h10[i]);
    ++points;
    if (h07[i].step % 128 == 0)
      trace << ' ' << h07[i].step << ':' << fmt(latent(h10[i]), 3) << '/' << fmt(latent(h07[i]), 3);
  }
  const double mean07 = sum07 / static_cast<double>(points), mean10 = sum10 / static_cast<double>(points);
  const bool b = mean10 > mean07;

  report(7, a && b,
         "StereotypeCorrelation, " + std::to_string(dpo.last.step) + " steps: train Latent DPO " + fmt(latent(dpo.last)) +
             " vs C2PO " + fmt(latent(r07.last)) + " at in-domain accuracy " + fmt(acc_d) + " / " + fmt(acc_c) +
             (converged ? " (C2PO converged)" : " (C2PO not converged)") + "; mean Latent over " +
             std::to_string(points) + " matched steps lambda=1 " + fmt(mean10) + " vs lambda=0.7 " + fmt(mean07));
  std::cout << "      (a) C2PO Latent < DPO Latent at matched accuracy: " << (a ? "yes" : "no")
            << "  (b) lambda=1 Latent > lambda=0.7 Latent: " << (b ? "yes" : "no") << '\n'
            << "      Latent lambda=1/lambda=0.7 by step:" << trace.str() << '\n';
}

// ---- 8 ----------------------------------------------------------------------------

void criterion8() {
  const fs::path dir = fs::temp_directory_path() / ("c2po_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  TaskSpec spec;
  spec.n_train = 300;
  spec.n_test = 100;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.eval_every = 5;
  cfg.lr_schedule = LrSchedule::LinearDecay;
  std::vector<std::string> notes;

  const auto ds = gen_task(spec);
  bool identical = gen_task(spec) == ds;
  bool resume_ok = true, ckpt_ok = true;
  for (auto obj : kAllObjectives) {
    cfg.objective = obj;
    const Policy base = prepare_base_policy(ds, cfg);
    const auto a = train(base, ds, cfg);
    const auto b = train(prepare_base_policy(ds, cfg), ds, cfg);
    identical &= a.policy == b.policy && a.history == b.history;

    Trainer t(base, ds, cfg);
    t.run(7);
    const auto path = (dir / "ckpt.json").string();
    t.save_checkpoint(path);
    auto r = Trainer::load_checkpoint(path, ds, cfg);
    ckpt_ok &= r.checkpoint_json() == t.checkpoint_json();
    r.run();
    resume_ok &= r.policy() == a.policy && r.history() == a.history;
  }
  save_triples(ds, (dir / "t.jsonl").string());
  save_vocab(ds.vocab, (dir / "v.json").string());
  const Vocab v = load_vocab((dir / "v.json").string());
  const bool triples_ok = load_triples((dir / "t.jsonl").string(), &v) == ds;
  const Policy p = prepare_base_policy(ds, cfg);
  save_policy(p, (dir / "p.json").string());
  const bool policy_ok = load_policy((dir / "p.json").string()) == p;
  fs::remove_all(dir);
  report(8, identical && resume_ok && ckpt_ok && triples_ok && policy_ok,
         std::string("repeat runs bit-identical: ") + (identical ? "yes" : "no") +
             ", triple file round trip: " + (triples_ok ? "exact" : "differs") +
             ", policy / training checkpoint round trip: " + (policy_ok && ckpt_ok ? "exact" : "differs") +
             ", resumed histories match (all 7 objectives): " + (resume_ok ? "yes" : "no"));
}

// ---- 9 ----------------------------------------------------------------------------

void criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  TaskSpec spec;
  const auto ds = gen_task(spec);
  const auto cfg = budget_config(Objective::C2PO, 25, 100);
  const Policy base = prepare_base_policy(ds, cfg);
  const std::vector<double> lambdas{0.3, 0.5, 0.7, 1.0}, deltas{0.5, 1.0, 2.0};
  const auto cells = sweep(cfg, lambdas, deltas, ds, base);
  std::ostringstream csv;
  write_sweep_csv(csv, cells);
  const double secs = seconds_since(t0);

  std::istringstream is(csv.str());
  std::string line;
  std::size_t rows = 0;
  bool complete = true;
  std::getline(is, line);
  const auto header_cols = std::count(line.begin(), line.end(), ',');
  while (std::getline(is, line)) {
    ++rows;
    complete &= std::count(line.begin(), line.end(), ',') == header_cols;
    complete &= line.find(",,") == std::string::npos && line.back() == ',';  // only the error column is empty
  }
  std::size_t ok = 0;
  std::string best;
  double best_bias = 1e9;
  for (const auto& c : cells) {
    ok += c.ok && c.metrics && std::isfinite(c.metrics->bias);
    if (c.ok && c.metrics && c.metrics->bias < best_bias)
      best_bias = c.metrics->bias, best = "lambda=" + fmt(c.lambda) + ", delta=" + fmt(c.delta);
  }
  report(9, rows == 12 && ok == 12 && complete && secs < 600.0,
         std::to_string(ok) + "/12 cells complete, CSV rows " + std::to_string(rows) + (complete ? " (no gaps)" : " (gaps)") +
             ", lowest Bias " + fmt(best_bias) + " at " + best + ", " + fmt(secs, 3) + " s");
  std::cout << csv.str();
}

}  // namespace

int main() {
  const std::pair<int, void (*)()> criteria[] = {{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                 {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                 {7, criterion7}, {8, criterion8}, {9, criterion9}};
  for (const auto& [id, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return failures ? 1 : 0;
}
