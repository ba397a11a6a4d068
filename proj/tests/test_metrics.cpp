#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "c2po/datagen.hpp"
#include "c2po/metrics.hpp"
#include "test_util.hpp"

using namespace c2po;

namespace {

struct Samples {
  std::vector<int> pred, label;
  std::vector<std::string> group;
  void add(int p, int l, const std::string& g) {
    pred.push_back(p);
    label.push_back(l);
    group.push_back(g);
  }
};

// cells[g][label][pred] -> FPED + FNED computed straight from the definition.
double oracle_bias(const std::array<std::array<std::array<int, 2>, 2>, 3>& cells, std::size_t* degenerate) {
  auto rate = [](int num, int den) { return den ? static_cast<double>(num) / den : -1.0; };
  int fp = 0, neg = 0, fn = 0, pos = 0;
  for (const auto& g : cells) {
    fp += g[0][1], neg += g[0][0] + g[0][1];
    fn += g[1][0], pos += g[1][0] + g[1][1];
  }
  const double fpr = rate(fp, neg), fnr = rate(fn, pos);
  double total = 0;
  for (const auto& g : cells) {
    const int n = g[0][0] + g[0][1] + g[1][0] + g[1][1];
    if (n == 0) continue;
    const double gf = rate(g[0][1], g[0][0] + g[0][1]);
    const double gn = rate(g[1][0], g[1][0] + g[1][1]);
    if (fpr < 0 || gf < 0) ++*degenerate;
    else total += std::abs(fpr - gf);
    if (fnr < 0 || gn < 0) ++*degenerate;
    else total += std::abs(fnr - gn);
  }
  return total;
}

}  // namespace

TEST(Metrics, ConfusionCountsMatchBruteForce) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> bit(0, 1), grp(0, 3);
  for (int rep = 0; rep < 50; ++rep) {
    Samples s;
    for (int i = 0; i < 200; ++i) s.add(bit(gen), bit(gen), "g" + std::to_string(grp(gen)));
    const auto c = confusion_by_group(s.pred, s.label, s.group);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < s.pred.size(); ++i) {
      if (s.pred[i] && s.label[i]) ++tp;
      if (s.pred[i] && !s.label[i]) ++fp;
      if (!s.pred[i] && !s.label[i]) ++tn;
      if (!s.pred[i] && s.label[i]) ++fn;
    }
    EXPECT_EQ(c.overall, (ConfusionCounts{tp, fp, tn, fn}));
    std::size_t sum = 0;
    for (const auto& [g, k] : c.groups) sum += k.total();
    EXPECT_EQ(sum, 200u);
  }
}

TEST(Metrics, ConfusionRejectsBadInput) {
  const std::vector<int> p{1, 0}, l{1};
  const std::vector<std::string> g{"a", "b"};
  EXPECT_THROW(confusion_by_group(p, l, g), DomainError);
  const std::vector<int> p2{2, 0}, l2{1, 0};
  EXPECT_THROW(confusion_by_group(p2, l2, g), DomainError);
}

TEST(Metrics, FpedWorkedExample) {
  Samples s;
  // group a: 10 negatives, 2 false positives; group b: 10 negatives, 4 false positives.
  for (int i = 0; i < 10; ++i) s.add(i < 2, 0, "a");
  for (int i = 0; i < 10; ++i) s.add(i < 4, 0, "b");
  const auto c = confusion_by_group(s.pred, s.label, s.group);
  EXPECT_NEAR(fped(c), 0.2, 1e-15);
  std::size_t degenerate = 0;
  EXPECT_EQ(fned(c, &degenerate), 0.0);
  EXPECT_EQ(degenerate, 2u);  // no positives anywhere
  EXPECT_NEAR(bias_score(c), 0.2, 1e-15);
}

TEST(Metrics, SingleGroupOrEqualRatesGiveZero) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> bit(0, 1);
  Samples one;
  for (int i = 0; i < 50; ++i) one.add(bit(gen), bit(gen), "only");
  EXPECT_EQ(bias_score(confusion_by_group(one.pred, one.label, one.group)), 0.0);

  Samples same;
  for (const char* g : {"a", "b", "c"}) {
    same.add(1, 0, g), same.add(0, 0, g), same.add(0, 1, g), same.add(1, 1, g), same.add(1, 1, g);
  }
  EXPECT_EQ(bias_score(confusion_by_group(same.pred, same.label, same.group)), 0.0);
}

TEST(Metrics, GroupRelabelingInvariance) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> bit(0, 1), grp(0, 2);
  Samples s, r;
  const char* names[] = {"x", "y", "z"};
  const char* renamed[] = {"zz", "aa", "mm"};
  for (int i = 0; i < 300; ++i) {
    const int p = bit(gen), l = bit(gen), g = grp(gen);
    s.add(p, l, names[g]);
    r.add(p, l, renamed[g]);
  }
  EXPECT_NEAR(bias_score(confusion_by_group(s.pred, s.label, s.group)),
              bias_score(confusion_by_group(r.pred, r.label, r.group)), 1e-15);
}

TEST(Metrics, ExhaustiveSmallDatasetsMatchOracle) {
  // Every assignment of up to 8 samples to (group <= 3) x label x prediction,
  // enumerated as count vectors over the 12 cells.
  std::array<int, 12> c{};
  std::size_t checked = 0;
  const int max_n = 8;
  std::function<void(int, int)> rec = [&](int cell, int left) {
    if (cell == 11) {
      c[11] = left;
      std::array<std::array<std::array<int, 2>, 2>, 3> cells{};
      Samples s;
      for (int g = 0; g < 3; ++g)
        for (int l = 0; l < 2; ++l)
          for (int p = 0; p < 2; ++p) {
            cells[g][l][p] = c[g * 4 + l * 2 + p];
            for (int k = 0; k < cells[g][l][p]; ++k) s.add(p, l, "g" + std::to_string(g));
          }
      std::size_t deg_lib = 0, deg_oracle = 0;
      const double want = oracle_bias(cells, &deg_oracle);
      const double got = bias_score(confusion_by_group(s.pred, s.label, s.group), &deg_lib);
      ASSERT_NEAR(got, want, 1e-12);
      ASSERT_EQ(deg_lib, deg_oracle);
      ++checked;
      return;
    }
    for (int k = 0; k <= left; ++k) {
      c[cell] = k;
      rec(cell + 1, left - k);
    }
  };
  for (int n = 0; n <= max_n; ++n) rec(0, n);
  EXPECT_EQ(checked, 125970u);  // C(8 + 12, 12)
}

TEST(Metrics, DegenerateGroupsContributeZero) {
  Samples s;
  s.add(1, 1, "a"), s.add(0, 1, "a");  // a has no negatives
  s.add(1, 0, "b"), s.add(0, 1, "b");
  std::size_t degenerate = 0;
  const auto c = confusion_by_group(s.pred, s.label, s.group);
  const double fp = fped(c, &degenerate);
  EXPECT_EQ(degenerate, 1u);
  EXPECT_NEAR(fp, 0.0, 1e-15);  // only b counts: |1 - 1|
}

TEST(Metrics, EvaluateOnUniformPolicy) {
  TaskSpec spec;
  spec.n_train = 40;
  spec.n_test = 40;
  const auto ds = gen_task(spec);
  const Policy p = init_policy(PolicyKind::BigramWithPromptFeatures, ds.vocab, 0);
  const auto m = evaluate(p, ds, EvalConfig{});
  EXPECT_EQ(m.accuracy, 0.0);  // every margin is exactly 0
  EXPECT_EQ(m.anti_shortcut_accuracy, 0.0);
  EXPECT_EQ(m.generalization_gap, 0.0);
  EXPECT_EQ(m.in_domain.n, 40u);
  EXPECT_EQ(m.in_domain.margins.zones.latent, 40u);
}

TEST(Metrics, EvaluateOnEvidenceReadingPolicy) {
  TaskSpec spec;
  spec.n_train = 40;
  spec.n_test = 100;
  const auto ds = gen_task(spec);
  const auto L = task_layout(spec);
  Policy p = init_policy(PolicyKind::BigramWithPromptFeatures, ds.vocab, 0);
  const std::size_t V = ds.vocab.size();
  // Evidence tokens in the prompt raise their label's answer and rationale tokens.
  for (int lab = 0; lab < 2; ++lab)
    for (auto e : L.evidence[lab]) {
      p.params[V * V + static_cast<std::size_t>(e) * V + static_cast<std::size_t>(L.ans[lab])] = 20.0;
      for (auto w : L.why[lab]) p.params[V * V + static_cast<std::size_t>(e) * V + static_cast<std::size_t>(w)] = 20.0;
    }
  const auto m = evaluate(p, ds, EvalConfig{});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.anti_shortcut_accuracy, 1.0);
  EXPECT_EQ(m.generalization_gap, 0.0);
  EXPECT_EQ(m.bias, 0.0);
  EXPECT_EQ(m.fped + m.fned, m.bias);
}

TEST(Metrics, EvaluateRejectsMissingSplits) {
  TaskSpec spec;
  spec.n_train = 20;
  spec.n_test = 10;
  auto ds = gen_task(spec);
  const Policy p = init_policy(PolicyKind::BigramWithPromptFeatures, ds.vocab, 0);
  auto no_anti = ds;
  std::erase_if(no_anti.triples, [](const Triple& t) { return t.split == Split::AntiShortcutTest; });
  EXPECT_THROW(evaluate(p, no_anti, EvalConfig{}), DomainError);
  EvalConfig bad;
  bad.positive_token = "nope";
  EXPECT_THROW(evaluate(p, ds, bad), DomainError);
}

TEST(Metrics, ReportSerialization) {
  TaskSpec spec;
  spec.n_train = 20;
  spec.n_test = 10;
  const auto ds = gen_task(spec);
  const Policy p = testutil::random_policy(PolicyKind::BigramWithPromptFeatures, ds.vocab, 4, 0.3);
  const auto m = evaluate(p, ds, EvalConfig{});
  const auto j = to_json(m);
  EXPECT_EQ(j.at("schema"), "c2po-metrics");
  EXPECT_EQ(j.at("splits").size(), 2u);
  EXPECT_EQ(j.at("splits")[1].at("split"), "anti_shortcut_test");
  std::ostringstream os;
  os << metrics_csv_header() << '\n';
  write_metrics_csv_rows(os, "run", m);
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0, header_cols = 0;
  while (std::getline(is, line)) {
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (lines++ == 0) header_cols = cols;
    else EXPECT_EQ(cols, header_cols);
  }
  EXPECT_EQ(lines, 3u);
}
