#pragma once

// Synthetic causal-contrastive triples with a planted shortcut feature z.
//
// StereotypeCorrelation
//   prompt  = w grp_<g> w ev<label>_e w <ask>
//   The group token is z; group i (in TaskSpec::groups order) implies label i % 2.
//
// LexicalOverlap
//   prompt  = premise(H words) <sep> hypothesis(H words, each overlapping word
//             followed by "match") ev<label>_e grp_<g> <ask>
//   z is the overlap level; high overlap implies label 1 ("entail").
//   Train and in-domain prompts use partial overlap, the anti-shortcut split
//   uses complete or zero overlap.
//
// Responses
//   r+ = ans_<label> because why<label>_1 .. why<label>_k
//   r- = ans_<z label> because why<z label>_1 .. why<z label>_k   (z disagrees)
//   r- = ans_<label> because cue_1 .. cue_k                       (z agrees)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "c2po/core.hpp"
#include "c2po/kv.hpp"
#include "c2po/rng.hpp"
#include "c2po/triple.hpp"

namespace c2po {

enum class TaskFamily { StereotypeCorrelation, LexicalOverlap };

inline const char* to_string(TaskFamily f) {
  return f == TaskFamily::StereotypeCorrelation ? "stereotype" : "lexical_overlap";
}

inline TaskFamily task_family_from_string(const std::string& s) {
  if (s == "stereotype" || s == "StereotypeCorrelation") return TaskFamily::StereotypeCorrelation;
  if (s == "lexical_overlap" || s == "LexicalOverlap") return TaskFamily::LexicalOverlap;
  throw ConfigError("unknown task family '" + s + "' (expected stereotype or lexical_overlap)");
}

struct TaskSpec {
  TaskFamily family = TaskFamily::LexicalOverlap;
  std::size_t vocab_size = 64;
  std::size_t n_train = 1000;
  std::size_t n_test = 400;  // per test split
  double rho = 0.9;
  double anti_rho = 0.0;
  std::vector<std::string> groups{"g0", "g1"};
  std::uint64_t seed = 11;
  std::size_t rationale_len = 8;
  std::size_t hypothesis_len = 6;  // LexicalOverlap premise / hypothesis length
  int length_skew = 0;             // > 0 lengthens r+, < 0 lengthens r-

  void check(Violations& v, const std::string& section = "task") const;
  void validate() const {
    Violations v;
    check(v);
    v.raise_if_any();
  }
};

// Token inventory of a task; ids index into the task vocabulary.
struct TaskLayout {
  Vocab vocab;
  TokenId ask = 0, because = 0, etc = 0, sep = -1, match = -1;
  TokenId ans[2] = {0, 0};
  std::vector<TokenId> why[2];
  std::vector<TokenId> cue;
  std::vector<TokenId> evidence[2];
  std::vector<TokenId> group_tok;
  std::vector<TokenId> words;
};

namespace detail {

inline std::size_t fixed_token_count(const TaskSpec& s) {
  std::size_t n = 5 + 3 * s.rationale_len + s.groups.size();
  if (s.family == TaskFamily::LexicalOverlap) n += 2;
  return n;
}

inline std::size_t min_words(const TaskSpec& s) {
  return s.family == TaskFamily::LexicalOverlap ? 2 * s.hypothesis_len : 2;
}

}  // namespace detail

inline void TaskSpec::check(Violations& v, const std::string& section) const {
  auto name = [&](const char* k) { return section + "." + k; };
  if (vocab_size < 8) v.add(name("vocab_size") + " must be >= 8");
  if (n_train < 1) v.add(name("n_train") + " must be >= 1");
  if (n_test < 1) v.add(name("n_test") + " must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) v.add(name("rho") + " must lie in [0, 1]");
  if (!(anti_rho >= 0.0 && anti_rho <= 1.0)) v.add(name("anti_rho") + " must lie in [0, 1]");
  if (rationale_len < 1) v.add(name("rationale_len") + " must be >= 1");
  if (length_skew < -64 || length_skew > 64) v.add(name("length_skew") + " must lie in [-64, 64]");
  if (groups.empty()) v.add(name("groups") + " must list at least one group");
  std::set<std::string> uniq;
  for (const auto& g : groups) {
    if (g.empty() || g.find_first_of(" \t,") != std::string::npos)
      v.add(name("groups") + ": invalid group label '" + g + "'");
    if (!uniq.insert(g).second) v.add(name("groups") + ": duplicate group label '" + g + "'");
  }
  if (family == TaskFamily::StereotypeCorrelation && groups.size() % 2 != 0)
    v.add(name("groups") + " must have an even number of labels for the stereotype task");
  if (family == TaskFamily::LexicalOverlap && hypothesis_len < 2) v.add(name("hypothesis_len") + " must be >= 2");
  const std::size_t fixed = detail::fixed_token_count(*this);
  const std::size_t need = fixed + 2 + detail::min_words(*this);
  if (vocab_size >= 8 && vocab_size < need)
    v.add(name("vocab_size") + " = " + std::to_string(vocab_size) + " is too small for this template (needs >= " +
          std::to_string(need) + ")");
}

inline TaskLayout task_layout(const TaskSpec& spec) {
  spec.validate();
  std::vector<std::string> toks{"<ask>", "ans_0", "ans_1", "because", "etc"};
  if (spec.family == TaskFamily::LexicalOverlap) {
    toks.push_back("<sep>");
    toks.push_back("match");
  }
  for (int lab = 0; lab < 2; ++lab)
    for (std::size_t j = 0; j < spec.rationale_len; ++j) toks.push_back("why" + std::to_string(lab) + "_" + std::to_string(j));
  for (std::size_t j = 0; j < spec.rationale_len; ++j) toks.push_back("cue_" + std::to_string(j));
  for (const auto& g : spec.groups) toks.push_back("grp_" + g);
  const std::size_t rest = spec.vocab_size - toks.size();
  const std::size_t e = std::clamp<std::size_t>(rest / 4, 1, 8);
  for (int lab = 0; lab < 2; ++lab)
    for (std::size_t j = 0; j < e; ++j) toks.push_back("ev" + std::to_string(lab) + "_" + std::to_string(j));
  for (std::size_t j = 0; toks.size() < spec.vocab_size; ++j) toks.push_back("w_" + std::to_string(j));

  TaskLayout L;
  L.vocab = Vocab(toks);
  const auto& V = L.vocab;
  L.ask = V.id("<ask>");
  L.because = V.id("because");
  L.etc = V.id("etc");
  L.ans[0] = V.id("ans_0");
  L.ans[1] = V.id("ans_1");
  if (spec.family == TaskFamily::LexicalOverlap) {
    L.sep = V.id("<sep>");
    L.match = V.id("match");
  }
  for (int lab = 0; lab < 2; ++lab) {
    for (std::size_t j = 0; j < spec.rationale_len; ++j)
      L.why[lab].push_back(V.id("why" + std::to_string(lab) + "_" + std::to_string(j)));
    for (std::size_t j = 0; j < e; ++j) L.evidence[lab].push_back(V.id("ev" + std::to_string(lab) + "_" + std::to_string(j)));
  }
  for (std::size_t j = 0; j < spec.rationale_len; ++j) L.cue.push_back(V.id("cue_" + std::to_string(j)));
  for (const auto& g : spec.groups) L.group_tok.push_back(V.id("grp_" + g));
  for (std::size_t j = 0;; ++j) {
    const auto w = "w_" + std::to_string(j);
    if (!V.contains(w)) break;
    L.words.push_back(V.id(w));
  }
  return L;
}

namespace detail {

struct Item {
  int label;
  bool agree;
};

// Exactly floor(rho * n) agreements, labels balanced within one, agreements
// spread over labels so that z-implied labels stay as balanced as possible.
inline std::vector<Item> quota_items(std::size_t n, double rho, Rng& rng) {
  const auto agree = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n) + 1e-9));
  const std::size_t n0 = (n + 1) / 2, n1 = n / 2;
  std::size_t a0 = std::min(n0, (agree + 1) / 2);
  std::size_t a1 = agree - a0;
  if (a1 > n1) a1 = n1, a0 = agree - a1;
  std::vector<Item> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n0; ++i) items.push_back({0, i < a0});
  for (std::size_t i = 0; i < n1; ++i) items.push_back({1, i < a1});
  rng.shuffle(items);
  return items;
}

inline TokenId pick(const std::vector<TokenId>& xs, Rng& rng) { return xs[rng.below(xs.size())]; }

inline Sequence stereotype_prompt(const TaskLayout& L, int label, std::size_t group, Rng& rng) {
  return {pick(L.words, rng), L.group_tok[group], pick(L.words, rng), pick(L.evidence[label], rng), pick(L.words, rng),
          L.ask};
}

inline Sequence overlap_prompt(const TaskLayout& L, const TaskSpec& s, int label, int z_label, Split split,
                               std::size_t group, Rng& rng) {
  const std::size_t H = s.hypothesis_len;
  const std::size_t half = (H + 1) / 2;
  std::size_t k;
  if (split == Split::AntiShortcutTest)
    k = z_label == 1 ? H : 0;
  else if (z_label == 1)
    k = half + rng.below(H - half);
  else
    k = rng.below(half);

  std::vector<TokenId> pool = L.words;
  // partial Fisher-Yates: first 2H - k entries become distinct draws
  const std::size_t need = 2 * H - k;
  for (std::size_t i = 0; i < need; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  std::vector<TokenId> premise(pool.begin(), pool.begin() + H);
  std::vector<std::pair<TokenId, bool>> hyp;
  for (std::size_t i = 0; i < k; ++i) hyp.push_back({premise[i], true});
  for (std::size_t i = H; i < need; ++i) hyp.push_back({pool[i], false});
  rng.shuffle(premise);
  rng.shuffle(hyp);

  Sequence p(premise.begin(), premise.end());
  p.push_back(L.sep);
  for (auto [w, overlap] : hyp) {
    p.push_back(w);
    if (overlap) p.push_back(L.match);
  }
  p.push_back(pick(L.evidence[label], rng));
  p.push_back(L.group_tok[group]);
  p.push_back(L.ask);
  return p;
}

inline Sequence response(const TaskLayout& L, TokenId answer, const std::vector<TokenId>& rationale, int extra) {
  Sequence r{answer, L.because};
  r.insert(r.end(), rationale.begin(), rationale.end());
  for (int i = 0; i < extra; ++i) r.push_back(L.etc);
  return r;
}

inline void gen_split(const TaskSpec& s, const TaskLayout& L, Split split, std::size_t n, double rho,
                      std::set<Sequence>& seen, std::vector<Triple>& out) {
  Rng rng(derive_seed(s.seed, static_cast<std::uint64_t>(split)));
  const auto items = quota_items(n, rho, rng);
  const std::size_t G = s.groups.size();
  std::vector<std::size_t> by_parity[2];
  for (std::size_t g = 0; g < G; ++g) by_parity[g % 2].push_back(g);
  std::size_t parity_next[2] = {0, 0};

  for (std::size_t i = 0; i < n; ++i) {
    const int label = items[i].label;
    const int zl = items[i].agree ? label : 1 - label;
    Triple t;
    std::size_t group;
    if (s.family == TaskFamily::StereotypeCorrelation) {
      const auto& cls = by_parity[zl];
      group = cls[parity_next[zl]++ % cls.size()];
      t.shortcut_tag = "stereotype:grp_" + s.groups[group];
    } else {
      group = i % G;
      t.shortcut_tag = zl == 1 ? "overlap:high" : "overlap:low";
    }
    t.group = s.groups[group];

    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000)
        throw ConfigError("task vocabulary is too small to draw " + std::to_string(n) + " distinct " +
                          to_string(split) + " prompts");
      t.prompt = s.family == TaskFamily::StereotypeCorrelation ? stereotype_prompt(L, label, group, rng)
                                                               : overlap_prompt(L, s, label, zl, split, group, rng);
      if (seen.insert(t.prompt).second) break;
    }

    const int skew_w = std::max(s.length_skew, 0);
    const int skew_l = std::max(-s.length_skew, 0);
    t.chosen = response(L, L.ans[label], L.why[label], skew_w);
    t.rejected = items[i].agree ? response(L, L.ans[label], L.cue, skew_l) : response(L, L.ans[zl], L.why[zl], skew_l);

    char buf[32];
    std::snprintf(buf, sizeof buf, "-%05zu", i);
    t.id = std::string(to_string(split)) + buf;
    t.split = split;
    out.push_back(std::move(t));
  }
}

}  // namespace detail

inline Dataset gen_task(const TaskSpec& spec) {
  const TaskLayout L = task_layout(spec);
  Dataset ds;
  ds.vocab = L.vocab;
  std::set<Sequence> seen;
  detail::gen_split(spec, L, Split::Train, spec.n_train, spec.rho, seen, ds.triples);
  detail::gen_split(spec, L, Split::InDomainTest, spec.n_test, spec.rho, seen, ds.triples);
  detail::gen_split(spec, L, Split::AntiShortcutTest, spec.n_test, spec.anti_rho, seen, ds.triples);
  return ds;
}

// The label implied by a triple's shortcut feature, read back from its tag.
inline int shortcut_label(const TaskSpec& spec, const Triple& t) {
  if (t.shortcut_tag == "overlap:high") return 1;
  if (t.shortcut_tag == "overlap:low") return 0;
  for (std::size_t g = 0; g < spec.groups.size(); ++g)
    if (t.shortcut_tag == "stereotype:grp_" + spec.groups[g]) return static_cast<int>(g % 2);
  throw DomainError("unrecognised shortcut tag '" + t.shortcut_tag + "'");
}

inline KeyValues to_kv(const TaskSpec& s) {
  return {{"family", to_string(s.family)},
          {"vocab_size", std::to_string(s.vocab_size)},
          {"n_train", std::to_string(s.n_train)},
          {"n_test", std::to_string(s.n_test)},
          {"rho", format_double(s.rho)},
          {"anti_rho", format_double(s.anti_rho)},
          {"groups", join(s.groups)},
          {"seed", std::to_string(s.seed)},
          {"rationale_len", std::to_string(s.rationale_len)},
          {"hypothesis_len", std::to_string(s.hypothesis_len)},
          {"length_skew", std::to_string(s.length_skew)}};
}

inline void read_kv(KvReader& r, TaskSpec& s) {
  r.read_enum("family", s.family, task_family_from_string);
  r.read("vocab_size", s.vocab_size);
  r.read("n_train", s.n_train);
  r.read("n_test", s.n_test);
  r.read("rho", s.rho);
  r.read("anti_rho", s.anti_rho);
  r.read_list("groups", s.groups);
  r.read("seed", s.seed);
  r.read("rationale_len", s.rationale_len);
  r.read("hypothesis_len", s.hypothesis_len);
  r.read("length_skew", s.length_skew);
}

}  // namespace c2po
