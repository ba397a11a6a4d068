#pragma once

// Causal-contrastive triples and their line-delimited JSON file format.
//
// One object per line:
//   {"id": "...", "prompt": [tok...], "chosen": [tok...], "rejected": [tok...],
//    "shortcut_tag": "...", "group": "...", "split": "train"}

#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "c2po/core.hpp"

namespace c2po {

enum class Split { Train = 0, InDomainTest = 1, AntiShortcutTest = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::InDomainTest: return "in_domain_test";
    case Split::AntiShortcutTest: return "anti_shortcut_test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "in_domain_test") return Split::InDomainTest;
  if (s == "anti_shortcut_test") return Split::AntiShortcutTest;
  throw ConfigError("unknown split '" + s + "'");
}

struct Triple {
  std::string id;
  Sequence prompt;
  Sequence chosen;    // r+
  Sequence rejected;  // r-
  std::string shortcut_tag;
  std::string group;
  Split split = Split::Train;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct Dataset {
  Vocab vocab;
  std::vector<Triple> triples;

  std::vector<Triple> split(Split s) const {
    std::vector<Triple> out;
    for (const auto& t : triples)
      if (t.split == s) out.push_back(t);
    return out;
  }
  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (const auto& t : triples) n += t.split == s;
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline void check_triple(const Triple& t) {
  if (t.id.empty()) throw DomainError("triple id must be non-empty");
  if (t.chosen.empty() || t.rejected.empty()) throw DomainError("triple " + t.id + ": empty response path");
  if (t.chosen == t.rejected) throw DomainError("triple " + t.id + ": chosen and rejected paths are identical");
  if (t.shortcut_tag.empty() || t.group.empty())
    throw DomainError("triple " + t.id + ": shortcut_tag and group must be non-empty");
}

inline nlohmann::json triple_to_json(const Triple& t, const Vocab& vocab) {
  return nlohmann::json{{"id", t.id},
                        {"prompt", vocab.decode(t.prompt)},
                        {"chosen", vocab.decode(t.chosen)},
                        {"rejected", vocab.decode(t.rejected)},
                        {"shortcut_tag", t.shortcut_tag},
                        {"group", t.group},
                        {"split", to_string(t.split)}};
}

inline void save_triples(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& t : ds.triples) os << triple_to_json(t, ds.vocab).dump() << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << nlohmann::json(vocab.tokens()).dump() << '\n';
}

inline Vocab load_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    nlohmann::json j;
    is >> j;
    return Vocab(j.get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed vocab file: ") + e.what(), 0);
  }
}

namespace detail {

inline const std::set<std::string>& triple_fields() {
  static const std::set<std::string> f{"id", "prompt", "chosen", "rejected", "shortcut_tag", "group", "split"};
  return f;
}

inline std::vector<std::string> token_list(const nlohmann::json& j, const char* field, std::size_t line) {
  const auto& v = j.at(field);
  if (!v.is_array()) throw ParseError(std::string("field '") + field + "' must be an array of strings", line);
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw ParseError(std::string("field '") + field + "' must be an array of strings", line);
    out.push_back(x.get<std::string>());
  }
  return out;
}

}  // namespace detail

// Reads a triple file. With a vocabulary, tokens must belong to it; without
// one, the vocabulary is built from tokens in order of first appearance.
inline Dataset load_triples(const std::string& path, const Vocab* vocab = nullptr) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);

  struct Raw {
    std::string id, tag, group;
    std::vector<std::string> prompt, chosen, rejected;
    Split split;
    std::size_t line;
  };
  std::vector<Raw> raws;
  std::set<std::string> ids;
  std::string text;
  std::size_t lineno = 0;
  while (std::getline(is, text)) {
    ++lineno;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
    for (const auto& [k, _] : j.items())
      if (!detail::triple_fields().count(k)) throw ParseError("unknown field '" + k + "'", lineno);
    for (const auto& f : detail::triple_fields())
      if (!j.contains(f)) throw ParseError("missing field '" + f + "'", lineno);
    Raw r;
    r.line = lineno;
    try {
      r.id = j.at("id").get<std::string>();
      r.tag = j.at("shortcut_tag").get<std::string>();
      r.group = j.at("group").get<std::string>();
      r.split = split_from_string(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad field type: ") + e.what(), lineno);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
    r.prompt = detail::token_list(j, "prompt", lineno);
    r.chosen = detail::token_list(j, "chosen", lineno);
    r.rejected = detail::token_list(j, "rejected", lineno);
    if (!ids.insert(r.id).second) throw DomainError("duplicate triple id '" + r.id + "' at line " + std::to_string(lineno));
    raws.push_back(std::move(r));
  }

  Dataset ds;
  if (vocab) {
    ds.vocab = *vocab;
  } else if (!raws.empty()) {
    std::vector<std::string> toks;
    std::set<std::string> seen;
    for (const auto& r : raws)
      for (const auto* seq : {&r.prompt, &r.chosen, &r.rejected})
        for (const auto& t : *seq)
          if (seen.insert(t).second) toks.push_back(t);
    for (std::size_t i = 0; toks.size() < 2; ++i)
      if (seen.insert("<unused" + std::to_string(i) + ">").second) toks.push_back("<unused" + std::to_string(i) + ">");
    ds.vocab = Vocab(toks);
  }
  for (auto& r : raws) {
    Triple t;
    t.id = r.id;
    t.shortcut_tag = r.tag;
    t.group = r.group;
    t.split = r.split;
    try {
      t.prompt = ds.vocab.encode(r.prompt);
      t.chosen = ds.vocab.encode(r.chosen);
      t.rejected = ds.vocab.encode(r.rejected);
      check_triple(t);
    } catch (const DomainError& e) {
      throw ParseError(e.what(), r.line);
    }
    ds.triples.push_back(std::move(t));
  }
  return ds;
}

}  // namespace c2po
