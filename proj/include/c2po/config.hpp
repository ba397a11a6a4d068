#pragma once

// Experiment configuration: one INI file plus "section.key=value" overrides.
//
//   [task]      TaskSpec            [train]    TrainConfig
//   [loss]      LossConfig          [baseline] BaselineConfig
//   [output]    dir, formats        [sweep]    lambdas, deltas
//   [compare]   objectives          [data]     triples, vocab (external data)
//
// Precedence: override > file > default. Every violation is reported at once.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "c2po/core.hpp"
#include "c2po/datagen.hpp"
#include "c2po/kv.hpp"
#include "c2po/losses.hpp"
#include "c2po/trainer.hpp"
#include "c2po/triple.hpp"

namespace c2po {

struct ExperimentConfig {
  TaskSpec task;
  TrainConfig train;
  std::string output_dir = "out";
  std::vector<std::string> report_formats{"csv", "json"};
  std::vector<double> sweep_lambdas{0.3, 0.5, 0.7, 1.0};
  std::vector<double> sweep_deltas{0.5, 1.0, 2.0};
  std::vector<std::string> compare_objectives{"dpo", "c2po"};
  std::string data_triples;  // empty: generate from [task]
  std::string data_vocab;

  bool wants(const std::string& format) const {
    for (const auto& f : report_formats)
      if (f == format) return true;
    return false;
  }
};

using Sections = std::map<std::string, KeyValues>;

inline const std::vector<std::string>& known_sections() {
  static const std::vector<std::string> s{"task", "train", "loss", "baseline", "output", "sweep", "compare", "data"};
  return s;
}

inline Sections parse_ini(std::istream& is) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  Sections out;
  for (const auto& [name, sec] : pt) {
    if (sec.empty()) {
      out[""][name] = sec.data();  // key outside any section
      continue;
    }
    for (const auto& [k, v] : sec) out[name][k] = v.data();
  }
  return out;
}

inline Sections parse_ini_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_ini(is);
}

// "section.key=value"
inline void apply_override(Sections& s, const std::string& assignment, Violations& v) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    v.add("override '" + assignment + "' is not of the form section.key=value");
    return;
  }
  s[assignment.substr(0, dot)][assignment.substr(dot + 1, eq - dot - 1)] = assignment.substr(eq + 1);
}

inline ExperimentConfig experiment_from_sections(const Sections& sections) {
  Violations v;
  ExperimentConfig c;
  for (const auto& [name, kv] : sections) {
    bool known = false;
    for (const auto& s : known_sections()) known |= s == name;
    if (!known) {
      if (name.empty())
        for (const auto& [k, _] : kv) v.add("key '" + k + "' must live inside a [section]");
      else
        v.add("unknown section [" + name + "]");
    }
  }
  auto get = [&](const std::string& name) -> const KeyValues& {
    static const KeyValues empty;
    auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  };

  {
    KvReader r(get("task"), "task", v);
    read_kv(r, c.task);
    r.finish();
  }
  {
    KvReader r(get("train"), "train", v);
    read_kv(r, c.train);
    r.finish();
  }
  {
    KvReader r(get("loss"), "loss", v);
    read_kv(r, c.train.loss);
    r.finish();
  }
  {
    KvReader r(get("baseline"), "baseline", v);
    read_kv(r, c.train.baseline);
    r.finish();
  }
  {
    KvReader r(get("output"), "output", v);
    r.read("dir", c.output_dir);
    r.read_list("formats", c.report_formats);
    r.finish();
  }
  {
    KvReader r(get("sweep"), "sweep", v);
    r.read_list("lambdas", c.sweep_lambdas);
    r.read_list("deltas", c.sweep_deltas);
    r.finish();
  }
  {
    KvReader r(get("compare"), "compare", v);
    r.read_list("objectives", c.compare_objectives);
    r.finish();
  }
  {
    KvReader r(get("data"), "data", v);
    r.read("triples", c.data_triples);
    r.read("vocab", c.data_vocab);
    r.finish();
  }

  if (c.data_triples.empty()) c.task.check(v);
  c.train.check(v);
  if (c.output_dir.empty()) v.add("output.dir must be non-empty");
  for (const auto& f : c.report_formats)
    if (f != "csv" && f != "json") v.add("output.formats: unknown format '" + f + "' (expected csv, json)");
  if (c.sweep_lambdas.empty()) v.add("sweep.lambdas must be non-empty");
  for (double l : c.sweep_lambdas)
    if (!(l >= 0.0 && l <= 1.0)) v.add("sweep.lambdas: " + format_double(l) + " is outside [0, 1]");
  if (c.sweep_deltas.empty()) v.add("sweep.deltas must be non-empty");
  for (double d : c.sweep_deltas)
    if (!(d > 0.0)) v.add("sweep.deltas: " + format_double(d) + " must be > 0");
  if (c.compare_objectives.empty()) v.add("compare.objectives must be non-empty");
  for (const auto& o : c.compare_objectives) {
    try {
      objective_from_string(o);
    } catch (const ConfigError& e) {
      v.add(std::string("compare.objectives: ") + e.what());
    }
  }
  v.raise_if_any();
  return c;
}

// Reads `path` (may be empty for all defaults), then applies overrides.
inline ExperimentConfig load_experiment_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Sections s = path.empty() ? Sections{} : parse_ini_file(path);
  Violations v;
  for (const auto& o : overrides) apply_override(s, o, v);
  v.raise_if_any();
  return experiment_from_sections(s);
}

inline Sections to_sections(const ExperimentConfig& c) {
  Sections s;
  s["task"] = to_kv(c.task);
  s["train"] = to_kv(c.train);
  s["loss"] = to_kv(c.train.loss);
  s["baseline"] = to_kv(c.train.baseline);
  s["output"] = {{"dir", c.output_dir}, {"formats", join(c.report_formats)}};
  s["sweep"] = {{"lambdas", join(c.sweep_lambdas)}, {"deltas", join(c.sweep_deltas)}};
  s["compare"] = {{"objectives", join(c.compare_objectives)}};
  if (!c.data_triples.empty()) s["data"] = {{"triples", c.data_triples}, {"vocab", c.data_vocab}};
  return s;
}

inline void write_ini(std::ostream& os, const Sections& s) {
  bool first = true;
  for (const auto& [name, kv] : s) {
    os << (first ? "" : "\n") << '[' << name << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    first = false;
  }
}

// Triples for an experiment: the external file when configured, otherwise the generator.
inline Dataset experiment_dataset(const ExperimentConfig& c) {
  if (c.data_triples.empty()) return gen_task(c.task);
  if (c.data_vocab.empty()) return load_triples(c.data_triples);
  const Vocab vocab = load_vocab(c.data_vocab);
  return load_triples(c.data_triples, &vocab);
}

}  // namespace c2po
