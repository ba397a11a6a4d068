#pragma once

// Flat key/value configuration plumbing shared by every config struct.

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include "c2po/core.hpp"

namespace c2po {

using KeyValues = std::map<std::string, std::string>;

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw DomainError("cannot format number");
  return std::string(buf, end);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e && !s.empty();
}

template <typename Int>
bool parse_int(const std::string& s, Int& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e && !s.empty();
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

// Accumulates every problem found in a configuration instead of stopping at the first.
class Violations {
 public:
  void add(std::string msg) { items_.push_back(std::move(msg)); }
  bool empty() const { return items_.empty(); }
  const std::vector<std::string>& items() const { return items_; }

  void raise_if_any() const {
    if (items_.empty()) return;
    std::string msg = "invalid configuration (" + std::to_string(items_.size()) + " problem" +
                      (items_.size() == 1 ? "" : "s") + "):";
    for (const auto& s : items_) msg += "\n  - " + s;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> items_;
};

// Reads typed values out of a KeyValues map, recording parse failures and,
// on finish(), every key that nobody asked for.
class KvReader {
 public:
  KvReader(const KeyValues& kv, std::string section, Violations& v)
      : kv_(kv), section_(std::move(section)), v_(v) {}

  const std::string* raw(const std::string& key) {
    seen_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }

  void read(const std::string& key, double& out) {
    if (auto* s = raw(key); s && !parse_double(*s, out)) bad(key, *s, "a real number");
  }
  void read(const std::string& key, bool& out) {
    if (auto* s = raw(key); s && !parse_bool(*s, out)) bad(key, *s, "a boolean");
  }
  void read(const std::string& key, std::string& out) {
    if (auto* s = raw(key)) out = *s;
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void read(const std::string& key, Int& out) {
    if (auto* s = raw(key); s && !parse_int(*s, out)) bad(key, *s, "an integer");
  }

  // parse: string -> E, throwing ConfigError on unknown names.
  template <typename E, typename Parse>
  void read_enum(const std::string& key, E& out, Parse parse) {
    if (auto* s = raw(key)) {
      try {
        out = parse(*s);
      } catch (const ConfigError& e) {
        v_.add(name(key) + ": " + e.what());
      }
    }
  }

  void read_list(const std::string& key, std::vector<std::string>& out) {
    auto* s = raw(key);
    if (!s) return;
    out.clear();
    std::string cur;
    for (char c : *s + ",") {
      if (c == ',') {
        auto b = cur.find_first_not_of(" \t");
        auto e = cur.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
        cur.clear();
      } else {
        cur += c;
      }
    }
  }

  void read_list(const std::string& key, std::vector<double>& out) {
    std::vector<std::string> items;
    if (!kv_.count(key)) {
      seen_.insert(key);
      return;
    }
    read_list(key, items);
    out.clear();
    for (const auto& it : items) {
      double x;
      if (!parse_double(it, x)) return bad(key, it, "a list of real numbers");
      out.push_back(x);
    }
  }

  void finish() {
    for (const auto& [k, val] : kv_)
      if (!seen_.count(k)) v_.add("unknown key " + name(k));
  }

  Violations& violations() { return v_; }
  std::string name(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

 private:
  void bad(const std::string& key, const std::string& val, const char* want) {
    v_.add(name(key) + ": '" + val + "' is not " + want);
  }

  const KeyValues& kv_;
  std::string section_;
  Violations& v_;
  std::set<std::string> seen_;
};

inline std::string join(const std::vector<std::string>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

inline std::string join(const std::vector<double>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + format_double(xs[i]);
  return out;
}

}  // namespace c2po
