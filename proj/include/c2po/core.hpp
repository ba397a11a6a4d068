#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace c2po {

// Raised when a configuration value violates its documented range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an operation receives inputs outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input file. `line()` is 1-based, 0 when not line oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Checkpoint could not be restored.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;
using GradientVector = std::vector<double>;

// Ordered token alphabet with a bijective index <-> symbol mapping.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2) throw ConfigError("vocab must contain at least 2 tokens");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw ConfigError("vocab tokens must be non-empty");
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw ConfigError("duplicate vocab token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId id(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) throw DomainError("token '" + tok + "' is not in the vocabulary");
    return it->second;
  }
  bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

  Sequence encode(const std::vector<std::string>& toks) const {
    Sequence out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }
  std::vector<std::string> decode(const Sequence& seq) const {
    std::vector<std::string> out;
    out.reserve(seq.size());
    for (auto id : seq) out.push_back(token(id));
    return out;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

namespace num {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double log_sigmoid(double x) { return -softplus(-x); }

// Fixed-order pairwise summation; the reduction tree depends only on the length.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of empty range");
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// out += scale * x
inline void axpy(double scale, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += scale * x[i];
}

}  // namespace num
}  // namespace c2po
