#pragma once

// Phase schedule for a training run. A strategy is a list of
// (end_epoch, lr, is_amp, amp_factor) tuples; epochs are 1-based and phase k
// covers (end_epoch[k-1], end_epoch[k]].

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ampli/error.hpp"

namespace ampli {

struct PhaseSpec {
  int end_epoch = 0;
  double lr = 0.1;
  bool is_amp = false;
  double amp_factor = 1.0;

  friend bool operator==(const PhaseSpec&, const PhaseSpec&) = default;
};

struct Reselect {
  enum class Kind { once_per_phase, every_k_epochs };
  Kind kind = Kind::once_per_phase;
  int k = 1;

  static Reselect once_per_phase() { return {}; }
  static Reselect every(int k) { return {Kind::every_k_epochs, k}; }

  std::string to_string() const {
    return kind == Kind::once_per_phase ? "once_per_phase" : "every_" + std::to_string(k);
  }

  friend bool operator==(const Reselect&, const Reselect&) = default;
};

/// "once_per_phase" or "every_<k>" / "every_k(<k>)".
inline Reselect parse_reselect(std::string_view s) {
  if (s == "once_per_phase" || s == "once") return Reselect::once_per_phase();
  std::string_view digits;
  if (s.starts_with("every_k(") && s.ends_with(")"))
    digits = s.substr(8, s.size() - 9);
  else if (s.starts_with("every_"))
    digits = s.substr(6);
  int k = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size() || k < 1)
    throw ConfigError("unknown reselection policy '" + std::string(s) + "'");
  return Reselect::every(k);
}

struct TrainingStrategy {
  std::vector<PhaseSpec> phases;
  Reselect reselect;
  std::string source;  // text the phases were parsed from

  int total_epochs() const noexcept { return phases.empty() ? 0 : phases.back().end_epoch; }

  /// Checks ordering and value ranges; throws StrategyError naming the tuple.
  void validate() const {
    if (phases.empty()) throw ConfigError("strategy has no phases");
    int prev = 0;
    for (std::size_t i = 0; i < phases.size(); ++i) {
      const PhaseSpec& p = phases[i];
      if (p.end_epoch <= prev) {
        throw StrategyError(i, "end epoch " + std::to_string(p.end_epoch) + " must be greater than " +
                                   std::to_string(prev));
      }
      if (!(p.lr > 0.0) || !std::isfinite(p.lr)) throw StrategyError(i, "learning rate must be positive");
      if (!(p.amp_factor >= 1.0) || !std::isfinite(p.amp_factor))
        throw StrategyError(i, "amplification factor must be >= 1");
      if (!p.is_amp && p.amp_factor != 1.0)
        throw StrategyError(i, "amplification factor must be 1 when amplification is off");
      prev = p.end_epoch;
    }
    if (reselect.kind == Reselect::Kind::every_k_epochs && reselect.k < 1)
      throw ConfigError("reselection interval must be >= 1");
  }

  bool any_amp() const noexcept {
    for (const PhaseSpec& p : phases)
      if (p.is_amp) return true;
    return false;
  }
};

namespace detail {

class TupleListParser {
 public:
  explicit TupleListParser(std::string_view text) : s_(text) {}

  std::vector<PhaseSpec> parse() {
    std::vector<PhaseSpec> out;
    skip_ws();
    expect('[', "expected '[' opening the phase list");
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      finish();
      return out;
    }
    for (;;) {
      out.push_back(parse_tuple(out.size()));
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']', "expected ',' or ']' after tuple " + std::to_string(out.size() - 1));
      break;
    }
    finish();
    return out;
  }

 private:
  PhaseSpec parse_tuple(std::size_t index) {
    skip_ws();
    const char open = peek();
    if (open != '(' && open != '[') throw StrategyError(index, "expected '(' or '['");
    ++pos_;
    const char close = open == '(' ? ')' : ']';
    std::vector<std::string_view> fields;
    for (;;) {
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != close && !std::isspace(static_cast<unsigned char>(s_[pos_])))
        ++pos_;
      fields.push_back(s_.substr(start, pos_ - start));
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == close) {
        ++pos_;
        break;
      }
      throw StrategyError(index, "unterminated tuple");
    }
    if (fields.size() != 4)
      throw StrategyError(index, "expected 4 fields (end_epoch, lr, is_amp, amp_factor), got " + std::to_string(fields.size()));
    PhaseSpec p;
    const double end = number(fields[0], index, "end_epoch");
    if (end != std::floor(end) || std::abs(end) > 1e9) throw StrategyError(index, "end_epoch must be an integer");
    p.end_epoch = static_cast<int>(end);
    p.lr = number(fields[1], index, "lr");
    if (fields[2] == "is_amp" || fields[2] == "true")
      p.is_amp = true;
    else if (fields[2] == "false")
      p.is_amp = false;
    else
      p.is_amp = number(fields[2], index, "is_amp") != 0.0;
    p.amp_factor = number(fields[3], index, "amp_factor");
    return p;
  }

  static double number(std::string_view f, std::size_t index, const char* name) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size())
      throw StrategyError(index, std::string(name) + " '" + std::string(f) + "' is not a number");
    return v;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void expect(char c, const std::string& msg) {
    if (peek() != c) throw ConfigError("strategy: " + msg);
    ++pos_;
  }
  void finish() {
    skip_ws();
    if (pos_ != s_.size()) throw ConfigError("strategy: trailing characters after phase list");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses a phase list such as
///   [(50, 0.1, 0, 1), (100, 0.1, is_amp, 2), (130, 0.01, is_amp, 2), (150, 0.01, 0, 1)]
/// Square brackets work for the inner tuples too, so a JSON array of arrays
/// is accepted. `is_amp` and `true` mean amplification on; any nonzero
/// number also counts as on.
inline TrainingStrategy parse_strategy(std::string_view text, Reselect reselect = {}) {
  TrainingStrategy s;
  s.phases = detail::TupleListParser(text).parse();
  s.reselect = reselect;
  s.source = std::string(text);
  s.validate();
  return s;
}

inline std::size_t phase_index_at(const TrainingStrategy& s, int epoch) {
  if (epoch < 1 || epoch > s.total_epochs()) {
    throw Error("epoch " + std::to_string(epoch) + " outside 1.." + std::to_string(s.total_epochs()));
  }
  std::size_t i = 0;
  while (s.phases[i].end_epoch < epoch) ++i;
  return i;
}

inline const PhaseSpec& phase_at(const TrainingStrategy& s, int epoch) { return s.phases[phase_index_at(s, epoch)]; }

/// First epoch of the phase with the given index.
inline int phase_start(const TrainingStrategy& s, std::size_t index) {
  return index == 0 ? 1 : s.phases[index - 1].end_epoch + 1;
}

/// True when the layer set should be recomputed from this epoch's
/// gradients. Once-per-phase fires at the first epoch of each amplified
/// phase; every-k fires at the first epoch of a run of consecutive
/// amplified phases and every k epochs after that. Never fires in a phase
/// without amplification.
inline bool reselection_due(const TrainingStrategy& s, int epoch) {
  const std::size_t idx = phase_index_at(s, epoch);
  if (!s.phases[idx].is_amp) return false;
  if (s.reselect.kind == Reselect::Kind::once_per_phase) return epoch == phase_start(s, idx);
  std::size_t first = idx;
  while (first > 0 && s.phases[first - 1].is_amp) --first;
  return (epoch - phase_start(s, first)) % s.reselect.k == 0;
}

/// Same phases with amplification switched off everywhere.
inline TrainingStrategy without_amplification(TrainingStrategy s) {
  for (PhaseSpec& p : s.phases) {
    p.is_amp = false;
    p.amp_factor = 1.0;
  }
  s.source.clear();
  return s;
}

}  // namespace ampli
