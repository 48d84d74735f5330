#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ampli/error.hpp"

namespace ampli {

enum class Measure { g, gprime };
enum class SelectionCase { one_sided, two_sided };

inline std::string_view to_string(Measure m) { return m == Measure::g ? "G" : "Gprime"; }
inline std::string_view to_string(SelectionCase c) { return c == SelectionCase::one_sided ? "one_sided" : "two_sided"; }

/// Accepts "G"/"g" and "Gprime"/"gprime"/"G'".
inline Measure parse_measure(std::string_view s) {
  if (s == "G" || s == "g") return Measure::g;
  if (s == "Gprime" || s == "gprime" || s == "G'" || s == "g'") return Measure::gprime;
  throw ConfigError("unknown measure '" + std::string(s) + "' (expected G or Gprime)");
}

/// Accepts "one_sided"/"one"/"1" and "two_sided"/"two"/"2".
inline SelectionCase parse_case(std::string_view s) {
  if (s == "one_sided" || s == "one" || s == "1" || s == "case1") return SelectionCase::one_sided;
  if (s == "two_sided" || s == "two" || s == "2" || s == "case2") return SelectionCase::two_sided;
  throw ConfigError("unknown case '" + std::string(s) + "' (expected one_sided or two_sided)");
}

struct SelectionPolicy {
  Measure measure = Measure::g;
  SelectionCase selection_case = SelectionCase::one_sided;
  double threshold = 1.0;

  void validate() const {
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) throw ConfigError("threshold must be a finite value >= 0");
  }

  friend bool operator==(const SelectionPolicy&, const SelectionPolicy&) = default;
};

/// Layers chosen for amplification, sorted by id.
struct AmpSet {
  std::vector<std::size_t> selected;
  int epoch_selected = 0;
  SelectionPolicy policy;

  bool empty() const noexcept { return selected.empty(); }
  bool contains(std::size_t id) const noexcept {
    for (std::size_t s : selected)
      if (s == id) return true;
    return false;
  }
};

/// One-sided keeps layers with z > threshold; two-sided keeps |z| > threshold.
/// Ties at the threshold are excluded.
inline AmpSet select_layers(std::span<const double> zscores, const SelectionPolicy& policy) {
  policy.validate();
  AmpSet out;
  out.policy = policy;
  for (std::size_t l = 0; l < zscores.size(); ++l) {
    const double z = zscores[l];
    if (!std::isfinite(z)) throw NonFiniteError("z-score for layer " + std::to_string(l) + " is not finite");
    const double v = policy.selection_case == SelectionCase::one_sided ? z : std::abs(z);
    if (v > policy.threshold) out.selected.push_back(l);
  }
  return out;
}

}  // namespace ampli
