#pragma once

// JSON run configuration and sweep specification.
//
// {
//   "run_id": "moons",
//   "dataset":  {"kind": "two_moons", "n": 2000, "noise": 0.25, "classes": 2, "seed": 0},
//   "split":    {"train_fraction": 0.8, "seed": 0, "stratified": true},
//   "network":  {"depth": 8, "width": 32, "batchnorm": true},
//   "batch_size": 32,
//   "strategy": {"phases": "[(10,0.1,0,1),(20,0.1,1,2),(26,0.01,1,2),(30,0.01,0,1)]",
//                "reselect": "once_per_phase"},
//   "policy":   {"measure": "G", "case": "one_sided", "threshold": 1.0},
//   "seed": 1,
//   "output_dir": "out",
//   "sweep":    {"thresholds": "0.7:2.5:0.1", "cases": ["one_sided"], "measures": ["G"],
//                "seeds": [1, 2, 3], "baseline_seeds": [1, 2, 3]}
// }

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ampli/amp_sched.hpp"
#include "ampli/amp_select.hpp"
#include "ampli/error.hpp"
#include "ampli/trainer.hpp"

namespace ampli {

using json = nlohmann::json;

namespace detail {

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  const json& s = root.at(key);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return s;
}

}  // namespace detail

inline std::string format_phases(const std::vector<PhaseSpec>& phases) {
  std::string out = "[";
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const PhaseSpec& p = phases[i];
    if (i > 0) out += ", ";
    out += "(" + std::to_string(p.end_epoch) + ", " + json(p.lr).dump() + ", " + (p.is_amp ? "1" : "0") + ", " +
           json(p.amp_factor).dump() + ")";
  }
  return out + "]";
}

inline TrainingStrategy strategy_from_json(const json& s) {
  const Reselect reselect = parse_reselect(detail::get_or<std::string>(s, "reselect", "once_per_phase"));
  if (!s.contains("phases")) throw ConfigError("strategy needs a 'phases' list");
  const json& phases = s.at("phases");
  if (phases.is_string()) return parse_strategy(phases.get<std::string>(), reselect);
  if (phases.is_array()) return parse_strategy(phases.dump(), reselect);
  throw ConfigError("strategy 'phases' must be a string or an array");
}

inline RunConfig run_config_from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.run_id = detail::get_or<std::string>(root, "run_id", c.run_id);
  if (c.run_id.empty() || c.run_id.find_first_of("/\\") != std::string::npos)
    throw ConfigError("run_id must be non-empty and free of path separators");

  const json& d = detail::section(root, "dataset");
  c.dataset.kind = detail::get_or<std::string>(d, "kind", c.dataset.kind);
  c.dataset.n = detail::get_or<std::size_t>(d, "n", c.dataset.n);
  c.dataset.noise = detail::get_or<double>(d, "noise", c.dataset.noise);
  c.dataset.classes = detail::get_or<std::size_t>(d, "classes", c.dataset.classes);
  c.dataset.seed = detail::get_or<std::uint64_t>(d, "seed", c.dataset.seed);
  c.dataset.csv_path = detail::get_or<std::string>(d, "path", c.dataset.csv_path);
  c.dataset.label_column = detail::get_or<std::string>(d, "label_column", c.dataset.label_column);
  if (c.dataset.kind == "csv" && c.dataset.csv_path.empty()) throw ConfigError("csv dataset needs a 'path'");
  if (c.dataset.kind != "csv") parse_synthetic_kind(c.dataset.kind);

  const json& sp = detail::section(root, "split");
  c.split.train_fraction = detail::get_or<double>(sp, "train_fraction", c.split.train_fraction);
  c.split.seed = detail::get_or<std::uint64_t>(sp, "seed", c.split.seed);
  c.split.stratified = detail::get_or<bool>(sp, "stratified", c.split.stratified);

  const json& n = detail::section(root, "network");
  if (n.contains("hidden")) {
    c.network.hidden = detail::get_or<std::vector<std::size_t>>(n, "hidden", {});
  } else if (n.contains("depth") || n.contains("width")) {
    const auto depth = detail::get_or<std::size_t>(n, "depth", 2);
    const auto width = detail::get_or<std::size_t>(n, "width", 32);
    c.network.hidden.assign(depth, width);
  }
  for (std::size_t w : c.network.hidden)
    if (w == 0) throw ConfigError("network widths must be positive");
  c.network.batchnorm = detail::get_or<bool>(n, "batchnorm", c.network.batchnorm);
  c.network.input_width = detail::get_or<std::size_t>(n, "input_width", 0);
  c.network.classes = detail::get_or<std::size_t>(n, "classes", 0);

  const auto batch = detail::get_or<long long>(root, "batch_size", static_cast<long long>(c.batch_size));
  if (batch < 1) throw ConfigError("batch_size must be >= 1");
  c.batch_size = static_cast<std::size_t>(batch);

  if (!root.contains("strategy")) throw ConfigError("config needs a 'strategy' section");
  c.strategy = strategy_from_json(detail::section(root, "strategy"));

  const json& p = detail::section(root, "policy");
  c.policy.measure = parse_measure(detail::get_or<std::string>(p, "measure", "G"));
  c.policy.selection_case = parse_case(detail::get_or<std::string>(p, "case", "one_sided"));
  c.policy.threshold = detail::get_or<double>(p, "threshold", c.policy.threshold);
  c.policy.validate();

  c.seed = detail::get_or<std::uint64_t>(root, "seed", c.seed);
  c.output_dir = detail::get_or<std::string>(root, "output_dir", c.output_dir);
  c.trace_every_epoch = detail::get_or<bool>(root, "trace_every_epoch", c.trace_every_epoch);
  return c;
}

/// Fully resolved configuration, defaults applied.
inline json to_json(const RunConfig& c) {
  json dataset = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "csv") {
    dataset["path"] = c.dataset.csv_path;
    dataset["label_column"] = c.dataset.label_column;
  } else {
    dataset["n"] = c.dataset.n;
    dataset["noise"] = c.dataset.noise;
    dataset["classes"] = c.dataset.classes;
    dataset["seed"] = c.dataset.seed;
  }
  json network = {{"hidden", c.network.hidden}, {"batchnorm", c.network.batchnorm}};
  if (c.network.input_width != 0) network["input_width"] = c.network.input_width;
  if (c.network.classes != 0) network["classes"] = c.network.classes;
  return {
      {"run_id", c.run_id},
      {"dataset", dataset},
      {"split", {{"train_fraction", c.split.train_fraction}, {"seed", c.split.seed}, {"stratified", c.split.stratified}}},
      {"network", network},
      {"batch_size", c.batch_size},
      {"strategy", {{"phases", c.strategy.source.empty() ? format_phases(c.strategy.phases) : c.strategy.source},
                    {"reselect", c.strategy.reselect.to_string()}}},
      {"policy",
       {{"measure", to_string(c.policy.measure)},
        {"case", to_string(c.policy.selection_case)},
        {"threshold", c.policy.threshold}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"trace_every_epoch", c.trace_every_epoch},
  };
}

struct ThresholdRange {
  double start = 1.0;
  double stop = 1.0;
  double step = 0.1;
};

/// "A:B:S", e.g. "0.7:2.5:0.1".
inline ThresholdRange parse_threshold_range(std::string_view s) {
  ThresholdRange r;
  double* fields[] = {&r.start, &r.stop, &r.step};
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t colon = k < 2 ? s.find(':', pos) : s.size();
    if (colon == std::string_view::npos) throw ConfigError("thresholds must look like START:STOP:STEP");
    const std::string_view part = s.substr(pos, colon - pos);
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), *fields[k]);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size())
      throw ConfigError("thresholds: '" + std::string(part) + "' is not a number");
    pos = colon + 1;
  }
  return r;
}

/// Inclusive grid start, start + step, ..., stop. Each point is computed as
/// start + i * step and rounded to 12 decimals so 0.7 + 3 * 0.1 prints as 1.0.
inline std::vector<double> threshold_grid(const ThresholdRange& r) {
  if (!(r.step > 0.0)) throw ConfigError("threshold step must be > 0");
  if (!(r.start <= r.stop)) throw ConfigError("threshold start must be <= stop");
  if (!(r.start >= 0.0)) throw ConfigError("thresholds must be >= 0");
  const auto count = static_cast<std::size_t>(std::floor((r.stop - r.start) / r.step + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = r.start + static_cast<double>(i) * r.step;
    out.push_back(std::round(t * 1e12) / 1e12);
  }
  return out;
}

struct SweepSpec {
  ThresholdRange thresholds;
  std::vector<SelectionCase> cases;
  std::vector<Measure> measures;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> baseline_seeds;

  void validate() const {
    threshold_grid(thresholds);
    if (cases.empty()) throw ConfigError("sweep needs at least one case");
    if (measures.empty()) throw ConfigError("sweep needs at least one measure");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  }

  std::size_t point_count() const {
    return threshold_grid(thresholds).size() * cases.size() * measures.size() * seeds.size();
  }
};

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string_view item = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::vector<std::string>& items) {
  std::vector<std::uint64_t> out;
  for (const std::string& it : items) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(it.data(), it.data() + it.size(), v);
    if (ec != std::errc{} || ptr != it.data() + it.size()) throw ConfigError("seed '" + it + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

/// Reads the "sweep" section; missing fields stay empty so CLI flags can
/// fill them in before validate().
inline SweepSpec sweep_spec_from_json(const json& root) {
  SweepSpec s;
  const json& sw = detail::section(root, "sweep");
  if (sw.contains("thresholds")) {
    const json& t = sw.at("thresholds");
    if (t.is_string())
      s.thresholds = parse_threshold_range(t.get<std::string>());
    else if (t.is_object())
      s.thresholds = {detail::get_or<double>(t, "start", 1.0), detail::get_or<double>(t, "stop", 1.0),
                      detail::get_or<double>(t, "step", 0.1)};
    else
      throw ConfigError("sweep 'thresholds' must be \"A:B:S\" or {start, stop, step}");
  }
  for (const auto& c : detail::get_or<std::vector<std::string>>(sw, "cases", {})) s.cases.push_back(parse_case(c));
  for (const auto& m : detail::get_or<std::vector<std::string>>(sw, "measures", {})) s.measures.push_back(parse_measure(m));
  s.seeds = detail::get_or<std::vector<std::uint64_t>>(sw, "seeds", {});
  s.baseline_seeds = detail::get_or<std::vector<std::uint64_t>>(sw, "baseline_seeds", {});
  return s;
}

}  // namespace ampli
