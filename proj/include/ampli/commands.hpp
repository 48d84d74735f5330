#pragma once

// The train / sweep / report commands behind the `ampli` executable.
// Exit codes: 0 success, 1 sweep finished with failed points, 2 bad
// configuration or inputs, 3 numerical abort.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "ampli/config.hpp"
#include "ampli/report_io.hpp"
#include "ampli/trainer.hpp"

namespace ampli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailedPoints = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

/// AMPLI_OUT_DIR, when set and non-empty, replaces the configured output root.
inline fs::path output_root(const RunConfig& c) {
  if (const char* env = std::getenv("AMPLI_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return c.output_dir;
}

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::string> selection_case;
  std::optional<std::string> measure;
};

struct RunOutcome {
  RunReport report;
  WrittenRun files;
  bool diverged = false;
};

/// Trains one configuration and writes its report files, including the
/// truncated report of a diverged run.
inline RunOutcome train_and_write(const RunConfig& config, const Dataset& data, const RunLabel& label, const fs::path& dir) {
  RunOutcome out;
  try {
    out.report = Trainer(config, data).run();
  } catch (TrainingAborted& e) {
    out.report = std::move(e.report);
    out.diverged = true;
  }
  out.files = write_run(dir, out.report, label, config);
  return out;
}

inline int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  RunConfig config;
  Dataset data;
  try {
    config = run_config_from_json(read_json_file(opt.config_path));
    if (opt.seed) config.seed = *opt.seed;
    if (opt.threshold) config.policy.threshold = *opt.threshold;
    if (opt.selection_case) config.policy.selection_case = parse_case(*opt.selection_case);
    if (opt.measure) config.policy.measure = parse_measure(*opt.measure);
    config.policy.validate();
    data = load_dataset(config.dataset);
    Trainer probe(config, data);  // validates shapes before any epoch runs
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const RunLabel label{config.run_id, config.strategy.any_amp() ? RunKind::amplified : RunKind::baseline, config.policy,
                       config.seed};
  try {
    const RunOutcome r = train_and_write(config, data, label, output_root(config));
    for (const std::string& w : r.report.warnings) err << "warning: " << w << '\n';
    if (r.diverged) {
      err << "numerical abort: " << r.report.abort_message << '\n';
      out << r.files.csv.string() << '\n' << r.files.json.string() << '\n';
      return kExitNumerical;
    }
    out << r.files.csv.string() << '\n' << r.files.json.string() << '\n';
    out << "best test accuracy " << format_double(r.report.best_test_acc()) << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

struct SweepOptions {
  std::string config_path;
  std::optional<std::string> thresholds;      // "A:B:S"
  std::optional<std::string> cases;           // comma-separated
  std::optional<std::string> measures;        // comma-separated
  std::optional<std::string> seeds;           // comma-separated
  std::optional<std::string> baseline_seeds;  // comma-separated; defaults to seeds
  unsigned jobs = 1;
};

/// One cell of the sweep grid.
struct SweepPoint {
  RunKind kind = RunKind::amplified;
  SelectionPolicy policy;
  std::uint64_t seed = 0;
};

/// Points grouped by seed, baseline first within each seed, so slow drift in
/// machine load hits amplified and baseline runs alike.
inline std::vector<SweepPoint> sweep_points(const SweepSpec& spec) {
  std::vector<SweepPoint> pts;
  for (std::uint64_t s : spec.baseline_seeds) pts.push_back({RunKind::baseline, {}, s});
  for (double t : threshold_grid(spec.thresholds))
    for (SelectionCase c : spec.cases)
      for (Measure m : spec.measures)
        for (std::uint64_t s : spec.seeds) pts.push_back({RunKind::amplified, {m, c, t}, s});
  std::stable_sort(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.seed < b.seed; });
  return pts;
}

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample standard deviation (0 for fewer than two values).
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

inline std::string point_key(const SweepPoint& p) {
  if (p.kind == RunKind::baseline) return "baseline";
  return format_threshold(p.policy.threshold) + "_" + std::string(to_string(p.policy.selection_case)) + "_" +
         std::string(to_string(p.policy.measure));
}

}  // namespace detail

inline int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  RunConfig base;
  SweepSpec spec;
  Dataset data;
  try {
    const json root = read_json_file(opt.config_path);
    base = run_config_from_json(root);
    spec = sweep_spec_from_json(root);
    if (opt.thresholds) spec.thresholds = parse_threshold_range(*opt.thresholds);
    if (opt.cases) {
      spec.cases.clear();
      for (const auto& c : split_list(*opt.cases)) spec.cases.push_back(parse_case(c));
    }
    if (opt.measures) {
      spec.measures.clear();
      for (const auto& m : split_list(*opt.measures)) spec.measures.push_back(parse_measure(m));
    }
    if (opt.seeds) spec.seeds = parse_seed_list(split_list(*opt.seeds));
    if (opt.baseline_seeds) spec.baseline_seeds = parse_seed_list(split_list(*opt.baseline_seeds));
    if (spec.baseline_seeds.empty()) spec.baseline_seeds = spec.seeds;
    spec.validate();
    if (!base.strategy.any_amp()) throw ConfigError("sweep strategy has no amplified phase");
    if (opt.jobs == 0) throw ConfigError("--jobs must be >= 1");
    data = load_dataset(base.dataset);
    Trainer probe(base, data);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const fs::path dir = output_root(base);
  const std::vector<SweepPoint> points = sweep_points(spec);
  const TrainingStrategy baseline_strategy = without_amplification(base.strategy);

  struct Result {
    bool ok = false;
    double best = 0.0;
    std::string message;
  };
  std::vector<Result> results(points.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const SweepPoint& p = points[i];
      RunConfig cfg = base;
      cfg.run_id = base.run_id + "-s" + std::to_string(p.seed);
      cfg.seed = p.seed;
      if (p.kind == RunKind::baseline)
        cfg.strategy = baseline_strategy;
      else
        cfg.policy = p.policy;
      const RunLabel label{cfg.run_id, p.kind, cfg.policy, p.seed};
      Result& r = results[i];
      try {
        const RunOutcome o = train_and_write(cfg, data, label, dir);
        r.ok = !o.diverged;
        r.best = o.report.best_test_acc();
        r.message = o.diverged ? o.report.abort_message : "";
      } catch (const std::exception& e) {
        r.message = e.what();
      }
      std::lock_guard lock(log_mutex);
      if (!r.ok) err << "point " << label.stem() << " failed: " << r.message << '\n';
    }
  };
  {
    std::vector<std::jthread> pool;
    const unsigned n = std::min<unsigned>(opt.jobs, static_cast<unsigned>(points.size()));
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
  }

  // Aggregate per (threshold, case, measure) over seeds, completed points only.
  std::map<std::string, std::pair<SweepPoint, std::vector<double>>> groups;
  std::map<std::string, std::size_t> failures;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string key = detail::point_key(points[i]);
    if (!groups.contains(key)) {
      groups[key].first = points[i];
      order.push_back(key);
    }
    if (results[i].ok)
      groups[key].second.push_back(results[i].best);
    else
      ++failures[key];
  }
  const detail::MeanStd baseline = detail::mean_std(groups["baseline"].second);

  fs::create_directories(dir);
  const fs::path agg_path = dir / (base.run_id + "_sweep.csv");
  const fs::path plot_path = dir / (base.run_id + "_sweep_plot.csv");
  {
    std::ofstream agg(agg_path);
    std::ofstream plot(plot_path);
    agg << "kind,threshold,case,measure,completed,failed,mean_best_test_acc,std_best_test_acc\n";
    plot << "threshold,case,measure,mean_best_test_acc,std_best_test_acc,baseline_mean_best_test_acc\n";
    for (const std::string& key : order) {
      const auto& [p, values] = groups[key];
      const detail::MeanStd ms = detail::mean_std(values);
      if (p.kind == RunKind::baseline) {
        agg << "baseline,,,," << ms.n << ',' << failures[key] << ',' << format_double(ms.mean) << ','
            << format_double(ms.std) << '\n';
        continue;
      }
      agg << "amplified," << format_double(p.policy.threshold) << ',' << to_string(p.policy.selection_case) << ','
          << to_string(p.policy.measure) << ',' << ms.n << ',' << failures[key] << ',' << format_double(ms.mean) << ','
          << format_double(ms.std) << '\n';
      if (ms.n > 0) {
        plot << format_double(p.policy.threshold) << ',' << to_string(p.policy.selection_case) << ','
             << to_string(p.policy.measure) << ',' << format_double(ms.mean) << ',' << format_double(ms.std) << ','
             << (baseline.n > 0 ? format_double(baseline.mean) : "") << '\n';
      }
    }
  }

  std::size_t failed = 0;
  for (const Result& r : results) failed += r.ok ? 0 : 1;
  out << points.size() << " runs (" << spec.point_count() << " amplified points, " << spec.baseline_seeds.size()
      << " baselines), " << failed << " failed\n"
      << agg_path.string() << '\n'
      << plot_path.string() << '\n';
  return failed == 0 ? kExitOk : kExitFailedPoints;
}

struct ReportOptions {
  std::string in_dir;
  std::string out_dir;
};

/// Overhead of `amp` relative to `base`: (amp - base) / base.
inline double relative_overhead(double amp, double base) { return (amp - base) / base; }

inline int cmd_report(const ReportOptions& opt, std::ostream& out, std::ostream& err) {
  std::vector<LoadedRun> runs;
  try {
    if (!fs::is_directory(opt.in_dir)) throw ConfigError("input directory '" + opt.in_dir + "' does not exist");
    runs = load_runs(opt.in_dir);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::erase_if(runs, [](const LoadedRun& r) { return !r.completed(); });
  if (runs.empty()) {
    err << "error: no completed runs in '" << opt.in_dir << "'\n";
    return kExitConfig;
  }

  std::vector<const LoadedRun*> base_runs;
  std::map<std::string, std::vector<const LoadedRun*>> amp_groups;
  for (const LoadedRun& r : runs) {
    if (r.baseline()) {
      base_runs.push_back(&r);
    } else {
      const json& s = r.summary;
      const std::string key = format_threshold(s.value("threshold", 0.0)) + "_" + s.value("case", std::string()) + "_" +
                              s.value("measure", std::string());
      amp_groups[key].push_back(&r);
    }
  }

  auto mean_of = [](const std::vector<const LoadedRun*>& rs, auto field) {
    std::vector<double> v;
    for (const LoadedRun* r : rs) v.push_back(field(*r));
    return detail::mean_std(v);
  };

  std::string best_key;
  double best_mean = -1.0;
  for (const auto& [key, rs] : amp_groups) {
    const double m = mean_of(rs, [](const LoadedRun& r) { return r.best_test_acc(); }).mean;
    if (m > best_mean) {
      best_mean = m;
      best_key = key;
    }
  }

  const fs::path dir = opt.out_dir;
  fs::create_directories(dir);

  // (a) mean accuracy curves, baseline vs. best amplified configuration
  {
    const std::vector<const LoadedRun*> empty;
    const auto& amp_runs = best_key.empty() ? empty : amp_groups[best_key];
    std::size_t epochs = 0;
    for (const LoadedRun& r : runs) epochs = std::max(epochs, r.epochs.size());
    auto mean_at = [](const std::vector<const LoadedRun*>& rs, std::size_t e, bool test) -> std::string {
      std::vector<double> v;
      for (const LoadedRun* r : rs)
        if (e < r->epochs.size()) v.push_back(test ? r->epochs[e].test_acc : r->epochs[e].train_acc);
      return v.empty() ? "" : format_double(detail::mean_std(v).mean);
    };
    std::ofstream f(dir / "curves.csv");
    f << "epoch,baseline_train_acc,baseline_test_acc,amplified_train_acc,amplified_test_acc\n";
    for (std::size_t e = 0; e < epochs; ++e) {
      f << e + 1 << ',' << mean_at(base_runs, e, false) << ',' << mean_at(base_runs, e, true) << ','
        << mean_at(amp_runs, e, false) << ',' << mean_at(amp_runs, e, true) << '\n';
    }
  }

  // (b) ratio and z-score traces per layer per analysis epoch
  {
    std::ofstream f(dir / "ratios.csv");
    f << "stem,epoch,layer_id,G,Gprime,z_G,z_Gprime\n";
    for (const LoadedRun& r : runs) {
      for (const json& x : r.summary.value("ratios", json::array())) {
        f << r.stem() << ',' << x.at("epoch").get<int>() << ',' << x.at("layer_id").get<std::size_t>() << ','
          << format_double(x.at("G").get<double>()) << ',' << format_double(x.at("Gprime").get<double>()) << ','
          << format_double(x.at("z_G").get<double>()) << ',' << format_double(x.at("z_Gprime").get<double>()) << '\n';
      }
    }
  }

  // (c) wall-clock comparison against the baseline mean
  {
    auto seconds = [](const LoadedRun& r) { return r.total_seconds(); };
    const detail::MeanStd base = mean_of(base_runs, seconds);
    std::ofstream f(dir / "timing.csv");
    f << "configuration,runs,mean_minutes,baseline_mean_minutes,overhead,overhead_pct\n";
    if (base.n > 0) f << "baseline," << base.n << ',' << format_double(base.mean / 60.0) << ',' << format_double(base.mean / 60.0) << ",0,0\n";
    for (const auto& [key, rs] : amp_groups) {
      const detail::MeanStd amp = mean_of(rs, seconds);
      f << key << ',' << amp.n << ',' << format_double(amp.mean / 60.0) << ',';
      if (base.n > 0 && base.mean > 0.0) {
        const double o = relative_overhead(amp.mean, base.mean);
        f << format_double(base.mean / 60.0) << ',' << format_double(o) << ',' << format_double(100.0 * o) << '\n';
      } else {
        f << ",,\n";
      }
    }
  }

  out << runs.size() << " runs (" << base_runs.size() << " baseline)";
  if (!best_key.empty()) out << ", best amplified configuration " << best_key;
  out << '\n';
  return kExitOk;
}

}  // namespace ampli
