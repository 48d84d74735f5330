#pragma once

// On-disk run reports. Each run writes two files sharing one stem,
// {run_id}_{threshold}_{case}_{measure}:
//
//   .csv   one row per epoch:
//          epoch,phase,lr,amp_active,amp_factor,selected,train_loss,train_acc,test_acc,seconds
//          (selected layer ids joined by ';')
//   .json  summary, resolved config, ratio trace and selection events
//
// Baseline runs use "baseline" for the threshold and "none" for case and
// measure.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ampli/config.hpp"
#include "ampli/data.hpp"
#include "ampli/error.hpp"
#include "ampli/trainer.hpp"

namespace ampli {

namespace fs = std::filesystem;

/// Shortest text that reads back as the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string format_threshold(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

enum class RunKind { amplified, baseline };

struct RunLabel {
  std::string run_id;
  RunKind kind = RunKind::amplified;
  SelectionPolicy policy;
  std::uint64_t seed = 0;

  std::string stem() const {
    if (kind == RunKind::baseline) return run_id + "_baseline_none_none";
    return run_id + "_" + format_threshold(policy.threshold) + "_" + std::string(to_string(policy.selection_case)) + "_" +
           std::string(to_string(policy.measure));
  }
};

inline std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

inline std::vector<std::size_t> parse_ids(std::string_view s, std::size_t line) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t semi = s.find(';', pos);
    if (semi == std::string_view::npos) semi = s.size();
    const std::string_view item = s.substr(pos, semi - pos);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
      throw ParseError(line, "bad layer id '" + std::string(item) + "'");
    out.push_back(v);
    pos = semi + 1;
  }
  return out;
}

inline constexpr const char* kEpochCsvHeader =
    "epoch,phase,lr,amp_active,amp_factor,selected,train_loss,train_acc,test_acc,seconds";

inline void write_epochs_csv(std::ostream& out, const std::vector<EpochRecord>& epochs) {
  out << kEpochCsvHeader << '\n';
  for (const EpochRecord& e : epochs) {
    out << e.epoch << ',' << e.phase << ',' << format_double(e.lr) << ',' << (e.amp_active ? 1 : 0) << ','
        << format_double(e.amp_factor) << ',' << join_ids(e.selected) << ',' << format_double(e.train_loss) << ','
        << format_double(e.train_acc) << ',' << format_double(e.test_acc) << ',' << format_double(e.seconds) << '\n';
  }
}

inline std::vector<EpochRecord> read_epochs_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kEpochCsvHeader) throw ParseError(1, "unexpected epoch CSV header");
  std::vector<EpochRecord> out;
  std::size_t line_no = 1;
  auto num = [&](std::string_view cell) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
      throw ParseError(line_no, "'" + std::string(cell) + "' is not a number");
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto c = detail::split_commas(line);
    if (c.size() != 10) throw ParseError(line_no, "expected 10 cells, found " + std::to_string(c.size()));
    EpochRecord e;
    e.epoch = static_cast<int>(num(c[0]));
    e.phase = static_cast<std::size_t>(num(c[1]));
    e.lr = num(c[2]);
    e.amp_active = num(c[3]) != 0.0;
    e.amp_factor = num(c[4]);
    e.selected = parse_ids(c[5], line_no);
    e.train_loss = num(c[6]);
    e.train_acc = num(c[7]);
    e.test_acc = num(c[8]);
    e.seconds = num(c[9]);
    out.push_back(std::move(e));
  }
  return out;
}

inline json summary_json(const RunReport& r, const RunLabel& label, const RunConfig& config) {
  json ratios = json::array();
  for (const RatioRecord& x : r.ratios)
    ratios.push_back({{"epoch", x.epoch}, {"layer_id", x.layer_id}, {"G", x.g}, {"Gprime", x.gprime}, {"z_G", x.z_g},
                      {"z_Gprime", x.z_gprime}});
  json selections = json::array();
  for (const SelectionEvent& s : r.selections) selections.push_back({{"epoch", s.epoch}, {"layers", s.layers}});
  const bool baseline = label.kind == RunKind::baseline;
  return {
      {"run_id", label.run_id},
      {"stem", label.stem()},
      {"kind", baseline ? "baseline" : "amplified"},
      {"threshold", baseline ? json(nullptr) : json(label.policy.threshold)},
      {"case", baseline ? json(nullptr) : json(to_string(label.policy.selection_case))},
      {"measure", baseline ? json(nullptr) : json(to_string(label.policy.measure))},
      {"seed", label.seed},
      {"status", r.aborted ? "diverged" : "completed"},
      {"abort_message", r.abort_message},
      {"epochs_completed", r.epochs.size()},
      {"best_test_acc", r.best_test_acc()},
      {"final_test_acc", r.epochs.empty() ? 0.0 : r.epochs.back().test_acc},
      {"total_seconds", r.total_seconds},
      {"total_minutes", r.total_minutes()},
      {"instrument_seconds", r.instrument_seconds},
      {"warnings", r.warnings},
      {"config", to_json(config)},
      {"ratios", ratios},
      {"selections", selections},
  };
}

struct WrittenRun {
  fs::path csv;
  fs::path json;
};

inline WrittenRun write_run(const fs::path& dir, const RunReport& r, const RunLabel& label, const RunConfig& config) {
  fs::create_directories(dir);
  WrittenRun w{dir / (label.stem() + ".csv"), dir / (label.stem() + ".json")};
  {
    std::ofstream out(w.csv);
    if (!out) throw Error("cannot write " + w.csv.string());
    write_epochs_csv(out, r.epochs);
  }
  {
    std::ofstream out(w.json);
    if (!out) throw Error("cannot write " + w.json.string());
    out << summary_json(r, label, config).dump(2) << '\n';
  }
  return w;
}

/// A run read back from disk.
struct LoadedRun {
  json summary;
  std::vector<EpochRecord> epochs;

  bool baseline() const { return summary.value("kind", "") == "baseline"; }
  bool completed() const { return summary.value("status", "") == "completed"; }
  double best_test_acc() const { return summary.value("best_test_acc", 0.0); }
  double total_seconds() const { return summary.value("total_seconds", 0.0); }
  std::string stem() const { return summary.value("stem", ""); }
};

/// Reads a summary and its epoch CSV. Returns nothing when the JSON file is
/// not a run summary; throws on malformed run files.
inline std::optional<LoadedRun> try_load_run(const fs::path& json_path) {
  LoadedRun run;
  {
    std::ifstream in(json_path);
    if (!in) throw Error("cannot open " + json_path.string());
    try {
      in >> run.summary;
    } catch (const json::exception& e) {
      throw ParseError(0, json_path.string() + ": " + e.what());
    }
  }
  if (!run.summary.is_object() || !run.summary.contains("kind") || !run.summary.contains("stem")) return std::nullopt;
  fs::path csv = json_path;
  csv.replace_extension(".csv");
  std::ifstream in(csv);
  if (!in) throw Error("missing epoch file " + csv.string());
  run.epochs = read_epochs_csv(in);
  return run;
}

/// Every run summary (*.json with a matching .csv) in `dir`, sorted by path.
inline std::vector<LoadedRun> load_runs(const fs::path& dir) {
  std::vector<LoadedRun> runs;
  if (!fs::is_directory(dir)) return runs;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() != ".json") continue;
    fs::path csv = p;
    csv.replace_extension(".csv");
    if (fs::exists(csv)) paths.push_back(p);
  }
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths)
    if (auto r = try_load_run(p)) runs.push_back(std::move(*r));
  return runs;
}

}  // namespace ampli
