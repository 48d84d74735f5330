#pragma once

// Datasets: seeded synthetic generators, CSV ingestion, train/test split
// and per-epoch minibatching.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ampli/error.hpp"
#include "ampli/rng.hpp"
#include "ampli/tensor.hpp"

namespace ampli {

struct Dataset {
  Tensor features;  // [N, D]
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::string name;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dims() const noexcept { return features.cols(); }

  void validate() const {
    if (labels.empty()) throw ConfigError("dataset '" + name + "' is empty");
    if (features.rows() != labels.size()) throw ShapeError(ShapeError::npos, "feature rows do not match label count");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_count)
        throw ConfigError("dataset '" + name + "': label " + std::to_string(y) + " out of range");
    if (!features.all_finite()) throw NonFiniteError("dataset '" + name + "' has non-finite features");
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.features == b.features && a.labels == b.labels && a.class_count == b.class_count && a.name == b.name;
  }
};

/// Rows `indices` of `ds`, in that order.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  const std::size_t d = ds.dims();
  out.features = Tensor({indices.size(), d});
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = ds.features.row(indices[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels.push_back(ds.labels[indices[k]]);
  }
  return out;
}

enum class SyntheticKind { two_moons, spirals, blobs };

inline SyntheticKind parse_synthetic_kind(std::string_view s) {
  if (s == "two_moons" || s == "moons") return SyntheticKind::two_moons;
  if (s == "spirals" || s == "spiral") return SyntheticKind::spirals;
  if (s == "blobs") return SyntheticKind::blobs;
  throw ConfigError("unknown synthetic dataset '" + std::string(s) + "'");
}

inline std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::two_moons: return "two_moons";
    case SyntheticKind::spirals: return "spirals";
    case SyntheticKind::blobs: return "blobs";
  }
  return "?";
}

/// Two-dimensional synthetic classification set, shuffled with `seed`.
///
///  two_moons: upper arc (cos t, sin t) and lower arc (1 - cos t, 0.5 - sin t),
///             t evenly spaced over [0, pi]; classes must be 2.
///  spirals:   one arm per class, radius r in (0, 1], angle 2*pi*k/C + 4r.
///  blobs:     one cluster per class centred on a circle of radius 3.
///
/// `noise` is the standard deviation of Gaussian jitter on each coordinate.
/// Class sizes differ by at most one.
inline Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::size_t classes, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (n < classes) throw ConfigError("synthetic dataset needs n >= classes");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
  if (kind == SyntheticKind::two_moons && classes != 2) throw ConfigError("two_moons has exactly 2 classes");

  Rng rng = make_rng(seed, 0xDA7A);
  Dataset ds;
  ds.name = std::string(to_string(kind));
  ds.class_count = classes;
  ds.features = Tensor({n, 2});
  ds.labels.resize(n);

  std::size_t row = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    const std::size_t count = n / classes + (k < n % classes ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      const double frac = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
      double x = 0.0, y = 0.0;
      switch (kind) {
        case SyntheticKind::two_moons: {
          const double t = std::numbers::pi * frac;
          if (k == 0) {
            x = std::cos(t);
            y = std::sin(t);
          } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
          }
          break;
        }
        case SyntheticKind::spirals: {
          const double r = static_cast<double>(i + 1) / static_cast<double>(count);
          const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes) + 4.0 * r;
          x = r * std::sin(t);
          y = r * std::cos(t);
          break;
        }
        case SyntheticKind::blobs: {
          const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
          x = 3.0 * std::cos(a);
          y = 3.0 * std::sin(a);
          break;
        }
      }
      if (noise > 0.0) {
        x += noise * normal(rng);
        y += noise * normal(rng);
      }
      ds.features(row, 0) = x;
      ds.features(row, 1) = y;
      ds.labels[row] = static_cast<int>(k);
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(std::span<std::size_t>(order), rng);
  Dataset shuffled = subset(ds, order);
  return shuffled;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Reads a header-first, comma-separated numeric table. Every column except
/// `label_column` becomes a feature in header order; the label column must
/// hold non-negative integers and the class count is max label + 1.
inline Dataset load_csv_dataset(std::istream& in, std::string_view label_column, std::string name = "csv") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  ++line_no;
  std::string_view header_line = line;
  if (header_line.starts_with("\xEF\xBB\xBF")) header_line.remove_prefix(3);
  const auto header_cells = detail::split_commas(header_line);
  const std::vector<std::string> header(header_cells.begin(), header_cells.end());
  std::size_t label_idx = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == label_column) label_idx = c;
  if (label_idx == header.size()) throw ParseError(1, "label column '" + std::string(label_column) + "' not found in header");
  if (header.size() < 2) throw ParseError(1, "need at least one feature column besides the label");

  const std::size_t d = header.size() - 1;
  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string_view cell = cells[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(line_no, "column '" + header[c] + "': '" + std::string(cell) + "' is not a finite number");
      }
      if (c == label_idx) {
        if (v < 0.0 || v != std::floor(v) || v > 1e6)
          throw ParseError(line_no, "label '" + std::string(cell) + "' is not a non-negative integer");
        labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw ParseError(line_no, "no data rows");

  Dataset ds;
  ds.name = std::move(name);
  ds.features = Tensor({labels.size(), d}, std::move(values));
  ds.class_count = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  ds.labels = std::move(labels);
  std::vector<std::size_t> counts(ds.class_count, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] == 0) ds.warnings.push_back("class " + std::to_string(k) + " has no samples");
  return ds;
}

inline Dataset load_csv_dataset(const std::string& path, std::string_view label_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file '" + path + "'");
  return load_csv_dataset(in, label_column, path);
}

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Seeded train/test partition. Stratified splits take
/// round(train_fraction * count) rows of every class.
inline Split split_dataset(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  Rng rng = make_rng(spec.seed, 0x5917);
  Split out;
  auto take = [&](std::vector<std::size_t> idx) {
    shuffle(std::span<std::size_t>(idx), rng);
    const auto k = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(idx.size())));
    out.train_indices.insert(out.train_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    out.test_indices.insert(out.test_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  };
  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (auto& idx : by_class) take(std::move(idx));
  } else {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(std::move(all));
  }
  if (out.train_indices.empty() || out.test_indices.empty())
    throw ConfigError("split leaves the train or test set empty");
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  out.train = subset(ds, out.train_indices);
  out.test = subset(ds, out.test_indices);
  return out;
}

struct Batch {
  Tensor features;
  std::vector<int> labels;
};

/// Shuffles `train` with a generator derived from (seed, epoch) and cuts it
/// into batches of `batch_size`; the last batch keeps the remainder.
inline std::vector<Batch> make_batches(const Dataset& train, std::size_t batch_size, std::uint64_t seed, int epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, 0xB000'0000ULL + static_cast<std::uint64_t>(epoch));
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    Dataset part = subset(train, std::span<const std::size_t>(order.data() + start, len));
    batches.push_back({std::move(part.features), std::move(part.labels)});
  }
  return batches;
}

struct SplitBatches {
  std::vector<Batch> train_batches;
  Dataset test;
};

inline SplitBatches split_and_batch(const Dataset& ds, const SplitSpec& split, std::size_t batch_size, int epoch) {
  Split s = split_dataset(ds, split);
  return {make_batches(s.train, batch_size, split.seed, epoch), std::move(s.test)};
}

}  // namespace ampli
