#pragma once

// Training loop with gradient recording, layer selection and amplification.
//
// Per epoch: look up the phase; if a reselection is due this epoch it is an
// analysis epoch, trained without amplification while every minibatch
// gradient is recorded. At its end the ratios are computed, normalized and
// thresholded, and the resulting layer set is amplified from the next epoch
// until the next reselection or the end of the amplified phases.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ampli/amp_sched.hpp"
#include "ampli/amp_select.hpp"
#include "ampli/data.hpp"
#include "ampli/error.hpp"
#include "ampli/grad_stats.hpp"
#include "ampli/nn.hpp"

namespace ampli {

struct NetworkConfig {
  std::vector<std::size_t> hidden{32, 32};
  bool batchnorm = true;
  std::size_t input_width = 0;  // 0: take from the dataset
  std::size_t classes = 0;      // 0: take from the dataset
};

struct DatasetConfig {
  std::string kind = "two_moons";  // two_moons | spirals | blobs | csv
  std::size_t n = 1000;
  double noise = 0.1;
  std::size_t classes = 2;
  std::uint64_t seed = 0;
  std::string csv_path;
  std::string label_column = "label";
};

struct RunConfig {
  std::string run_id = "run";
  DatasetConfig dataset;
  SplitSpec split;
  NetworkConfig network;
  std::size_t batch_size = 32;
  TrainingStrategy strategy;
  SelectionPolicy policy;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool trace_every_epoch = false;  // record ratios even when no reselection is due
};

inline Dataset load_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == "csv") return load_csv_dataset(cfg.csv_path, cfg.label_column);
  return gen_synthetic(parse_synthetic_kind(cfg.kind), cfg.n, cfg.noise, cfg.classes, cfg.seed);
}

struct EpochRecord {
  int epoch = 0;
  std::size_t phase = 0;
  double lr = 0.0;
  bool amp_active = false;
  double amp_factor = 1.0;
  std::vector<std::size_t> selected;  // layers amplified during this epoch
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// One row of the per-layer ratio trace.
struct RatioRecord {
  int epoch = 0;
  std::size_t layer_id = 0;
  double g = 0.0;
  double gprime = 0.0;
  double z_g = 0.0;
  double z_gprime = 0.0;

  friend bool operator==(const RatioRecord&, const RatioRecord&) = default;
};

/// Layer set chosen from the gradients of `epoch`, applied from epoch + 1.
struct SelectionEvent {
  int epoch = 0;
  std::vector<std::size_t> layers;

  friend bool operator==(const SelectionEvent&, const SelectionEvent&) = default;
};

struct RunReport {
  std::string run_id;
  std::vector<EpochRecord> epochs;
  std::vector<RatioRecord> ratios;
  std::vector<SelectionEvent> selections;
  std::vector<std::string> warnings;
  double total_seconds = 0.0;
  double instrument_seconds = 0.0;  // gradient recording plus ratio computation
  bool aborted = false;
  std::string abort_message;

  double best_test_acc() const noexcept {
    double best = 0.0;
    for (const EpochRecord& e : epochs) best = std::max(best, e.test_acc);
    return best;
  }
  double total_minutes() const noexcept { return total_seconds / 60.0; }
};

/// Non-finite loss or gradient. Carries the report up to the last completed
/// epoch once it has passed through Trainer::run.
class TrainingAborted : public Error {
 public:
  TrainingAborted(int epoch, std::size_t iteration, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ", iteration " + std::to_string(iteration) + ": " + what),
        epoch_(epoch),
        iteration_(iteration) {}

  int epoch() const noexcept { return epoch_; }
  std::size_t iteration() const noexcept { return iteration_; }

  RunReport report;

 private:
  int epoch_;
  std::size_t iteration_;
};

/// Multiplies the gradients of the selected layers by `factor` in place.
inline void amplify_in_place(GradientSet& grads, const AmpSet& amp, double factor) {
  if (!(factor >= 1.0)) throw Error("amplification factor must be >= 1");
  for (std::size_t id : amp.selected) {
    if (id >= grads.layer_count()) throw Error("amplified layer id " + std::to_string(id) + " not in gradient set");
    for (double& g : grads[id]) g *= factor;
  }
}

inline GradientSet apply_amplification(GradientSet grads, const AmpSet& amp, double factor) {
  amplify_in_place(grads, amp, factor);
  return grads;
}

/// Fraction of rows whose argmax logit equals the label, in eval mode.
inline double evaluate(const Network& net, const Dataset& ds) {
  if (ds.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  constexpr std::size_t chunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t len = std::min(chunk, ds.size() - start);
    idx.resize(len);
    for (std::size_t k = 0; k < len; ++k) idx[k] = start + k;
    const Dataset part = subset(ds, idx);
    const Tensor logits = forward(net, part.features, Mode::eval).logits;
    for (std::size_t r = 0; r < len; ++r) {
      const auto row = logits.row(r);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == part.labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct EpochPlan {
  double lr = 0.1;
  const AmpSet* amp = nullptr;  // null or empty: no amplification
  double factor = 1.0;
  GradientAccumulator* recorder = nullptr;
  int epoch = 0;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  double instrument_seconds = 0.0;
};

/// One pass over `batches`: forward, loss, backward, record the raw gradient,
/// amplify the selected layers, refresh batchnorm running statistics, SGD.
inline EpochStats train_epoch(Network& net, std::span<const Batch> batches, const EpochPlan& plan) {
  using clock = std::chrono::steady_clock;
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t seen = 0, correct = 0;
  for (std::size_t it = 0; it < batches.size(); ++it) {
    const Batch& b = batches[it];
    ForwardResult fr = forward(net, b.features, Mode::train);
    LossResult lr = loss_softmax_ce(fr.logits, b.labels);
    if (!std::isfinite(lr.loss)) throw TrainingAborted(plan.epoch, it, "non-finite loss");
    GradientSet grads = backward(net, fr.cache, lr.dlogits);
    for (const auto& g : grads.layers)
      for (double v : g)
        if (!std::isfinite(v)) throw TrainingAborted(plan.epoch, it, "non-finite gradient");

    if (plan.recorder != nullptr) {
      const auto t0 = clock::now();
      plan.recorder->record(grads);
      stats.instrument_seconds += std::chrono::duration<double>(clock::now() - t0).count();
    }
    if (plan.amp != nullptr && !plan.amp->empty()) amplify_in_place(grads, *plan.amp, plan.factor);
    update_running_stats(net, fr.cache);
    sgd_step(net, grads, plan.lr);

    const std::size_t rows = b.labels.size();
    loss_sum += lr.loss * static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = fr.logits.row(r);
      if (static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == b.labels[r]) ++correct;
    }
    seen += rows;
  }
  if (seen > 0) {
    stats.loss = loss_sum / static_cast<double>(seen);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  }
  return stats;
}

class Trainer {
 public:
  using EpochObserver = std::function<void(const EpochRecord&, const Network&)>;

  Trainer(RunConfig config, Dataset data) : config_(std::move(config)), data_(std::move(data)) {
    data_.validate();
    config_.strategy.validate();
    config_.policy.validate();
    if (config_.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    for (std::size_t w : config_.network.hidden)
      if (w == 0) throw ConfigError("hidden widths must be positive");
    if (config_.network.input_width != 0 && config_.network.input_width != data_.dims()) {
      throw ConfigError("network input width " + std::to_string(config_.network.input_width) + " does not match dataset width " +
                        std::to_string(data_.dims()));
    }
    if (config_.network.classes != 0 && config_.network.classes != data_.class_count) {
      throw ConfigError("network has " + std::to_string(config_.network.classes) + " outputs but dataset has " +
                        std::to_string(data_.class_count) + " classes");
    }
    split_ = split_dataset(data_, config_.split);
    net_ = make_mlp({data_.dims(), config_.network.hidden, data_.class_count, config_.network.batchnorm}, config_.seed);
  }

  void on_epoch_end(EpochObserver obs) { observer_ = std::move(obs); }

  const Network& network() const noexcept { return net_; }
  const Split& split() const noexcept { return split_; }

  /// Runs every phase. Throws TrainingAborted (carrying the partial report)
  /// on a non-finite loss or gradient.
  RunReport run() {
    using clock = std::chrono::steady_clock;
    const auto run_start = clock::now();
    RunReport report;
    report.run_id = config_.run_id;
    report.warnings = data_.warnings;

    const TrainingStrategy& strategy = config_.strategy;
    GradientAccumulator acc(net_.param_sizes());
    std::optional<AmpSet> current;

    for (int epoch = 1; epoch <= strategy.total_epochs(); ++epoch) {
      const auto epoch_start = clock::now();
      const std::size_t phase_idx = phase_index_at(strategy, epoch);
      const PhaseSpec& phase = strategy.phases[phase_idx];
      const bool analysis = reselection_due(strategy, epoch);
      const bool tracing = analysis || config_.trace_every_epoch;
      if (!phase.is_amp) current.reset();

      const AmpSet* applied = (phase.is_amp && !analysis && current) ? &*current : nullptr;
      EpochPlan plan{phase.lr, applied, phase.amp_factor, tracing ? &acc : nullptr, epoch};
      if (tracing) acc.reset();

      const std::vector<Batch> batches = make_batches(split_.train, config_.batch_size, config_.seed, epoch);
      EpochStats stats;
      try {
        stats = train_epoch(net_, batches, plan);
      } catch (TrainingAborted& e) {
        report.aborted = true;
        report.abort_message = e.what();
        report.total_seconds = std::chrono::duration<double>(clock::now() - run_start).count();
        e.report = std::move(report);
        throw;
      }
      report.instrument_seconds += stats.instrument_seconds;

      if (tracing) {
        const auto t0 = clock::now();
        const LayerRatios r = compute_ratios(acc);
        if (analysis) {
          current = select_layers(config_.policy.measure == Measure::g ? r.z_g : r.z_gprime, config_.policy);
          current->epoch_selected = epoch;
        }
        report.instrument_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        for (std::size_t id = 0; id < r.layer_count(); ++id)
          report.ratios.push_back({epoch, id, r.g[id], r.gprime[id], r.z_g[id], r.z_gprime[id]});
        if (analysis) report.selections.push_back({epoch, current->selected});
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.phase = phase_idx;
      rec.lr = phase.lr;
      rec.amp_active = applied != nullptr && !applied->empty();
      rec.amp_factor = rec.amp_active ? phase.amp_factor : 1.0;
      if (rec.amp_active) rec.selected = applied->selected;
      rec.train_loss = stats.loss;
      rec.train_acc = stats.accuracy;
      rec.test_acc = evaluate(net_, split_.test);
      rec.seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
      report.epochs.push_back(rec);
      if (observer_) observer_(rec, net_);
    }
    report.total_seconds = std::chrono::duration<double>(clock::now() - run_start).count();
    return report;
  }

 private:
  RunConfig config_;
  Dataset data_;
  Split split_;
  Network net_;
  EpochObserver observer_;
};

inline RunReport run_training(const RunConfig& config) { return Trainer(config, load_dataset(config.dataset)).run(); }

}  // namespace ampli
