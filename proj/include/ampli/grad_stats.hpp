#pragma once

// Per-layer gradient directionality over one epoch.
//
// For layer l with scalars i and iterations j, let s_i = sum_j g_ij and
// a_i = sum_j |g_ij|. Then
//
//   G_l  = sum_i |s_i| / sum_i a_i          (0 when the denominator is 0)
//   G'_l = mean_i ( |s_i| / a_i )           (term is 0 when a_i is 0)
//
// Both lie in [0, 1]. Values near 1 mean the layer's updates kept pushing
// in one direction across the epoch; values near 0 mean they cancelled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ampli/error.hpp"
#include "ampli/nn.hpp"

namespace ampli {

class GradientAccumulator {
 public:
  struct LayerSums {
    std::vector<double> signed_sum;
    std::vector<double> abs_sum;
  };

  GradientAccumulator() = default;

  /// One entry per layer id with that layer's trainable scalar count.
  explicit GradientAccumulator(std::span<const std::size_t> layer_sizes) {
    layers_.reserve(layer_sizes.size());
    for (std::size_t n : layer_sizes) layers_.push_back({std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }

  /// Adds one iteration's gradient for a single layer. Call end_iteration()
  /// once every layer of the iteration has been recorded.
  void accumulate(std::size_t layer_id, std::span<const double> grad) {
    LayerSums& s = sums_for(layer_id);
    if (grad.size() != s.signed_sum.size()) {
      throw ShapeError(ShapeError::npos, "layer id " + std::to_string(layer_id) + ": gradient length " +
                                             std::to_string(grad.size()) + ", expected " +
                                             std::to_string(s.signed_sum.size()));
    }
    for (double g : grad)
      if (!std::isfinite(g)) throw NonFiniteError("layer id " + std::to_string(layer_id) + ": non-finite gradient");
    for (std::size_t i = 0; i < grad.size(); ++i) {
      s.signed_sum[i] += grad[i];
      s.abs_sum[i] += std::abs(grad[i]);
    }
  }

  void end_iteration() noexcept { ++iterations_; }

  /// Records every layer of one iteration and closes it.
  void record(const GradientSet& grads) {
    if (grads.layer_count() != layers_.size()) throw Error("gradient set does not match accumulator layers");
    for (std::size_t id = 0; id < layers_.size(); ++id) accumulate(id, grads[id]);
    end_iteration();
  }

  void reset() {
    for (LayerSums& s : layers_) {
      std::fill(s.signed_sum.begin(), s.signed_sum.end(), 0.0);
      std::fill(s.abs_sum.begin(), s.abs_sum.end(), 0.0);
    }
    iterations_ = 0;
  }

  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t iterations() const noexcept { return iterations_; }
  const LayerSums& layer(std::size_t layer_id) const {
    check_id(layer_id);
    return layers_[layer_id];
  }

 private:
  void check_id(std::size_t layer_id) const {
    if (layer_id >= layers_.size()) throw Error("unknown layer id " + std::to_string(layer_id));
  }

  LayerSums& sums_for(std::size_t layer_id) {
    check_id(layer_id);
    return layers_[layer_id];
  }

  std::vector<LayerSums> layers_;
  std::size_t iterations_ = 0;
};

/// Layer-level ratio: net gradient mass over total gradient mass.
inline double ratio_g(const GradientAccumulator& acc, std::size_t layer_id) {
  const auto& s = acc.layer(layer_id);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.signed_sum.size(); ++i) {
    num += std::abs(s.signed_sum[i]);
    den += s.abs_sum[i];
  }
  if (den == 0.0) return 0.0;
  return std::min(1.0, num / den);
}

/// Mean of the per-scalar ratios; each scalar counts equally, and a scalar
/// whose gradient was zero all epoch contributes 0.
inline double ratio_gprime(const GradientAccumulator& acc, std::size_t layer_id) {
  const auto& s = acc.layer(layer_id);
  const std::size_t n = s.signed_sum.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (s.abs_sum[i] != 0.0) total += std::min(1.0, std::abs(s.signed_sum[i]) / s.abs_sum[i]);
  return total / static_cast<double>(n);
}

/// z-scores against the population mean and standard deviation. A zero
/// spread (including a single layer) maps every value to 0.
inline std::vector<double> normalize(std::span<const double> values) {
  std::vector<double> z(values.size(), 0.0);
  if (values.empty()) return z;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  // Checked directly: the mean of identical values need not round back to them.
  if (*lo == *hi) return z;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / n);
  if (sigma == 0.0) return z;
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / sigma;
  return z;
}

/// G, G' and their z-scores for every layer, indexed by layer id.
struct LayerRatios {
  std::vector<double> g;
  std::vector<double> gprime;
  std::vector<double> z_g;
  std::vector<double> z_gprime;

  std::size_t layer_count() const noexcept { return g.size(); }
};

inline LayerRatios compute_ratios(const GradientAccumulator& acc) {
  LayerRatios r;
  for (std::size_t id = 0; id < acc.layer_count(); ++id) {
    r.g.push_back(ratio_g(acc, id));
    r.gprime.push_back(ratio_gprime(acc, id));
  }
  r.z_g = normalize(r.g);
  r.z_gprime = normalize(r.gprime);
  return r;
}

}  // namespace ampli
