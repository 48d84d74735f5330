#pragma once

// Minimal dense feed-forward network: dense, ReLU and batch-norm layers,
// softmax cross-entropy, exact reverse-mode gradients and plain SGD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ampli/error.hpp"
#include "ampli/rng.hpp"
#include "ampli/tensor.hpp"

namespace ampli {

enum class LayerKind { dense, relu, batchnorm };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;  // dense only; relu and batchnorm preserve width
  double epsilon = 1e-5;    // batchnorm only
  double momentum = 0.1;    // batchnorm running statistics

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
  static LayerSpec relu(std::size_t width) { return {LayerKind::relu, width, width}; }
  static LayerSpec batchnorm(std::size_t width, double eps = 1e-5, double momentum = 0.1) {
    return {LayerKind::batchnorm, width, width, eps, momentum};
  }

  std::size_t output_width() const noexcept { return kind == LayerKind::dense ? fan_out : fan_in; }
  bool has_parameters() const noexcept { return kind != LayerKind::relu; }
};

/// One layer with its parameters. For dense layers `weight` is the
/// [fan_in, fan_out] matrix and `bias` is [fan_out]; for batchnorm they are
/// the [fan_in] scale and shift.
struct Layer {
  LayerSpec spec;
  int id = -1;  // parameterized layers only
  Tensor weight;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;

  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
};

/// Per-layer flat gradients indexed by layer id: weights then biases (or
/// scale then shift), concatenated.
struct GradientSet {
  std::vector<std::vector<double>> layers;

  std::size_t layer_count() const noexcept { return layers.size(); }
  std::vector<double>& operator[](std::size_t id) { return layers[id]; }
  const std::vector<double>& operator[](std::size_t id) const { return layers[id]; }

  friend bool operator==(const GradientSet&, const GradientSet&) = default;
};

class Network {
 public:
  Network() = default;

  /// Validates that adjacent widths compose and initializes parameters:
  /// dense weights uniform in +-sqrt(6/(fan_in+fan_out)), zero biases,
  /// batchnorm scale 1 and shift 0.
  Network(std::vector<LayerSpec> specs, std::uint64_t seed) {
    if (specs.empty()) throw ShapeError(ShapeError::npos, "network has no layers");
    Rng rng = make_rng(seed, 0x1417);
    int next_id = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const LayerSpec& s = specs[i];
      if (s.fan_in == 0 || s.output_width() == 0) throw ShapeError(i, "zero width");
      if (i > 0 && specs[i - 1].output_width() != s.fan_in) {
        throw ShapeError(i, "fan_in " + std::to_string(s.fan_in) + " does not match previous fan_out " +
                                std::to_string(specs[i - 1].output_width()));
      }
      Layer layer{s};
      if (s.kind == LayerKind::dense) {
        layer.id = next_id++;
        const double limit = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
        layer.weight = Tensor({s.fan_in, s.fan_out});
        for (double& w : layer.weight.data) w = uniform(rng, -limit, limit);
        layer.bias = Tensor({s.fan_out});
      } else if (s.kind == LayerKind::batchnorm) {
        if (!(s.epsilon > 0.0)) throw ShapeError(i, "batchnorm epsilon must be positive");
        layer.id = next_id++;
        layer.weight = Tensor({s.fan_in}, 1.0);
        layer.bias = Tensor({s.fan_in});
        layer.running_mean = Tensor({s.fan_in});
        layer.running_var = Tensor({s.fan_in}, 1.0);
      }
      layers_.push_back(std::move(layer));
    }
    param_layers_ = static_cast<std::size_t>(next_id);
  }

  std::span<Layer> layers() noexcept { return layers_; }
  std::span<const Layer> layers() const noexcept { return layers_; }

  std::size_t input_width() const noexcept { return layers_.empty() ? 0 : layers_.front().spec.fan_in; }
  std::size_t output_width() const noexcept { return layers_.empty() ? 0 : layers_.back().spec.output_width(); }

  /// Number of parameterized layers; ids run 0..count-1.
  std::size_t param_layer_count() const noexcept { return param_layers_; }

  Layer& param_layer(std::size_t id) { return layers_[index_of(id)]; }
  const Layer& param_layer(std::size_t id) const { return layers_[index_of(id)]; }

  /// Trainable scalar count per layer id.
  std::vector<std::size_t> param_sizes() const {
    std::vector<std::size_t> out;
    for (const Layer& l : layers_)
      if (l.id >= 0) out.push_back(l.parameter_count());
    return out;
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const Layer& x = a.layers_[i];
      const Layer& y = b.layers_[i];
      if (x.spec.kind != y.spec.kind || x.id != y.id || x.weight != y.weight || x.bias != y.bias ||
          x.running_mean != y.running_mean || x.running_var != y.running_var)
        return false;
    }
    return true;
  }

 private:
  std::size_t index_of(std::size_t id) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].id == static_cast<int>(id)) return i;
    throw Error("no parameterized layer with id " + std::to_string(id));
  }

  std::vector<Layer> layers_;
  std::size_t param_layers_ = 0;
};

/// Shape of a plain MLP: each hidden width becomes dense -> [batchnorm] -> relu,
/// followed by a dense classifier head.
struct MlpShape {
  std::size_t input_width = 2;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;
  bool batchnorm = true;
};

inline std::vector<LayerSpec> mlp_specs(const MlpShape& shape) {
  std::vector<LayerSpec> specs;
  std::size_t width = shape.input_width;
  for (std::size_t h : shape.hidden) {
    specs.push_back(LayerSpec::dense(width, h));
    if (shape.batchnorm) specs.push_back(LayerSpec::batchnorm(h));
    specs.push_back(LayerSpec::relu(h));
    width = h;
  }
  specs.push_back(LayerSpec::dense(width, shape.classes));
  return specs;
}

inline Network make_mlp(const MlpShape& shape, std::uint64_t seed) { return Network(mlp_specs(shape), seed); }

enum class Mode { train, eval };

/// Activation record from one forward pass. Holds everything backward needs
/// plus the batch statistics used to refresh batchnorm running averages.
struct ForwardCache {
  Mode mode = Mode::train;
  std::size_t batch = 0;
  std::vector<Tensor> inputs;  // input to each layer
  // batchnorm layers only, indexed like inputs
  std::vector<Tensor> normalized;
  std::vector<std::vector<double>> inv_std;
  std::vector<std::vector<double>> batch_mean;
  std::vector<std::vector<double>> batch_var;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

namespace detail {

inline Tensor dense_forward(const Layer& l, const Tensor& x) {
  const std::size_t b = x.rows(), in = l.spec.fan_in, out = l.spec.fan_out;
  Tensor y({b, out});
  for (std::size_t r = 0; r < b; ++r) {
    double* yr = y.data.data() + r * out;
    std::copy(l.bias.data.begin(), l.bias.data.end(), yr);
    const double* xr = x.data.data() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wi = l.weight.data.data() + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xi * wi[j];
    }
  }
  return y;
}

}  // namespace detail

/// Runs the network on a [B, fan_in] batch. Train mode normalizes with batch
/// statistics; eval mode uses the running statistics. Running statistics are
/// not touched here (see update_running_stats).
inline ForwardResult forward(const Network& net, const Tensor& batch, Mode mode) {
  if (batch.shape.size() != 2 || batch.rows() == 0) throw ShapeError(0, "batch must be a non-empty [B, D] matrix");
  if (batch.cols() != net.input_width()) {
    throw ShapeError(0, "input width " + std::to_string(batch.cols()) + " but layer expects " +
                            std::to_string(net.input_width()));
  }
  if (!batch.all_finite()) throw NonFiniteError("forward: non-finite value in input batch");

  const auto layers = net.layers();
  const std::size_t b = batch.rows();
  ForwardResult res;
  ForwardCache& c = res.cache;
  c.mode = mode;
  c.batch = b;
  c.inputs.reserve(layers.size());
  c.normalized.resize(layers.size());
  c.inv_std.resize(layers.size());
  c.batch_mean.resize(layers.size());
  c.batch_var.resize(layers.size());

  Tensor x = batch;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& l = layers[li];
    Tensor y;
    switch (l.spec.kind) {
      case LayerKind::dense:
        y = detail::dense_forward(l, x);
        break;
      case LayerKind::relu:
        y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::batchnorm: {
        const std::size_t w = l.spec.fan_in;
        std::vector<double> mean(w, 0.0), var(w, 0.0), inv(w);
        if (mode == Mode::train) {
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t j = 0; j < w; ++j) mean[j] += x(r, j);
          for (double& m : mean) m /= static_cast<double>(b);
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t j = 0; j < w; ++j) {
              const double d = x(r, j) - mean[j];
              var[j] += d * d;
            }
          for (double& v : var) v /= static_cast<double>(b);
        } else {
          mean = l.running_mean.data;
          var = l.running_var.data;
        }
        for (std::size_t j = 0; j < w; ++j) inv[j] = 1.0 / std::sqrt(var[j] + l.spec.epsilon);
        Tensor xhat({b, w});
        y = Tensor({b, w});
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < w; ++j) {
            const double h = (x(r, j) - mean[j]) * inv[j];
            xhat(r, j) = h;
            y(r, j) = l.weight.data[j] * h + l.bias.data[j];
          }
        c.normalized[li] = std::move(xhat);
        c.inv_std[li] = std::move(inv);
        c.batch_mean[li] = std::move(mean);
        c.batch_var[li] = std::move(var);
        break;
      }
    }
    c.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  res.logits = std::move(x);
  return res;
}

/// Folds the batch statistics of a train-mode pass into the batchnorm running
/// averages: running = (1 - momentum) * running + momentum * batch, with the
/// unbiased variance when B > 1.
inline void update_running_stats(Network& net, const ForwardCache& cache) {
  if (cache.mode != Mode::train) return;
  auto layers = net.layers();
  if (cache.inputs.size() != layers.size()) throw ShapeError(ShapeError::npos, "cache does not match network");
  const double b = static_cast<double>(cache.batch);
  const double unbias = cache.batch > 1 ? b / (b - 1.0) : 1.0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    Layer& l = layers[li];
    if (l.spec.kind != LayerKind::batchnorm) continue;
    const double m = l.spec.momentum;
    for (std::size_t j = 0; j < l.spec.fan_in; ++j) {
      l.running_mean.data[j] = (1.0 - m) * l.running_mean.data[j] + m * cache.batch_mean[li][j];
      l.running_var.data[j] = (1.0 - m) * l.running_var.data[j] + m * cache.batch_var[li][j] * unbias;
    }
  }
}

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean softmax cross-entropy over the batch and its gradient
/// (softmax - onehot) / B. Uses log-sum-exp so large logits do not overflow.
inline LossResult loss_softmax_ce(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape.size() != 2) throw ShapeError(ShapeError::npos, "logits must be [B, C]");
  const std::size_t b = logits.rows(), classes = logits.cols();
  if (labels.size() != b) throw ShapeError(ShapeError::npos, "label count does not match batch size");
  LossResult out{0.0, Tensor({b, classes})};
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw Error("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    out.loss += (lse - row[static_cast<std::size_t>(y)]) * inv_b;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(row[j] - lse);
      out.dlogits(r, j) = (p - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) * inv_b;
    }
  }
  return out;
}

/// Exact gradients of the loss with respect to every trainable parameter,
/// given the cache of the immediately preceding train-mode forward.
inline GradientSet backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits) {
  const auto layers = net.layers();
  if (cache.mode != Mode::train) throw Error("backward requires a train-mode forward cache");
  if (cache.inputs.size() != layers.size()) {
    throw ShapeError(ShapeError::npos, "cache has " + std::to_string(cache.inputs.size()) + " layers, network has " +
                                           std::to_string(layers.size()));
  }
  const std::size_t b = cache.batch;
  if (dlogits.rows() != b || dlogits.cols() != net.output_width())
    throw ShapeError(layers.size() - 1, "dlogits shape does not match the forward pass");

  GradientSet grads;
  grads.layers.resize(net.param_layer_count());

  Tensor dy = dlogits;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    const Tensor& x = cache.inputs[li];
    if (x.rows() != b || x.cols() != l.spec.fan_in) throw ShapeError(li, "cached input does not match layer shape");
    Tensor dx({b, l.spec.fan_in});
    switch (l.spec.kind) {
      case LayerKind::dense: {
        const std::size_t in = l.spec.fan_in, out = l.spec.fan_out;
        std::vector<double>& g = grads[static_cast<std::size_t>(l.id)];
        g.assign(in * out + out, 0.0);
        double* dw = g.data();
        double* db = g.data() + in * out;
        for (std::size_t r = 0; r < b; ++r) {
          const double* dyr = dy.data.data() + r * out;
          const double* xr = x.data.data() + r * in;
          double* dxr = dx.data.data() + r * in;
          for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
          for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const double* wi = l.weight.data.data() + i * out;
            double* dwi = dw + i * out;
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) {
              dwi[j] += xi * dyr[j];
              acc += dyr[j] * wi[j];
            }
            dxr[i] = acc;
          }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] = x.data[k] > 0.0 ? dy.data[k] : 0.0;
        break;
      case LayerKind::batchnorm: {
        const std::size_t w = l.spec.fan_in;
        const Tensor& xhat = cache.normalized[li];
        const std::vector<double>& inv = cache.inv_std[li];
        std::vector<double>& g = grads[static_cast<std::size_t>(l.id)];
        g.assign(2 * w, 0.0);
        double* dscale = g.data();
        double* dshift = g.data() + w;
        std::vector<double> sum_dxhat(w, 0.0), sum_dxhat_xhat(w, 0.0);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < w; ++j) {
            const double d = dy(r, j);
            dscale[j] += d * xhat(r, j);
            dshift[j] += d;
            const double dh = d * l.weight.data[j];
            sum_dxhat[j] += dh;
            sum_dxhat_xhat[j] += dh * xhat(r, j);
          }
        const double bn = static_cast<double>(b);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < w; ++j) {
            const double dh = dy(r, j) * l.weight.data[j];
            dx(r, j) = inv[j] / bn * (bn * dh - sum_dxhat[j] - xhat(r, j) * sum_dxhat_xhat[j]);
          }
        break;
      }
    }
    dy = std::move(dx);
  }
  return grads;
}

namespace detail {

inline void check_gradient_coverage(const Network& net, const GradientSet& grads) {
  if (grads.layer_count() != net.param_layer_count()) {
    throw Error("gradient set covers " + std::to_string(grads.layer_count()) + " layers, network has " +
                std::to_string(net.param_layer_count()));
  }
  for (const Layer& l : net.layers()) {
    if (l.id < 0) continue;
    if (grads[static_cast<std::size_t>(l.id)].size() != l.parameter_count())
      throw Error("gradient for layer id " + std::to_string(l.id) + " is missing or has the wrong length");
  }
}

}  // namespace detail

/// p <- p - lr * g for every trainable parameter. Running batchnorm
/// statistics are left alone.
inline void sgd_step(Network& net, const GradientSet& grads, double lr) {
  if (!(lr > 0.0)) throw Error("learning rate must be positive");
  detail::check_gradient_coverage(net, grads);
  for (Layer& l : net.layers()) {
    if (l.id < 0) continue;
    const std::vector<double>& g = grads[static_cast<std::size_t>(l.id)];
    const std::size_t nw = l.weight.size();
    for (std::size_t k = 0; k < nw; ++k) l.weight.data[k] -= lr * g[k];
    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias.data[k] -= lr * g[nw + k];
  }
}

}  // namespace ampli
