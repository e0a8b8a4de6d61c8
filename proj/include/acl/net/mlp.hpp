#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acl/error.hpp"

namespace acl::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Heap storage with the same alignment as Eigen-owned buffers.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;
using RowVector = Eigen::RowVectorXd;

enum class Activation { Linear, Relu, Tanh };

inline constexpr double kLayerNormEps = 1e-12;

struct LayerShape {
  int in = 0;
  int out = 0;
  Activation activation = Activation::Linear;
  bool layer_norm = false;
};

struct NamedArray {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<const double> values;
};

/// Dense feed-forward network. All parameters live in one contiguous array so that
/// optimizers, Polyak averaging and checkpoints can treat them uniformly.
///
/// Inputs and outputs are column-major batches: one sample per column.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<LayerShape> shapes) : shapes_(std::move(shapes)) {
    if (shapes_.empty()) throw ValidationError("Mlp needs at least one layer");
    std::size_t off = 0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const auto& s = shapes_[i];
      if (s.in <= 0 || s.out <= 0) throw ValidationError("Mlp layer sizes must be positive");
      if (i > 0 && shapes_[i - 1].out != s.in) throw ValidationError("Mlp layer shapes inconsistent");
      Offsets o;
      o.weight = off;
      off += static_cast<std::size_t>(s.in) * s.out;
      o.bias = off;
      off += s.out;
      if (s.layer_norm) {
        o.gain = off;
        off += s.out;
        o.shift = off;
        off += s.out;
      }
      offsets_.push_back(o);
    }
    params_.assign(off, 0.0);
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      if (shapes_[i].layer_norm) gain(i).setOnes();
    }
  }

  /// in -> hidden... -> out, with `hidden_act` and optional layer norm on hidden layers.
  static Mlp make(int in, const std::vector<int>& hidden, int out, Activation hidden_act = Activation::Relu,
                  Activation out_act = Activation::Linear, bool hidden_layer_norm = false) {
    std::vector<LayerShape> shapes;
    int prev = in;
    for (int h : hidden) {
      shapes.push_back({prev, h, hidden_act, hidden_layer_norm});
      prev = h;
    }
    shapes.push_back({prev, out, out_act, false});
    return Mlp(std::move(shapes));
  }

  /// Uniform fan-in initialisation; the final layer is additionally scaled by `last_scale`.
  template <class Rng>
  void init_uniform(Rng& rng, double last_scale = 1.0) {
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shapes_[i].in));
      const double scale = (i + 1 == shapes_.size()) ? last_scale : 1.0;
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& w : weight_span(i)) w = scale * u(rng);
      for (double& b : bias_span(i)) b = scale * u(rng);
      if (shapes_[i].layer_norm) {
        gain(i).setOnes();
        shift(i).setZero();
      }
    }
  }

  int input_size() const { return shapes_.front().in; }
  int output_size() const { return shapes_.back().out; }
  std::size_t num_layers() const { return shapes_.size(); }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Eigen::Map<Matrix> weight(std::size_t i) { return {params_.data() + offsets_[i].weight, shapes_[i].out, shapes_[i].in}; }
  Eigen::Map<const Matrix> weight(std::size_t i) const {
    return {params_.data() + offsets_[i].weight, shapes_[i].out, shapes_[i].in};
  }
  Eigen::Map<Vector> bias(std::size_t i) { return {params_.data() + offsets_[i].bias, shapes_[i].out}; }
  Eigen::Map<const Vector> bias(std::size_t i) const { return {params_.data() + offsets_[i].bias, shapes_[i].out}; }
  Eigen::Map<Vector> gain(std::size_t i) { return {params_.data() + offsets_[i].gain, shapes_[i].out}; }
  Eigen::Map<const Vector> gain(std::size_t i) const { return {params_.data() + offsets_[i].gain, shapes_[i].out}; }
  Eigen::Map<Vector> shift(std::size_t i) { return {params_.data() + offsets_[i].shift, shapes_[i].out}; }
  Eigen::Map<const Vector> shift(std::size_t i) const { return {params_.data() + offsets_[i].shift, shapes_[i].out}; }

  const auto& offsets(std::size_t i) const { return offsets_[i]; }

  std::vector<NamedArray> named_arrays(const std::string& prefix) const {
    std::vector<NamedArray> out;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const auto& s = shapes_[i];
      const auto& o = offsets_[i];
      const std::string p = prefix + "layer" + std::to_string(i) + ".";
      const auto rows = static_cast<std::size_t>(s.out);
      const auto cols = static_cast<std::size_t>(s.in);
      out.push_back({p + "weight", {rows, cols}, std::span<const double>(params_).subspan(o.weight, rows * cols)});
      out.push_back({p + "bias", {rows}, std::span<const double>(params_).subspan(o.bias, rows)});
      if (s.layer_norm) {
        out.push_back({p + "ln_gain", {rows}, std::span<const double>(params_).subspan(o.gain, rows)});
        out.push_back({p + "ln_shift", {rows}, std::span<const double>(params_).subspan(o.shift, rows)});
      }
    }
    return out;
  }

  struct Offsets {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t gain = 0;
    std::size_t shift = 0;
  };

 private:
  std::span<double> weight_span(std::size_t i) {
    return std::span<double>(params_).subspan(offsets_[i].weight, static_cast<std::size_t>(shapes_[i].in) * shapes_[i].out);
  }
  std::span<double> bias_span(std::size_t i) {
    return std::span<double>(params_).subspan(offsets_[i].bias, static_cast<std::size_t>(shapes_[i].out));
  }

  std::vector<LayerShape> shapes_;
  std::vector<Offsets> offsets_;
  ParamVector params_;
};

/// Activations kept from a forward pass for the matching backward pass.
struct MlpCache {
  std::vector<Matrix> inputs;      // input to each layer
  std::vector<Matrix> normalized;  // layer-norm output before gain/shift
  std::vector<RowVector> inv_std;  // per-sample 1/sqrt(var + eps)
  std::vector<Matrix> outputs;     // post-activation output of each layer
};

namespace detail {

inline void apply_activation(Activation a, Matrix& m) {
  switch (a) {
    case Activation::Linear: break;
    case Activation::Relu: m = m.cwiseMax(0.0); break;
    case Activation::Tanh: m = m.array().tanh().matrix(); break;
  }
}

// Gradient through the activation given its output.
inline void activation_backward(Activation a, const Matrix& out, Matrix& grad) {
  switch (a) {
    case Activation::Linear: break;
    case Activation::Relu: grad.array() *= (out.array() > 0.0).cast<double>(); break;
    case Activation::Tanh: grad.array() *= 1.0 - out.array().square(); break;
  }
}

}  // namespace detail

inline Matrix forward(const Mlp& net, const Matrix& x, MlpCache* cache = nullptr) {
  if (x.rows() != net.input_size()) {
    throw ValidationError("Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(net.input_size()));
  }
  const auto n_layers = net.num_layers();
  if (cache) {
    cache->inputs.resize(n_layers);
    cache->normalized.resize(n_layers);
    cache->inv_std.resize(n_layers);
    cache->outputs.resize(n_layers);
  }
  Matrix h = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& shape = net.shapes()[i];
    Matrix z = net.weight(i) * h;
    z.colwise() += net.bias(i);
    if (cache) cache->inputs[i] = std::move(h);
    if (shape.layer_norm) {
      const double n = static_cast<double>(shape.out);
      const RowVector mean = z.colwise().sum() / n;
      z.rowwise() -= mean;
      const RowVector var = z.array().square().colwise().sum() / n;
      const RowVector inv = (var.array() + kLayerNormEps).rsqrt();
      z = z * inv.asDiagonal();
      if (cache) {
        cache->normalized[i] = z;
        cache->inv_std[i] = inv;
      }
      z = net.gain(i).asDiagonal() * z;
      z.colwise() += net.shift(i);
    }
    detail::apply_activation(shape.activation, z);
    if (cache) cache->outputs[i] = z;
    h = std::move(z);
  }
  return h;
}

/// Backpropagates `output_grad` (d loss / d output). Parameter gradients are
/// accumulated into `grads` (size num_params); the input gradient is returned.
/// `grads` may be empty when only the input gradient is needed.
inline Matrix backward(const Mlp& net, const MlpCache& cache, const Matrix& output_grad, std::span<double> grads) {
  const bool want_params = !grads.empty();
  if (want_params && grads.size() != net.num_params()) throw ValidationError("gradient buffer size mismatch");
  Matrix g = output_grad;
  for (std::size_t li = net.num_layers(); li-- > 0;) {
    const auto& shape = net.shapes()[li];
    const auto& off = net.offsets(li);
    detail::activation_backward(shape.activation, cache.outputs[li], g);
    if (shape.layer_norm) {
      const Matrix& xhat = cache.normalized[li];
      if (want_params) {
        Eigen::Map<Vector>(grads.data() + off.gain, shape.out) += (g.cwiseProduct(xhat)).rowwise().sum();
        Eigen::Map<Vector>(grads.data() + off.shift, shape.out) += g.rowwise().sum();
      }
      Matrix dxhat = net.gain(li).asDiagonal() * g;
      const double n = static_cast<double>(shape.out);
      const RowVector sum_d = dxhat.colwise().sum();
      const RowVector sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
      Matrix dz = n * dxhat;
      dz.rowwise() -= sum_d;
      dz -= xhat * sum_dx.asDiagonal();
      g = dz * (cache.inv_std[li] / n).asDiagonal();
    }
    if (want_params) {
      Eigen::Map<Matrix>(grads.data() + off.weight, shape.out, shape.in).noalias() += g * cache.inputs[li].transpose();
      Eigen::Map<Vector>(grads.data() + off.bias, shape.out) += g.rowwise().sum();
    }
    g = net.weight(li).transpose() * g;
  }
  return g;
}

/// Polyak averaging: target <- tau * source + (1 - tau) * target.
inline void soft_update(std::span<double> target, std::span<const double> source, double tau) {
  if (target.size() != source.size()) throw ValidationError("soft_update size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = tau * source[i] + (1.0 - tau) * target[i];
}

}  // namespace acl::net
