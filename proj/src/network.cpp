#include "travag/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "travag/errors.hpp"
#include "travag/rng.hpp"

namespace travag {
namespace {

constexpr double kBceClamp = 1e-7;

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSigmoid: return stable_sigmoid(z);
    case Activation::kTanh: return std::tanh(z);
  }
  throw std::invalid_argument("unknown activation");
}

// Derivative in terms of pre-activation z and cached activation y.
double activation_derivative(Activation a, double z, double y) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid: return y * (1.0 - y);
    case Activation::kTanh: return 1.0 - y * y;
  }
  throw std::invalid_argument("unknown activation");
}

void check_finite(std::span<const double> values, const char* what) {
  for (const double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
  }
  throw std::invalid_argument("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  throw FormatError("unknown activation '" + name + "'");
}

double GradientVector::l2_norm() const {
  double sum = 0.0;
  for (const double v : values) sum += v * v;
  return std::sqrt(sum);
}

void GradientVector::scale(double factor) {
  for (double& v : values) v *= factor;
}

void GradientVector::add(const GradientVector& other) {
  add_scaled(other, 1.0);
}

void GradientVector::add_scaled(const GradientVector& other, double factor) {
  if (other.range != range || other.values.size() != values.size()) {
    throw std::invalid_argument("gradient layout mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += factor * other.values[i];
}

Network Network::init(std::vector<LayerSpec> specs, std::uint64_t seed) {
  if (specs.empty()) {
    throw std::invalid_argument("network needs at least one layer");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim == 0 || specs[i].out_dim == 0) {
      throw std::invalid_argument("layer dimensions must be >= 1");
    }
    if (i > 0 && specs[i].in_dim != specs[i - 1].out_dim) {
      throw std::invalid_argument(
          "layer dimension mismatch: layer " + std::to_string(i - 1) + " outputs " +
          std::to_string(specs[i - 1].out_dim) + " but layer " + std::to_string(i) +
          " expects " + std::to_string(specs[i].in_dim));
    }
  }

  Network net;
  net.specs_ = std::move(specs);
  net.seed_ = seed;
  RngStream rng(seed);
  for (const LayerSpec& spec : net.specs_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
    std::vector<double> w(spec.in_dim * spec.out_dim);
    for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
    net.weights_.push_back(std::move(w));
    net.biases_.emplace_back(spec.out_dim, 0.0);
  }
  return net;
}

Network Network::from_parameters(std::vector<LayerSpec> specs,
                                 std::vector<std::vector<double>> weights,
                                 std::vector<std::vector<double>> biases,
                                 std::uint64_t seed) {
  Network net = init(specs, 0);  // validates the spec chain
  if (weights.size() != specs.size() || biases.size() != specs.size()) {
    throw std::invalid_argument("parameter blocks do not match layer count");
  }
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (weights[l].size() != specs[l].in_dim * specs[l].out_dim ||
        biases[l].size() != specs[l].out_dim) {
      throw std::invalid_argument("parameter block size mismatch at layer " + std::to_string(l));
    }
    check_finite(weights[l], "network weights");
    check_finite(biases[l], "network biases");
  }
  net.weights_ = std::move(weights);
  net.biases_ = std::move(biases);
  net.seed_ = seed;
  return net;
}

std::size_t Network::parameter_count(LayerRange range) const {
  check_range(range);
  std::size_t count = 0;
  for (std::size_t l = range.first; l < range.last; ++l) {
    count += specs_[l].in_dim * specs_[l].out_dim + specs_[l].out_dim;
  }
  return count;
}

void Network::check_range(LayerRange range) const {
  if (range.first > range.last || range.last > specs_.size()) {
    throw std::invalid_argument("layer range out of bounds");
  }
}

ForwardCache Network::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("forward: input dim " + std::to_string(x.size()) +
                                " does not match network input " + std::to_string(input_dim()));
  }
  check_finite(x, "forward input");
  ForwardCache cache;
  cache.activations.reserve(specs_.size() + 1);
  cache.pre.reserve(specs_.size());
  cache.activations.emplace_back(x.begin(), x.end());

  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const LayerSpec& spec = specs_[l];
    const std::vector<double>& input = cache.activations.back();
    std::vector<double> z(spec.out_dim);
    const double* w = weights_[l].data();
    for (std::size_t o = 0; o < spec.out_dim; ++o) {
      double acc = biases_[l][o];
      const double* row = w + o * spec.in_dim;
      for (std::size_t i = 0; i < spec.in_dim; ++i) acc += row[i] * input[i];
      z[o] = acc;
    }
    std::vector<double> a(spec.out_dim);
    for (std::size_t o = 0; o < spec.out_dim; ++o) a[o] = apply_activation(spec.activation, z[o]);
    check_finite(a, "forward activations");
    cache.pre.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  return cache;
}

void Network::backward(const ForwardCache& cache, std::span<const double> output_grad,
                       LayerRange range, GradientVector* grad,
                       std::vector<double>* input_grad) const {
  if (output_grad.size() != output_dim()) {
    throw std::invalid_argument("backward: output gradient dim mismatch");
  }
  std::vector<double> delta(output_dim());
  for (std::size_t o = 0; o < delta.size(); ++o) {
    const double z = cache.pre.back()[o];
    const double y = cache.activations.back()[o];
    delta[o] = output_grad[o] * activation_derivative(specs_.back().activation, z, y);
  }
  backward_pre(cache, delta, range, grad, input_grad);
}

void Network::backward_pre(const ForwardCache& cache, std::span<const double> output_pre_grad,
                           LayerRange range, GradientVector* grad,
                           std::vector<double>* input_grad) const {
  check_range(range);
  if (cache.activations.size() != specs_.size() + 1) {
    throw std::invalid_argument("backward: cache does not belong to this network");
  }
  if (output_pre_grad.size() != output_dim()) {
    throw std::invalid_argument("backward: output gradient dim mismatch");
  }

  if (grad != nullptr) {
    grad->range = range;
    grad->values.assign(parameter_count(range), 0.0);
  }
  // Backpropagation may stop above layer 0 when nothing below is needed.
  const std::size_t stop_layer = (input_grad != nullptr) ? 0 : range.first;

  // delta = dL/d(pre-activation of the current layer)
  std::vector<double> delta(output_pre_grad.begin(), output_pre_grad.end());

  std::size_t grad_end = grad != nullptr ? grad->values.size() : 0;
  for (std::size_t l = specs_.size(); l-- > stop_layer;) {
    const LayerSpec& spec = specs_[l];
    const std::vector<double>& input = cache.activations[l];

    if (grad != nullptr && l >= range.first && l < range.last) {
      const std::size_t block = spec.in_dim * spec.out_dim + spec.out_dim;
      double* wg = grad->values.data() + (grad_end - block);
      double* bg = wg + spec.in_dim * spec.out_dim;
      for (std::size_t o = 0; o < spec.out_dim; ++o) {
        const double d = delta[o];
        double* row = wg + o * spec.in_dim;
        for (std::size_t i = 0; i < spec.in_dim; ++i) row[i] += d * input[i];
        bg[o] += d;
      }
      grad_end -= block;
    }

    if (l == stop_layer) break;

    // delta for the layer below: W^T delta, times its activation derivative.
    std::vector<double> prev(spec.in_dim, 0.0);
    const double* w = weights_[l].data();
    for (std::size_t o = 0; o < spec.out_dim; ++o) {
      const double d = delta[o];
      const double* row = w + o * spec.in_dim;
      for (std::size_t i = 0; i < spec.in_dim; ++i) prev[i] += row[i] * d;
    }
    for (std::size_t i = 0; i < spec.in_dim; ++i) {
      const double z = cache.pre[l - 1][i];
      const double y = cache.activations[l][i];
      prev[i] *= activation_derivative(specs_[l - 1].activation, z, y);
    }
    delta = std::move(prev);
  }

  if (input_grad != nullptr) {
    // delta currently holds dL/d(pre) of layer 0; map it back to the input.
    const LayerSpec& spec = specs_.front();
    input_grad->assign(spec.in_dim, 0.0);
    const double* w = weights_[0].data();
    for (std::size_t o = 0; o < spec.out_dim; ++o) {
      const double d = delta[o];
      const double* row = w + o * spec.in_dim;
      for (std::size_t i = 0; i < spec.in_dim; ++i) (*input_grad)[i] += row[i] * d;
    }
    check_finite(*input_grad, "input gradient");
  }
  if (grad != nullptr) check_finite(grad->values, "parameter gradient");
}

void Network::apply_update(const GradientVector& delta) {
  check_range(delta.range);
  if (delta.values.size() != parameter_count(delta.range)) {
    throw std::invalid_argument("apply_update: layout mismatch");
  }
  std::size_t offset = 0;
  for (std::size_t l = delta.range.first; l < delta.range.last; ++l) {
    for (double& w : weights_[l]) w += delta.values[offset++];
    for (double& b : biases_[l]) b += delta.values[offset++];
  }
}

Network Network::slice(LayerRange range) const {
  check_range(range);
  if (range.empty()) {
    throw std::invalid_argument("cannot slice an empty layer range");
  }
  Network net;
  net.specs_.assign(specs_.begin() + range.first, specs_.begin() + range.last);
  net.weights_.assign(weights_.begin() + range.first, weights_.begin() + range.last);
  net.biases_.assign(biases_.begin() + range.first, biases_.begin() + range.last);
  net.seed_ = seed_;
  return net;
}

Network Network::stack(const Network& a, const Network& b) {
  if (a.output_dim() != b.input_dim()) {
    throw std::invalid_argument("stack: output dim " + std::to_string(a.output_dim()) +
                                " does not chain with input dim " +
                                std::to_string(b.input_dim()));
  }
  Network net;
  net.specs_ = a.specs_;
  net.specs_.insert(net.specs_.end(), b.specs_.begin(), b.specs_.end());
  net.weights_ = a.weights_;
  net.weights_.insert(net.weights_.end(), b.weights_.begin(), b.weights_.end());
  net.biases_ = a.biases_;
  net.biases_.insert(net.biases_.end(), b.biases_.begin(), b.biases_.end());
  net.seed_ = a.seed_;
  return net;
}

double loss_value(LossKind kind, std::span<const double> output,
                  std::span<const double> target) {
  if (output.size() != target.size() || output.empty()) {
    throw std::invalid_argument("loss: output/target dim mismatch");
  }
  const double n = static_cast<double>(output.size());
  double sum = 0.0;
  switch (kind) {
    case LossKind::kMse:
      for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output[i] - target[i];
        sum += d * d;
      }
      return sum / n;
    case LossKind::kBce:
      for (std::size_t i = 0; i < output.size(); ++i) {
        if (!(output[i] >= 0.0 && output[i] <= 1.0)) {
          throw NumericError("bce output outside [0,1]");
        }
        const double y = std::clamp(output[i], kBceClamp, 1.0 - kBceClamp);
        sum += -(target[i] * std::log(y) + (1.0 - target[i]) * std::log(1.0 - y));
      }
      return sum / n;
  }
  throw std::invalid_argument("unknown loss kind");
}

void loss_gradient(LossKind kind, std::span<const double> output,
                   std::span<const double> target, std::span<double> out) {
  if (output.size() != target.size() || output.size() != out.size() || output.empty()) {
    throw std::invalid_argument("loss gradient: dim mismatch");
  }
  const double n = static_cast<double>(output.size());
  switch (kind) {
    case LossKind::kMse:
      for (std::size_t i = 0; i < output.size(); ++i) {
        out[i] = 2.0 * (output[i] - target[i]) / n;
      }
      return;
    case LossKind::kBce:
      for (std::size_t i = 0; i < output.size(); ++i) {
        if (!(output[i] >= 0.0 && output[i] <= 1.0)) {
          throw NumericError("bce output outside [0,1]");
        }
        const double y = std::clamp(output[i], kBceClamp, 1.0 - kBceClamp);
        out[i] = (-target[i] / y + (1.0 - target[i]) / (1.0 - y)) / n;
      }
      return;
  }
  throw std::invalid_argument("unknown loss kind");
}

GradientVector per_example_gradient(const Network& net, std::span<const double> x,
                                    std::span<const double> target, LossKind loss,
                                    LayerRange subset) {
  return per_example_gradient(net, net.forward(x), target, loss, subset);
}

GradientVector slice_gradient(const Network& net, const GradientVector& full,
                              LayerRange subrange) {
  if (subrange.first < full.range.first || subrange.last > full.range.last) {
    throw std::invalid_argument("slice_gradient: subrange not inside the gradient's range");
  }
  if (full.values.size() != net.parameter_count(full.range)) {
    throw std::invalid_argument("slice_gradient: gradient layout mismatch");
  }
  const std::size_t offset =
      net.parameter_count(LayerRange{full.range.first, subrange.first});
  const std::size_t length = net.parameter_count(subrange);
  GradientVector out;
  out.range = subrange;
  out.values.assign(full.values.begin() + offset, full.values.begin() + offset + length);
  return out;
}

GradientVector per_example_gradient(const Network& net, const ForwardCache& cache,
                                    std::span<const double> target, LossKind loss,
                                    LayerRange subset) {
  const std::vector<double>& y = cache.output();
  if (y.size() != target.size()) {
    throw std::invalid_argument("per_example_gradient: target dim mismatch");
  }

  GradientVector grad;
  // bce right after a sigmoid output collapses to dL/dz = (y - t)/n, which
  // stays exact where the factored form loses the signal to saturation.
  if (loss == LossKind::kBce &&
      net.specs().back().activation == Activation::kSigmoid) {
    const double n_out = static_cast<double>(y.size());
    std::vector<double> fused(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) fused[i] = (y[i] - target[i]) / n_out;
    net.backward_pre(cache, fused, subset, &grad, nullptr);
  } else {
    std::vector<double> dy(y.size());
    loss_gradient(loss, y, target, dy);
    net.backward(cache, dy, subset, &grad, nullptr);
  }
  return grad;
}

}  // namespace travag
