#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace travag {

enum class Activation { kIdentity, kRelu, kSigmoid, kTanh };
enum class LossKind { kMse, kBce };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::kIdentity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Half-open layer range [first, last) designating a parameter subset of a
/// network (e.g. the decoder half of a stacked autoencoder). An empty range
/// selects no parameters.
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t count() const { return last - first; }
  bool empty() const { return first == last; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Flat gradient (or parameter update) over the layers of `range`. Layout:
/// for each layer in range order, the weight block (row-major out x in)
/// followed by the bias block.
struct GradientVector {
  LayerRange range;
  std::vector<double> values;

  double l2_norm() const;
  void scale(double factor);
  /// values += other.values; ranges and sizes must match.
  void add(const GradientVector& other);
  void add_scaled(const GradientVector& other, double factor);
};

/// Per-layer forward state: enough to run a backward pass.
struct ForwardCache {
  /// activations[0] is the input; activations[k] the output of layer k-1.
  std::vector<std::vector<double>> activations;
  /// pre[k] is the affine output of layer k before its activation.
  std::vector<std::vector<double>> pre;

  const std::vector<double>& output() const { return activations.back(); }
};

/// Dense feed-forward network: an ordered stack of affine+activation layers
/// whose dimensions chain. Plain value type; copying copies the weights.
class Network {
 public:
  Network() = default;

  /// Xavier-uniform weights (bound sqrt(6/(in+out))), zero biases,
  /// deterministic in `seed`. Throws std::invalid_argument when adjacent
  /// layer dimensions do not chain or a dimension is zero.
  static Network init(std::vector<LayerSpec> specs, std::uint64_t seed);

  /// Builds a network from explicit parameters (used by deserialization).
  static Network from_parameters(std::vector<LayerSpec> specs,
                                 std::vector<std::vector<double>> weights,
                                 std::vector<std::vector<double>> biases,
                                 std::uint64_t seed);

  std::size_t layer_count() const { return specs_.size(); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t input_dim() const { return specs_.front().in_dim; }
  std::size_t output_dim() const { return specs_.back().out_dim; }
  std::uint64_t seed() const { return seed_; }

  LayerRange all_layers() const { return {0, specs_.size()}; }
  std::size_t parameter_count() const { return parameter_count(all_layers()); }
  std::size_t parameter_count(LayerRange range) const;

  std::span<const double> weights(std::size_t layer) const { return weights_[layer]; }
  std::span<const double> biases(std::size_t layer) const { return biases_[layer]; }

  /// Affine-then-activation composition. Throws std::invalid_argument on an
  /// input dimension mismatch and NumericError if any value comes out
  /// non-finite.
  ForwardCache forward(std::span<const double> x) const;

  /// Reverse-mode pass from dL/d(output). Accumulates parameter gradients
  /// over `range` into `grad` (resized and overwritten) when non-null, and
  /// dL/d(input) into `input_grad` when non-null. Backpropagation stops at
  /// range.first when the input gradient is not requested.
  void backward(const ForwardCache& cache, std::span<const double> output_grad,
                LayerRange range, GradientVector* grad,
                std::vector<double>* input_grad) const;

  /// Same pass, but entered at the final layer's pre-activation:
  /// `output_pre_grad` is dL/dz of the last layer. This is how bce following
  /// a sigmoid output is fused into the exact (y - t) form.
  void backward_pre(const ForwardCache& cache, std::span<const double> output_pre_grad,
                    LayerRange range, GradientVector* grad,
                    std::vector<double>* input_grad) const;

  /// theta += delta over delta.range; parameters outside the range are
  /// untouched. Throws std::invalid_argument on a layout mismatch.
  void apply_update(const GradientVector& delta);

  /// Copy of the layers in `range` as a standalone network.
  Network slice(LayerRange range) const;

  /// Concatenation: a's layers followed by b's. Output/input dims must chain.
  static Network stack(const Network& a, const Network& b);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void check_range(LayerRange range) const;

  std::vector<LayerSpec> specs_;
  std::vector<std::vector<double>> weights_;  // per layer, row-major out x in
  std::vector<std::vector<double>> biases_;   // per layer
  std::uint64_t seed_ = 0;
};

/// Scalar loss. mse: mean over dims of (y-t)^2. bce: mean over dims of
/// -(t ln y + (1-t) ln(1-y)) with y clamped to [1e-7, 1-1e-7] before the
/// logs. Throws std::invalid_argument on dim mismatch; NumericError when a
/// bce output lies outside [0,1].
double loss_value(LossKind kind, std::span<const double> output,
                  std::span<const double> target);

/// dL/dy for loss_value, written into `out`.
void loss_gradient(LossKind kind, std::span<const double> output,
                   std::span<const double> target, std::span<double> out);

/// Exact reverse-mode gradient of the per-example loss with respect to the
/// parameters in `subset`.
GradientVector per_example_gradient(const Network& net, std::span<const double> x,
                                    std::span<const double> target, LossKind loss,
                                    LayerRange subset);

/// Same, starting from an existing forward cache of `net`.
GradientVector per_example_gradient(const Network& net, const ForwardCache& cache,
                                    std::span<const double> target, LossKind loss,
                                    LayerRange subset);

/// Extracts the `subrange` slice of a gradient taken over a wider range of
/// `net` (blocks are contiguous per layer, so this is a copy of one run).
GradientVector slice_gradient(const Network& net, const GradientVector& full,
                              LayerRange subrange);

}  // namespace travag
