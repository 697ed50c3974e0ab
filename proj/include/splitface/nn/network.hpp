#pragma once

#include <memory>
#include <string>
#include <vector>

#include "splitface/nn/ops.hpp"
#include "splitface/nn/tensor.hpp"
#include "splitface/rng.hpp"

namespace splitface::nn {

enum class LayerKind { conv3, batchnorm, relu, maxpool, gap, dense, dropout, sigmoid };

std::string to_string(LayerKind kind);

/// One row element of an architecture description. `units` is the number of
/// output channels (conv3) or output features (dense) before width scaling.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int units = 0;
  double rate = 0.0;  // dropout only
  bool scaled = true; // dense heads sized by attribute count are not scaled
};

/// Ordered layer list plus the width-scale applied to every scaled channel
/// count (rounded, never below 1).
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  double width_scale = 1.0;

  int scaled_units(const LayerSpec& layer) const;
  /// Static shape propagation; throws ShapeMismatch when the input is too small.
  Shape output_shape(const Shape& input) const;
  /// Validates the vocabulary invariants (width-scale >= 1/32).
  void validate() const;
};

/// conv3-k -> BN -> ReLU, the repeated Table-1 unit.
void append_conv_block(NetworkSpec& spec, int channels);
void append_maxpool(NetworkSpec& spec);

/// Segment network body: 64x64 input, last conv feature returned (no GAP).
NetworkSpec segment_body_spec(double width_scale);
/// Full-face network body: 196x196 input, last conv feature returned (no GAP).
NetworkSpec full_face_body_spec(double width_scale);

struct TrainContext {
  Rng* rng = nullptr;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  /// Eval-mode forward: no caching, no statistics updates, no randomness.
  virtual Tensor<T> infer(const Tensor<T>& input) const = 0;
  /// Train-mode forward: caches what backward needs.
  virtual Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx) = 0;
  /// Returns d loss / d input and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>*> buffers() { return {}; }
  /// Layers that can skip the input gradient (the first layer of a body whose
  /// input is data) return an empty tensor from backward when disabled.
  virtual void set_input_gradient(bool) {}
};

template <typename T>
class Conv3x3 final : public Layer<T> {
 public:
  Conv3x3(std::string name, int in_channels, int out_channels, Rng& init);

  LayerKind kind() const override { return LayerKind::conv3; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void set_input_gradient(bool enabled) override { input_gradient_ = enabled; }

 private:
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
  bool input_gradient_ = true;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels);

  LayerKind kind() const override { return LayerKind::batchnorm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>*> buffers() override { return {&running_mean_, &running_var_}; }

 private:
  Parameter<T> gamma_, beta_;
  Buffer<T> running_mean_, running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> infer(const Tensor<T>& input) const override { return relu_forward(input); }
  Tensor<T> forward(const Tensor<T>& input, TrainContext&) override {
    input_ = input;
    return relu_forward(input);
  }
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    return relu_backward(grad_output, input_);
  }

 private:
  Tensor<T> input_;
};

template <typename T>
class MaxPool final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::maxpool; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> infer(const Tensor<T>& input) const override {
    return maxpool3x3s2_forward(input).output;
  }
  Tensor<T> forward(const Tensor<T>& input, TrainContext&) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    return maxpool3x3s2_backward(grad_output, argmax_, input_shape_);
  }

 private:
  std::vector<std::uint32_t> argmax_;
  Shape input_shape_;
};

template <typename T>
class GlobalAveragePool final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::gap; }
  Shape output_shape(const Shape& input) const override { return {input.at(0), input.at(1)}; }
  Tensor<T> infer(const Tensor<T>& input) const override { return gap_forward(input); }
  Tensor<T> forward(const Tensor<T>& input, TrainContext&) override {
    input_shape_ = input.shape();
    return gap_forward(input);
  }
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    return gap_backward(grad_output, input_shape_);
  }

 private:
  Shape input_shape_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, int in_features, int out_features, Rng& init);
  /// Builds from existing weights (out, in) and bias (out).
  Dense(std::string name, Tensor<T> weight, Tensor<T> bias);

  LayerKind kind() const override { return LayerKind::dense; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> infer(const Tensor<T>& input) const override {
    return dense_forward(input, weight_.value, bias_.value);
  }
  Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  int in_features() const { return weight_.value.dim(1); }
  int out_features() const { return weight_.value.dim(0); }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& weight() const { return weight_; }
  const Parameter<T>& bias() const { return bias_; }

 private:
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  LayerKind kind() const override { return LayerKind::dropout; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> infer(const Tensor<T>& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    return dropout_backward(grad_output, mask_);
  }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<T> mask_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::sigmoid; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> infer(const Tensor<T>& input) const override { return sigmoid_forward(input); }
  Tensor<T> forward(const Tensor<T>& input, TrainContext&) override {
    output_ = sigmoid_forward(input);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    return sigmoid_backward(grad_output, output_);
  }

 private:
  Tensor<T> output_;
};

/// A chain of layers built from a NetworkSpec. Parameter names are
/// "<prefix>.<layer index>.<kind>.<tensor>".
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(std::string prefix, const NetworkSpec& spec, int input_channels, Rng& init);

  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  /// When disabled, backward returns an empty tensor and skips the work.
  void set_input_gradient(bool enabled) {
    if (!layers_.empty()) layers_.front()->set_input_gradient(enabled);
  }

  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> forward(const Tensor<T>& input, TrainContext& ctx);
  Tensor<T> backward(const Tensor<T>& grad_output);

  Shape output_shape(const Shape& input) const;
  std::vector<Parameter<T>*> parameters();
  std::vector<Buffer<T>*> buffers();
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Zeroes every gradient slot.
template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.zero();
}

}  // namespace splitface::nn
