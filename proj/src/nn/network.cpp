#include "splitface/nn/network.hpp"

#include <cmath>

namespace splitface::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3: return "conv3";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::gap: return "gap";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "unknown";
}

int NetworkSpec::scaled_units(const LayerSpec& layer) const {
  if (!layer.scaled) return layer.units;
  return std::max(1, static_cast<int>(std::lround(layer.units * width_scale)));
}

void NetworkSpec::validate() const {
  if (!(width_scale >= 1.0 / 32.0))
    throw ShapeMismatch("width-scale must be at least 1/32, got " + std::to_string(width_scale));
}

Shape NetworkSpec::output_shape(const Shape& input) const {
  validate();
  Shape s = input;
  for (const auto& layer : layers) {
    switch (layer.kind) {
      case LayerKind::conv3:
        if (s.size() != 4) throw ShapeMismatch("conv3 expects a rank-4 input");
        s[1] = scaled_units(layer);
        break;
      case LayerKind::maxpool:
        if (s.size() != 4 || s[2] < 3 || s[3] < 3)
          throw ShapeMismatch("maxpool needs spatial extent >= 3, got " + shape_string(s));
        s[2] = maxpool_extent(s[2]);
        s[3] = maxpool_extent(s[3]);
        break;
      case LayerKind::gap:
        if (s.size() != 4) throw ShapeMismatch("gap expects a rank-4 input");
        s = {s[0], s[1]};
        break;
      case LayerKind::dense:
        if (s.size() != 2) throw ShapeMismatch("dense expects a rank-2 input");
        s[1] = scaled_units(layer);
        break;
      case LayerKind::batchnorm:
      case LayerKind::relu:
      case LayerKind::dropout:
      case LayerKind::sigmoid:
        break;
    }
  }
  return s;
}

void append_conv_block(NetworkSpec& spec, int channels) {
  spec.layers.push_back({LayerKind::conv3, channels});
  spec.layers.push_back({LayerKind::batchnorm});
  spec.layers.push_back({LayerKind::relu});
}

void append_maxpool(NetworkSpec& spec) { spec.layers.push_back({LayerKind::maxpool}); }

NetworkSpec segment_body_spec(double width_scale) {
  NetworkSpec spec;
  spec.width_scale = width_scale;
  append_conv_block(spec, 32);
  append_maxpool(spec);
  append_conv_block(spec, 64);
  append_conv_block(spec, 64);
  append_maxpool(spec);
  append_conv_block(spec, 128);
  append_maxpool(spec);
  append_conv_block(spec, 128);
  append_conv_block(spec, 256);
  spec.validate();
  return spec;
}

NetworkSpec full_face_body_spec(double width_scale) {
  NetworkSpec spec;
  spec.width_scale = width_scale;
  append_conv_block(spec, 32);
  append_maxpool(spec);
  append_conv_block(spec, 64);
  append_maxpool(spec);
  append_conv_block(spec, 64);
  append_maxpool(spec);
  append_conv_block(spec, 128);
  append_maxpool(spec);
  append_conv_block(spec, 128);
  append_conv_block(spec, 256);
  append_maxpool(spec);
  append_conv_block(spec, 256);
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------

template <typename T>
Conv3x3<T>::Conv3x3(std::string name, int in_channels, int out_channels, Rng& init)
    : weight_(name + ".weight", Tensor<T>({out_channels, in_channels, 3, 3})),
      bias_(name + ".bias", Tensor<T>({out_channels})) {
  const double stddev = std::sqrt(2.0 / (9.0 * in_channels));
  for (auto& w : weight_.value.values()) w = static_cast<T>(init.normal(0.0, stddev));
}

template <typename T>
Shape Conv3x3<T>::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != weight_.value.dim(1))
    throw ShapeMismatch(weight_.name + ": input " + shape_string(input));
  return {input[0], weight_.value.dim(0), input[2], input[3]};
}

template <typename T>
Tensor<T> Conv3x3<T>::infer(const Tensor<T>& input) const {
  return conv3x3_forward(input, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> Conv3x3<T>::forward(const Tensor<T>& input, TrainContext&) {
  input_ = input;
  return conv3x3_forward(input, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> Conv3x3<T>::backward(const Tensor<T>& grad_output) {
  auto g = conv3x3_backward(input_, weight_.value, grad_output, input_gradient_);
  weight_.grad += g.weights;
  bias_.grad += g.bias;
  return std::move(g.input);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, int channels)
    : gamma_(name + ".gamma", Tensor<T>({channels}, T{1})),
      beta_(name + ".beta", Tensor<T>({channels})),
      running_mean_{name + ".running_mean", Tensor<T>({channels})},
      running_var_{name + ".running_var", Tensor<T>({channels}, T{1})} {}

template <typename T>
Tensor<T> BatchNorm<T>::infer(const Tensor<T>& input) const {
  return batchnorm_eval_forward(input, gamma_.value, beta_.value, running_mean_.value,
                                running_var_.value);
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& input, TrainContext&) {
  auto out = batchnorm_train_forward(input, gamma_.value, beta_.value, cache_);
  batchnorm_update_running(cache_, running_mean_.value, running_var_.value);
  return out;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_output) {
  auto g = batchnorm_backward(grad_output, gamma_.value, cache_);
  gamma_.grad += g.gamma;
  beta_.grad += g.beta;
  return std::move(g.input);
}

template <typename T>
Shape MaxPool<T>::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[2] < 3 || input[3] < 3)
    throw ShapeMismatch("maxpool: input " + shape_string(input));
  return {input[0], input[1], maxpool_extent(input[2]), maxpool_extent(input[3])};
}

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& input, TrainContext&) {
  input_shape_ = input.shape();
  auto r = maxpool3x3s2_forward(input);
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

template <typename T>
Dense<T>::Dense(std::string name, int in_features, int out_features, Rng& init)
    : weight_(name + ".weight", Tensor<T>({out_features, in_features})),
      bias_(name + ".bias", Tensor<T>({out_features})) {
  const double limit = std::sqrt(6.0 / std::max(1, in_features + out_features));
  for (auto& w : weight_.value.values()) w = static_cast<T>(init.uniform(-limit, limit));
}

template <typename T>
Dense<T>::Dense(std::string name, Tensor<T> weight, Tensor<T> bias)
    : weight_(name + ".weight", std::move(weight)), bias_(name + ".bias", std::move(bias)) {
  if (weight_.value.rank() != 2 || bias_.value.size() != static_cast<std::size_t>(weight_.value.dim(0)))
    throw ShapeMismatch(name + ": inconsistent dense weight/bias shapes");
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_features())
    throw ShapeMismatch(weight_.name + ": input " + shape_string(input));
  return {input[0], out_features()};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& input, TrainContext&) {
  input_ = input;
  return dense_forward(input, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_output) {
  auto g = dense_backward(input_, weight_.value, grad_output);
  weight_.grad += g.weights;
  bias_.grad += g.bias;
  return std::move(g.input);
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& input, TrainContext& ctx) {
  if (rate_ > 0.0 && ctx.rng == nullptr)
    throw std::logic_error("dropout in train mode needs a random generator");
  Rng unused(0);
  return dropout_forward(input, rate_, ctx.rng ? *ctx.rng : unused, mask_);
}

template <typename T>
Sequential<T>::Sequential(std::string prefix, const NetworkSpec& spec, int input_channels,
                          Rng& init) {
  spec.validate();
  int channels = input_channels;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string name = prefix + "." + std::to_string(i) + "." + to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv3: {
        const int out = spec.scaled_units(l);
        add(std::make_unique<Conv3x3<T>>(name, channels, out, init));
        channels = out;
        break;
      }
      case LayerKind::batchnorm: add(std::make_unique<BatchNorm<T>>(name, channels)); break;
      case LayerKind::relu: add(std::make_unique<Relu<T>>()); break;
      case LayerKind::maxpool: add(std::make_unique<MaxPool<T>>()); break;
      case LayerKind::gap: add(std::make_unique<GlobalAveragePool<T>>()); break;
      case LayerKind::dense: {
        const int out = spec.scaled_units(l);
        add(std::make_unique<Dense<T>>(name, channels, out, init));
        channels = out;
        break;
      }
      case LayerKind::dropout: add(std::make_unique<Dropout<T>>(l.rate)); break;
      case LayerKind::sigmoid: add(std::make_unique<Sigmoid<T>>()); break;
    }
  }
}

template <typename T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& input) const {
  Tensor<T> x = input;
  for (const auto& l : layers_) x = l->infer(x);
  return x;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& input, TrainContext& ctx) {
  Tensor<T> x = input;
  for (auto& l : layers_) x = l->forward(x, ctx);
  return x;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename T>
std::vector<Parameter<T>*> Sequential<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Buffer<T>*> Sequential<T>::buffers() {
  std::vector<Buffer<T>*> out;
  for (auto& l : layers_)
    for (auto* b : l->buffers()) out.push_back(b);
  return out;
}

template class Conv3x3<float>;
template class Conv3x3<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class MaxPool<float>;
template class MaxPool<double>;
template class Dense<float>;
template class Dense<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace splitface::nn
