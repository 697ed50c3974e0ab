#pragma once

#include <cstdint>
#include <vector>

#include "splitface/nn/tensor.hpp"
#include "splitface/rng.hpp"

// Stateless kernels for the fixed layer vocabulary. Every function validates
// shapes and throws ShapeMismatch on disagreement. Rank-4 tensors are NCHW,
// rank-2 tensors are (batch, features).
namespace splitface::nn {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kScoreClip = 1e-7;

// 3x3 convolution, stride 1, zero padding 1. Weights (K, C, 3, 3), bias (K).
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>& grad_output, bool compute_input = true);

// Channel-axis concatenation of rank-4 tensors sharing N, H, W.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);
// Inverse of concat_channels: slices `channels[i]` channels per part.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& whole, const std::vector<int>& channels);

// Feature-axis concatenation of rank-2 tensors.
template <typename T>
Tensor<T> concat_features(const Tensor<T>& a, const Tensor<T>& b);

// 3x3 max pooling, stride 2, no padding; extent floor((n - 3) / 2) + 1.
inline int maxpool_extent(int n) { return (n - 3) / 2 + 1; }

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

template <typename T>
PoolResult<T> maxpool3x3s2_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool3x3s2_backward(const Tensor<T>& grad_output,
                                const std::vector<std::uint32_t>& argmax, const Shape& input_shape);

// Batch normalisation over (N, H, W) per channel.
template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;          // x-hat, same shape as input
  std::vector<T> inv_std;        // per channel
  std::vector<T> mean;           // per channel batch mean
  std::vector<T> variance;       // per channel biased batch variance
};

template <typename T>
Tensor<T> batchnorm_train_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, BatchNormCache<T>& cache,
                                  double epsilon = kBatchNormEpsilon);

template <typename T>
Tensor<T> batchnorm_eval_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                 const Tensor<T>& beta, const Tensor<T>& running_mean,
                                 const Tensor<T>& running_var, double epsilon = kBatchNormEpsilon);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_output, const Tensor<T>& gamma,
                                     const BatchNormCache<T>& cache);

// Running statistics update: r = momentum * r + (1 - momentum) * batch.
template <typename T>
void batchnorm_update_running(const BatchNormCache<T>& cache, Tensor<T>& running_mean,
                              Tensor<T>& running_var, double momentum = kBatchNormMomentum);

// Global average pooling: (N, C, H, W) -> (N, C).
template <typename T>
Tensor<T> gap_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> gap_backward(const Tensor<T>& grad_output, const Shape& input_shape);

// Fully connected: y = x W^T + b with W (out, in), b (out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_output);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& input);

/// Uses the forward output s: ds/dx = s (1 - s).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_output, const Tensor<T>& output);

/// Inverted dropout. `mask` receives the per-element multiplier (0 or
/// 1/keep). rate 0 leaves the input untouched and draws nothing.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Rng& rng, std::vector<T>& mask);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const std::vector<T>& mask);

/// Weighted binary cross-entropy summed over all elements:
///   sum_j w_j * (-y_j log s_j - (1 - y_j) log(1 - s_j)), s clipped to [1e-7, 1 - 1e-7].
template <typename T>
T weighted_bce(std::span<const T> scores, std::span<const T> labels, std::span<const T> weights);

/// d loss / d s_j = w_j (s_j - y_j) / (s_j (1 - s_j)) at the clipped score.
template <typename T>
std::vector<T> weighted_bce_backward(std::span<const T> scores, std::span<const T> labels,
                                     std::span<const T> weights);

}  // namespace splitface::nn
