#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitface/nn/tensor.hpp"

namespace splitface::nn {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments keyed by parameter name.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

/// One bias-corrected ADAM update over `params` using their gradient slots.
/// Moments are created lazily (zero) the first time a parameter is seen.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state);

}  // namespace splitface::nn
