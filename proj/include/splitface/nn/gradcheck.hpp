#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitface/nn/network.hpp"

namespace splitface::nn {

struct GradientCheckOptions {
  double step = 1e-5;
  /// Denominator floor so that exactly-zero gradients (e.g. a conv bias feeding
  /// batch norm) compare on an absolute scale.
  double denominator_floor = 1e-6;
  /// Minimum distance of ReLU inputs from 0 and of max-pool winners from the
  /// runner-up; closer configurations are nudged away.
  double kink_margin = 1e-3;
  int max_nudges = 32;
  std::uint64_t seed = 7;
};

struct ParameterCheck {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::vector<ParameterCheck> parameters;  // includes an "input" entry
  int nudges = 0;
};

/// Central finite differences against backward for every parameter entry and
/// every input entry of `network` in train mode, using the scalar loss
/// sum_i c_i * output_i with fixed pseudo-random coefficients. Throws
/// ToleranceExceeded naming the worst parameter when the error exceeds
/// `tolerance`.
GradientCheckReport gradient_check(Sequential<double>& network, Tensor<double> input,
                                   double tolerance, const GradientCheckOptions& options = {});

/// Builds a randomised network from `spec` (batch-norm affine terms are also
/// randomised) and checks it.
GradientCheckReport gradient_check(const NetworkSpec& spec, const Tensor<double>& input,
                                   double tolerance, const GradientCheckOptions& options = {});

/// The small conv + BN + ReLU + pool + GAP + dense + sigmoid stack used by
/// the `gradcheck` command.
NetworkSpec toy_network_spec();

}  // namespace splitface::nn
