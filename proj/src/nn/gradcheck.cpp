#include "splitface/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splitface::nn {

namespace {

// Smallest |z| over ReLU inputs and the smallest winner/runner-up gap over
// max-pool windows encountered during one train-mode forward pass.
double kink_distance(Sequential<double>& net, const Tensor<double>& input) {
  Rng rng(0);
  TrainContext ctx{&rng};
  double closest = std::numeric_limits<double>::infinity();
  Tensor<double> x = input;
  for (const auto& layer : net.layers()) {
    if (layer->kind() == LayerKind::relu) {
      for (double v : x.values()) closest = std::min(closest, std::abs(v));
    } else if (layer->kind() == LayerKind::maxpool) {
      const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      for (int p = 0; p < planes; ++p) {
        const double* src = x.data() + static_cast<std::size_t>(p) * h * w;
        for (int y = 0; y + 2 < h; y += 2)
          for (int xx = 0; xx + 2 < w; xx += 2) {
            double best = -std::numeric_limits<double>::infinity(), second = best;
            for (int dy = 0; dy < 3; ++dy)
              for (int dx = 0; dx < 3; ++dx) {
                const double v = src[(y + dy) * w + xx + dx];
                if (v > best) {
                  second = best;
                  best = v;
                } else if (v > second) {
                  second = v;
                }
              }
            closest = std::min(closest, best - second);
          }
      }
    }
    x = layer->forward(x, ctx);
  }
  return closest;
}

std::vector<double> loss_coefficients(const Shape& output_shape, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 1));
  std::vector<double> c(shape_numel(output_shape));
  for (auto& v : c) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
  return c;
}

double evaluate_loss(Sequential<double>& net, const Tensor<double>& input,
                     const std::vector<double>& coeffs) {
  Rng rng(0);
  TrainContext ctx{&rng};
  const auto out = net.forward(input, ctx);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) loss += coeffs[i] * out[i];
  return loss;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace

GradientCheckReport gradient_check(Sequential<double>& network, Tensor<double> input,
                                   double tolerance, const GradientCheckOptions& options) {
  GradientCheckReport report;
  Rng nudge(Rng::derive(options.seed, 2));
  while (kink_distance(network, input) < options.kink_margin) {
    if (report.nudges >= options.max_nudges)
      throw ToleranceExceeded("could not move activations away from ReLU/max-pool kinks");
    for (auto& v : input.values()) v += nudge.normal(0.0, 0.05);
    ++report.nudges;
  }

  const auto coeffs = loss_coefficients(network.output_shape(input.shape()), options.seed);
  auto params = network.parameters();

  // Analytic gradients.
  zero_grads(params);
  Rng rng(0);
  TrainContext ctx{&rng};
  const auto out = network.forward(input, ctx);
  Tensor<double> upstream(out.shape(), coeffs);
  const auto input_grad = network.backward(upstream);

  auto check_entries = [&](const std::string& name, std::span<double> values,
                           std::span<const double> analytic) {
    ParameterCheck pc{name, values.size(), 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = evaluate_loss(network, input, coeffs);
      values[i] = saved - options.step;
      const double minus = evaluate_loss(network, input, coeffs);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      pc.max_relative_error = std::max(
          pc.max_relative_error, relative_error(analytic[i], numeric, options.denominator_floor));
    }
    if (pc.max_relative_error >= report.max_relative_error) {
      report.max_relative_error = pc.max_relative_error;
      report.worst_parameter = name;
    }
    report.parameters.push_back(pc);
  };

  for (auto* p : params) {
    const Tensor<double> analytic = p->grad;
    check_entries(p->name, p->value.values(), analytic.values());
  }
  check_entries("input", input.values(), input_grad.values());

  if (!(report.max_relative_error <= tolerance))
    throw ToleranceExceeded("parameter '" + report.worst_parameter + "' has relative error " +
                            std::to_string(report.max_relative_error) + " > " +
                            std::to_string(tolerance));
  return report;
}

GradientCheckReport gradient_check(const NetworkSpec& spec, const Tensor<double>& input,
                                   double tolerance, const GradientCheckOptions& options) {
  Rng init(Rng::derive(options.seed, 3));
  Sequential<double> net("check", spec, input.dim(1), init);
  for (auto* b : net.parameters()) {
    const auto& n = b->name;
    if (n.ends_with(".gamma"))
      for (auto& v : b->value.values()) v = init.uniform(0.5, 1.5);
    else if (n.ends_with(".beta") || n.ends_with(".bias"))
      for (auto& v : b->value.values()) v = init.uniform(-0.5, 0.5);
  }
  return gradient_check(net, input, tolerance, options);
}

NetworkSpec toy_network_spec() {
  NetworkSpec spec;
  append_conv_block(spec, 3);
  append_maxpool(spec);
  append_conv_block(spec, 4);
  spec.layers.push_back({LayerKind::gap});
  spec.layers.push_back({LayerKind::dense, 3});
  spec.layers.push_back({LayerKind::sigmoid});
  return spec;
}

}  // namespace splitface::nn
