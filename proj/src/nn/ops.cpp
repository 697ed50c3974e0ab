#include "splitface/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace splitface::nn {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using Arr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// Target number of GEMM columns per chunk; small feature maps are batched
// across samples so the GEMM stays reasonably wide.
constexpr int kGemmColumns = 1024;

void require_rank(const Shape& s, int rank, const char* where) {
  if (static_cast<int>(s.size()) != rank)
    throw ShapeMismatch(std::string(where) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_string(s));
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weights, const char* where) {
  require_rank(input.shape(), 4, where);
  require_rank(weights.shape(), 4, where);
  if (weights.dim(2) != 3 || weights.dim(3) != 3)
    throw ShapeMismatch(std::string(where) + ": kernel must be 3x3, got " +
                        shape_string(weights.shape()));
  if (weights.dim(1) != input.dim(1))
    throw ShapeMismatch(std::string(where) + ": input channels " + std::to_string(input.dim(1)) +
                        " vs kernel channels " + std::to_string(weights.dim(1)));
}

int chunk_samples(int batch, int plane) {
  return std::clamp(kGemmColumns / std::max(plane, 1), 1, std::max(batch, 1));
}

// Expands samples [n0, n0 + count) into a (C*9, count*H*W) row-major matrix.
template <typename T>
void im2col(const T* input, int channels, int height, int width, int n0, int count, T* col) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t cols = plane * static_cast<std::size_t>(count);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * cols;
        for (int s = 0; s < count; ++s) {
          const T* src = input + (static_cast<std::size_t>(n0 + s) * channels + c) * plane;
          T* dst = row + static_cast<std::size_t>(s) * plane;
          for (int y = 0; y < height; ++y) {
            const int iy = y + ky - 1;
            T* out = dst + static_cast<std::size_t>(y) * width;
            if (iy < 0 || iy >= height) {
              std::fill(out, out + width, T{0});
              continue;
            }
            const T* in = src + static_cast<std::size_t>(iy) * width;
            const int shift = kx - 1;
            const int x_begin = std::max(0, -shift);
            const int x_end = std::min(width, width - shift);
            for (int x = 0; x < x_begin; ++x) out[x] = T{0};
            std::copy(in + x_begin + shift, in + x_end + shift, out + x_begin);
            for (int x = x_end; x < width; ++x) out[x] = T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates a (C*9, count*H*W) matrix into samples.
template <typename T>
void col2im(const T* col, int channels, int height, int width, int n0, int count, T* grad_input) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t cols = plane * static_cast<std::size_t>(count);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * cols;
        for (int s = 0; s < count; ++s) {
          T* dst = grad_input + (static_cast<std::size_t>(n0 + s) * channels + c) * plane;
          const T* src = row + static_cast<std::size_t>(s) * plane;
          for (int y = 0; y < height; ++y) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= height) continue;
            const T* in = src + static_cast<std::size_t>(y) * width;
            T* out = dst + static_cast<std::size_t>(iy) * width;
            const int shift = kx - 1;
            const int x_begin = std::max(0, -shift);
            const int x_end = std::min(width, width - shift);
            for (int x = x_begin; x < x_end; ++x) out[x + shift] += in[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  check_conv_shapes(input, weights, "conv3x3_forward");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int k = weights.dim(0);
  if (bias.size() != static_cast<std::size_t>(k))
    throw ShapeMismatch("conv3x3_forward: bias length " + std::to_string(bias.size()) +
                        " vs filters " + std::to_string(k));
  Tensor<T> out({n, k, h, w});
  const int plane = h * w;
  const int chunk = chunk_samples(n, plane);
  AlignedVector<T> col(static_cast<std::size_t>(c) * 9 * plane * chunk);
  AlignedVector<T> tmp(static_cast<std::size_t>(k) * plane * chunk);
  ConstRowMap<T> wmat(weights.data(), k, c * 9);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data(), k);

  for (int n0 = 0; n0 < n; n0 += chunk) {
    const int count = std::min(chunk, n - n0);
    const int cols = count * plane;
    im2col(input.data(), c, h, w, n0, count, col.data());
    ConstRowMap<T> cmat(col.data(), c * 9, cols);
    if (count == 1) {
      RowMap<T> omat(out.data() + static_cast<std::size_t>(n0) * k * plane, k, plane);
      omat.noalias() = wmat * cmat;
      omat.colwise() += bvec;
    } else {
      RowMap<T> omat(tmp.data(), k, cols);
      omat.noalias() = wmat * cmat;
      omat.colwise() += bvec;
      for (int s = 0; s < count; ++s)
        for (int f = 0; f < k; ++f)
          std::copy_n(tmp.data() + static_cast<std::size_t>(f) * cols +
                          static_cast<std::size_t>(s) * plane,
                      plane, out.data() + (static_cast<std::size_t>(n0 + s) * k + f) * plane);
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>& grad_output, bool compute_input) {
  check_conv_shapes(input, weights, "conv3x3_backward");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int k = weights.dim(0);
  if (grad_output.shape() != Shape{n, k, h, w})
    throw ShapeMismatch("conv3x3_backward: grad_output " + shape_string(grad_output.shape()));

  ConvGrads<T> g{compute_input ? Tensor<T>(input.shape()) : Tensor<T>(),
                 Tensor<T>(weights.shape()), Tensor<T>({k})};
  const int plane = h * w;
  const int chunk = chunk_samples(n, plane);
  AlignedVector<T> col(static_cast<std::size_t>(c) * 9 * plane * chunk);
  AlignedVector<T> dy(static_cast<std::size_t>(k) * plane * chunk);
  ConstRowMap<T> wmat(weights.data(), k, c * 9);
  RowMap<T> dw(g.weights.data(), k, c * 9);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(g.bias.data(), k);

  for (int n0 = 0; n0 < n; n0 += chunk) {
    const int count = std::min(chunk, n - n0);
    const int cols = count * plane;
    im2col(input.data(), c, h, w, n0, count, col.data());
    for (int s = 0; s < count; ++s)
      for (int f = 0; f < k; ++f)
        std::copy_n(grad_output.data() + (static_cast<std::size_t>(n0 + s) * k + f) * plane, plane,
                    dy.data() + static_cast<std::size_t>(f) * cols +
                        static_cast<std::size_t>(s) * plane);
    ConstRowMap<T> cmat(col.data(), c * 9, cols);
    ConstRowMap<T> dymat(dy.data(), k, cols);
    dw.noalias() += dymat * cmat.transpose();
    db += dymat.rowwise().sum();
    if (!compute_input) continue;
    RowMap<T> dcol(col.data(), c * 9, cols);
    dcol.noalias() = wmat.transpose() * dymat;
    col2im(col.data(), c, h, w, n0, count, g.input.data());
  }
  return g;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_channels: no parts");
  const Shape& first = parts.front()->shape();
  require_rank(first, 4, "concat_channels");
  int total = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
      throw ShapeMismatch("concat_channels: " + shape_string(s) + " vs " + shape_string(first));
    total += s[1];
  }
  const int n = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
  Tensor<T> out({n, total, first[2], first[3]});
  for (int s = 0; s < n; ++s) {
    T* dst = out.data() + static_cast<std::size_t>(s) * total * plane;
    for (const auto* p : parts) {
      const std::size_t len = static_cast<std::size_t>(p->dim(1)) * plane;
      dst = std::copy_n(p->data() + static_cast<std::size_t>(s) * len, len, dst);
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& whole, const std::vector<int>& channels) {
  require_rank(whole.shape(), 4, "split_channels");
  const int n = whole.dim(0), total = whole.dim(1);
  if (std::accumulate(channels.begin(), channels.end(), 0) != total)
    throw ShapeMismatch("split_channels: channel counts do not sum to " + std::to_string(total));
  const std::size_t plane = static_cast<std::size_t>(whole.dim(2)) * whole.dim(3);
  std::vector<Tensor<T>> parts;
  parts.reserve(channels.size());
  for (int c : channels) parts.emplace_back(Shape{n, c, whole.dim(2), whole.dim(3)});
  for (int s = 0; s < n; ++s) {
    const T* src = whole.data() + static_cast<std::size_t>(s) * total * plane;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::size_t len = static_cast<std::size_t>(channels[i]) * plane;
      std::copy_n(src, len, parts[i].data() + static_cast<std::size_t>(s) * len);
      src += len;
    }
  }
  return parts;
}

template <typename T>
Tensor<T> concat_features(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "concat_features");
  require_rank(b.shape(), 2, "concat_features");
  if (a.dim(0) != b.dim(0))
    throw ShapeMismatch("concat_features: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const int n = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  Tensor<T> out({n, fa + fb});
  for (int s = 0; s < n; ++s) {
    std::copy_n(a.data() + static_cast<std::size_t>(s) * fa, fa, out.data() + static_cast<std::size_t>(s) * (fa + fb));
    std::copy_n(b.data() + static_cast<std::size_t>(s) * fb, fb,
                out.data() + static_cast<std::size_t>(s) * (fa + fb) + fa);
  }
  return out;
}

template <typename T>
PoolResult<T> maxpool3x3s2_forward(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "maxpool3x3s2_forward");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 3 || w < 3)
    throw ShapeMismatch("maxpool3x3s2_forward: spatial extent below 3 in " +
                        shape_string(input.shape()));
  const int oh = maxpool_extent(h), ow = maxpool_extent(w);
  PoolResult<T> r{Tensor<T>({n, c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    const T* src = input.data() + base;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        std::size_t best = static_cast<std::size_t>(2 * y) * w + 2 * x;
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx) {
            const std::size_t idx = static_cast<std::size_t>(2 * y + dy) * w + 2 * x + dx;
            if (src[idx] > src[best]) best = idx;
          }
        r.output[o] = src[best];
        r.argmax[o] = static_cast<std::uint32_t>(base + best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3x3s2_backward(const Tensor<T>& grad_output,
                                const std::vector<std::uint32_t>& argmax,
                                const Shape& input_shape) {
  if (argmax.size() != grad_output.size())
    throw ShapeMismatch("maxpool3x3s2_backward: argmax/grad length mismatch");
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_output[i];
  return g;
}

template <typename T>
Tensor<T> batchnorm_train_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, BatchNormCache<T>& cache,
                                  double epsilon) {
  require_rank(input.shape(), 4, "batchnorm_train_forward");
  const int n = input.dim(0), c = input.dim(1);
  const auto plane = static_cast<Eigen::Index>(input.dim(2)) * input.dim(3);
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c))
    throw ShapeMismatch("batchnorm_train_forward: affine parameters do not match channels");
  if (n < 2)
    throw DegenerateBatch("batch normalisation in train mode needs at least 2 samples, got " +
                          std::to_string(n));
  cache.normalized = Tensor<T>(input.shape());
  cache.inv_std.assign(c, T{0});
  cache.mean.assign(c, T{0});
  cache.variance.assign(c, T{0});
  Tensor<T> out(input.shape());
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  auto offset = [&](int s, int ch) { return (static_cast<std::size_t>(s) * c + ch) * plane; };
  for (int ch = 0; ch < c; ++ch) {
    // Per-plane partial sums in T (vectorised), accumulated across planes in double.
    double sum = 0.0;
    for (int s = 0; s < n; ++s) sum += ConstArr<T>(input.data() + offset(s, ch), plane).sum();
    const double mean = sum / count;
    const T mean_t = static_cast<T>(mean);
    double sq = 0.0, shift = 0.0;
    for (int s = 0; s < n; ++s) {
      const auto d = ConstArr<T>(input.data() + offset(s, ch), plane) - mean_t;
      sq += d.square().sum();
      shift += d.sum();
    }
    // Corrects for the rounding of mean_t (two-pass compensated variance).
    const double var = std::max(0.0, (sq - shift * shift / count) / count);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    cache.mean[ch] = static_cast<T>(mean);
    cache.variance[ch] = static_cast<T>(var);
    cache.inv_std[ch] = static_cast<T>(inv);
    const T g = gamma[ch], b = beta[ch], inv_t = static_cast<T>(inv);
    const T centre = static_cast<T>(mean + shift / count);
    for (int s = 0; s < n; ++s) {
      const std::size_t off = offset(s, ch);
      Arr<T> xh(cache.normalized.data() + off, plane);
      xh = (ConstArr<T>(input.data() + off, plane) - centre) * inv_t;
      Arr<T>(out.data() + off, plane) = xh * g + b;
    }
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_eval_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                 const Tensor<T>& beta, const Tensor<T>& running_mean,
                                 const Tensor<T>& running_var, double epsilon) {
  require_rank(input.shape(), 4, "batchnorm_eval_forward");
  const int n = input.dim(0), c = input.dim(1);
  const auto plane = static_cast<Eigen::Index>(input.dim(2)) * input.dim(3);
  const auto cs = static_cast<std::size_t>(c);
  if (gamma.size() != cs || beta.size() != cs || running_mean.size() != cs ||
      running_var.size() != cs)
    throw ShapeMismatch("batchnorm_eval_forward: statistics do not match channels");
  Tensor<T> out(input.shape());
  for (int ch = 0; ch < c; ++ch) {
    const T scale = static_cast<T>(gamma[ch] / std::sqrt(static_cast<double>(running_var[ch]) + epsilon));
    const T shift = beta[ch] - scale * running_mean[ch];
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
      Arr<T>(out.data() + off, plane) = ConstArr<T>(input.data() + off, plane) * scale + shift;
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_output, const Tensor<T>& gamma,
                                     const BatchNormCache<T>& cache) {
  grad_output.require_same_shape(cache.normalized, "batchnorm_backward");
  const int n = grad_output.dim(0), c = grad_output.dim(1);
  const auto plane = static_cast<Eigen::Index>(grad_output.dim(2)) * grad_output.dim(3);
  BatchNormGrads<T> g{Tensor<T>(grad_output.shape()), Tensor<T>({c}), Tensor<T>({c})};
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  for (int ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
      const ConstArr<T> dy(grad_output.data() + off, plane);
      sum_dy += dy.sum();
      sum_dy_xh += (dy * ConstArr<T>(cache.normalized.data() + off, plane)).sum();
    }
    g.beta[ch] = static_cast<T>(sum_dy);
    g.gamma[ch] = static_cast<T>(sum_dy_xh);
    // dx = gamma * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
    const double k = static_cast<double>(gamma[ch]) * cache.inv_std[ch] / count;
    const T a = static_cast<T>(k * count), b = static_cast<T>(k * sum_dy),
            e = static_cast<T>(k * sum_dy_xh);
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
      Arr<T>(g.input.data() + off, plane) =
          ConstArr<T>(grad_output.data() + off, plane) * a - b -
          ConstArr<T>(cache.normalized.data() + off, plane) * e;
    }
  }
  return g;
}

template <typename T>
void batchnorm_update_running(const BatchNormCache<T>& cache, Tensor<T>& running_mean,
                              Tensor<T>& running_var, double momentum) {
  for (std::size_t ch = 0; ch < cache.mean.size(); ++ch) {
    running_mean[ch] = static_cast<T>(momentum * running_mean[ch] + (1.0 - momentum) * cache.mean[ch]);
    running_var[ch] =
        static_cast<T>(momentum * running_var[ch] + (1.0 - momentum) * cache.variance[ch]);
  }
}

template <typename T>
Tensor<T> gap_forward(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "gap_forward");
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double sum = ConstArr<T>(input.data() + p * plane, static_cast<Eigen::Index>(plane)).sum();
    out[p] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
Tensor<T> gap_backward(const Tensor<T>& grad_output, const Shape& input_shape) {
  require_rank(input_shape, 4, "gap_backward");
  if (grad_output.shape() != Shape{input_shape[0], input_shape[1]})
    throw ShapeMismatch("gap_backward: grad_output " + shape_string(grad_output.shape()));
  const std::size_t plane = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
  Tensor<T> g(input_shape);
  const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
  for (std::size_t p = 0; p < grad_output.size(); ++p)
    std::fill_n(g.data() + p * plane, plane, grad_output[p] * inv);
  return g;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "dense_forward");
  require_rank(weights.shape(), 2, "dense_forward");
  const int n = input.dim(0), in = input.dim(1), out_dim = weights.dim(0);
  if (weights.dim(1) != in || bias.size() != static_cast<std::size_t>(out_dim))
    throw ShapeMismatch("dense_forward: input " + shape_string(input.shape()) + ", weights " +
                        shape_string(weights.shape()));
  Tensor<T> out({n, out_dim});
  if (out_dim == 0 || n == 0) return out;
  ConstRowMap<T> x(input.data(), n, in);
  ConstRowMap<T> wm(weights.data(), out_dim, in);
  RowMap<T> y(out.data(), n, out_dim);
  y.noalias() = x * wm.transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), out_dim);
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_output) {
  const int n = input.dim(0), in = input.dim(1), out_dim = weights.dim(0);
  if (grad_output.shape() != Shape{n, out_dim})
    throw ShapeMismatch("dense_backward: grad_output " + shape_string(grad_output.shape()));
  DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({out_dim})};
  if (out_dim == 0 || n == 0) return g;
  ConstRowMap<T> x(input.data(), n, in);
  ConstRowMap<T> wm(weights.data(), out_dim, in);
  ConstRowMap<T> dy(grad_output.data(), n, out_dim);
  RowMap<T>(g.input.data(), n, in).noalias() = dy * wm;
  RowMap<T>(g.weights.data(), out_dim, in).noalias() = dy.transpose() * x;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.data(), out_dim) = dy.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const auto len = static_cast<Eigen::Index>(input.size());
  Arr<T>(out.data(), len) = ConstArr<T>(input.data(), len).max(T{0});
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& input) {
  grad_output.require_same_shape(input, "relu_backward");
  Tensor<T> g(input.shape());
  const auto len = static_cast<Eigen::Index>(input.size());
  Arr<T>(g.data(), len) = (ConstArr<T>(input.data(), len) > T{0})
                              .select(ConstArr<T>(grad_output.data(), len), T{0});
  return g;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    // Branches keep exp() from overflowing for large |x|.
    if (x >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T{1} + e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_output, const Tensor<T>& output) {
  grad_output.require_same_shape(output, "sigmoid_backward");
  Tensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i)
    g[i] = grad_output[i] * output[i] * (T{1} - output[i]);
  return g;
}

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Rng& rng, std::vector<T>& mask) {
  mask.assign(input.size(), T{1});
  if (rate <= 0.0) return input;
  Tensor<T> out(input.shape());
  if (rate >= 1.0) {
    std::fill(mask.begin(), mask.end(), T{0});
    return out;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T{0} : scale;
    out[i] = input[i] * mask[i];
  }
  return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const std::vector<T>& mask) {
  if (mask.size() != grad_output.size())
    throw ShapeMismatch("dropout_backward: mask length mismatch");
  Tensor<T> g(grad_output.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) g[i] = grad_output[i] * mask[i];
  return g;
}

namespace {
template <typename T>
void check_bce_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ShapeMismatch("weighted_bce: scores, labels and weights differ in length");
}
template <typename T>
T clip_score(T s) {
  return std::clamp(s, static_cast<T>(kScoreClip), static_cast<T>(1.0 - kScoreClip));
}
}  // namespace

template <typename T>
T weighted_bce(std::span<const T> scores, std::span<const T> labels, std::span<const T> weights) {
  check_bce_lengths<T>(scores.size(), labels.size(), weights.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double s = clip_score(scores[j]);
    const double y = labels[j];
    loss += weights[j] * (-y * std::log(s) - (1.0 - y) * std::log(1.0 - s));
  }
  return static_cast<T>(loss);
}

template <typename T>
std::vector<T> weighted_bce_backward(std::span<const T> scores, std::span<const T> labels,
                                     std::span<const T> weights) {
  check_bce_lengths<T>(scores.size(), labels.size(), weights.size());
  std::vector<T> g(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double s = clip_score(scores[j]);
    g[j] = static_cast<T>(weights[j] * (s - labels[j]) / (s * (1.0 - s)));
  }
  return g;
}

#define SPLITFACE_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv3x3_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template ConvGrads<T> conv3x3_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                         bool);                                                   \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                       \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, const std::vector<int>&);      \
  template Tensor<T> concat_features(const Tensor<T>&, const Tensor<T>&);                         \
  template PoolResult<T> maxpool3x3s2_forward(const Tensor<T>&);                                  \
  template Tensor<T> maxpool3x3s2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,   \
                                           const Shape&);                                         \
  template Tensor<T> batchnorm_train_forward(const Tensor<T>&, const Tensor<T>&,                  \
                                             const Tensor<T>&, BatchNormCache<T>&, double);       \
  template Tensor<T> batchnorm_eval_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                            const Tensor<T>&, const Tensor<T>&, double);          \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const Tensor<T>&,               \
                                                const BatchNormCache<T>&);                        \
  template void batchnorm_update_running(const BatchNormCache<T>&, Tensor<T>&, Tensor<T>&,        \
                                         double);                                                 \
  template Tensor<T> gap_forward(const Tensor<T>&);                                               \
  template Tensor<T> gap_backward(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> relu_forward(const Tensor<T>&);                                              \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sigmoid_forward(const Tensor<T>&);                                           \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> dropout_forward(const Tensor<T>&, double, Rng&, std::vector<T>&);            \
  template Tensor<T> dropout_backward(const Tensor<T>&, const std::vector<T>&);                   \
  template T weighted_bce(std::span<const T>, std::span<const T>, std::span<const T>);            \
  template std::vector<T> weighted_bce_backward(std::span<const T>, std::span<const T>,           \
                                                std::span<const T>);

SPLITFACE_INSTANTIATE_OPS(float)
SPLITFACE_INSTANTIATE_OPS(double)

}  // namespace splitface::nn
