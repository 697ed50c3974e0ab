#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "splitface/geometry.hpp"
#include "splitface/nn/adam.hpp"
#include "splitface/nn/network.hpp"

namespace splitface {

inline constexpr int kSegmentInputSize = 64;
inline constexpr int kFullInputSize = 196;
inline constexpr double kGlobalDropout = 0.2;
inline constexpr double kSegmentDropout = 0.3;

using PredictorFlags = std::array<bool, kPredictorCount>;

/// N_i per predictor: sorted attribute indices each predictor emits.
struct AttributeMask {
  std::array<std::vector<int>, kPredictorCount> attributes;

  static AttributeMask full(int num_attributes);
  /// Position of attribute `a` within N_i, or -1.
  int position(int predictor, int a) const;
  bool contains(int predictor, int a) const { return position(predictor, a) >= 0; }
  /// Number of predictors assigned to attribute `a`.
  int assigned_count(int a) const;

  friend bool operator==(const AttributeMask&, const AttributeMask&) = default;
};

/// One batch of network inputs; pixels are scaled to [0, 1].
template <typename T>
struct ModelInput {
  nn::Tensor<T> face;                                  // (N, 3, 196, 196)
  std::array<nn::Tensor<T>, kSegmentCount> segments;   // (N, 3, 64, 64), zero where invisible
  std::vector<PredictorFlags> visible;                 // FULL and GP always true

  int batch() const { return face.rank() == 4 ? face.dim(0) : 0; }
};

template <typename T>
struct ForwardResult {
  /// (N, |N_i|) per predictor.
  std::array<nn::Tensor<T>, kPredictorCount> scores;
  /// Pre-sigmoid values, same shapes as `scores`.
  std::array<nn::Tensor<T>, kPredictorCount> logits;
  /// Whether predictor i actually received its segment for each sample
  /// (visible and not dropped). FULL and GP are always fed.
  std::vector<PredictorFlags> fed;
  /// C_1..C_14 at index 1..14 and the full-face final conv map at index 0.
  std::array<nn::Tensor<T>, kSegmentCount + 1> feature_maps;
  nn::Tensor<T> f0;  // GAP of the full-face map
  nn::Tensor<T> fs;  // GAP of the global conv over concatenated C_i
};

struct ModelConfig {
  int num_attributes = 40;
  double width_scale = 1.0;
  std::uint64_t seed = 1;
  std::vector<std::string> attribute_names;  // optional; defaults to attr<j>
};

/// Draws which visible segments survive segment dropout; each is kept
/// independently with probability 1 - drop_probability. FULL and GP are
/// always kept.
PredictorFlags segment_dropout_mask(Rng& rng, const PredictorFlags& visible,
                                    double drop_probability = kSegmentDropout);

/// The 14 segment networks, the full-face network and the global prediction
/// network, each with a GAP -> dense -> sigmoid head over its attribute mask.
template <typename T>
class BasicSplitFaceModel {
 public:
  explicit BasicSplitFaceModel(const ModelConfig& config);

  int num_attributes() const { return static_cast<int>(attribute_names_.size()); }
  double width_scale() const { return width_scale_; }
  const std::vector<std::string>& attribute_names() const { return attribute_names_; }
  const AttributeMask& mask() const { return mask_; }
  std::vector<T>& priors() { return priors_; }
  const std::vector<T>& priors() const { return priors_; }

  /// Channel width of every C_i and of F_0 / F_s.
  int segment_channels() const;
  int full_channels() const;
  int global_channels() const;

  // --- eval mode (no state changes) --------------------------------------
  /// Scores over N_i and the pre-GAP map C_i for segment predictor i in 1..14.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> forward_segment(int predictor,
                                                          const nn::Tensor<T>& crop) const;
  /// K scores and F_0.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> forward_full(const nn::Tensor<T>& face) const;
  /// Pre-GAP map of the full-face body; F_0 is its spatial mean.
  nn::Tensor<T> full_map(const nn::Tensor<T>& face) const;
  /// K scores from F_0 and C_1..C_14.
  nn::Tensor<T> forward_global(const nn::Tensor<T>& f0,
                               const std::array<nn::Tensor<T>, kSegmentCount>& maps) const;
  ForwardResult<T> infer(const ModelInput<T>& input) const;

  // --- train mode ---------------------------------------------------------
  /// Applies segment dropout (when rng is given and drop_probability > 0),
  /// feeds zero tensors for invisible or dropped segments and caches what
  /// backward needs. Throws MissingFullFace when the face tensor is absent.
  ForwardResult<T> forward_all(const ModelInput<T>& input, Rng* rng,
                               double drop_probability = kSegmentDropout);
  /// Back-propagates d loss / d logits for every predictor (same shapes as
  /// the scores) and accumulates parameter gradients.
  void backward(const std::array<nn::Tensor<T>, kPredictorCount>& grad_logits);

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<nn::Buffer<T>*> buffers();
  void zero_grad() { nn::zero_grads(parameters()); }

  /// Head of predictor i (FULL 0, segments 1..14, GP 15).
  const nn::Dense<T>& head(int predictor) const { return *heads_[predictor]; }
  nn::Dense<T>& head(int predictor) { return *heads_[predictor]; }

  /// Restricts each predictor's head to `pruned` (which must be a subset of
  /// the current mask), copying surviving rows and slicing matching ADAM
  /// moment rows when `adam` is given.
  void prune_heads(const AttributeMask& pruned, nn::AdamState<T>* adam = nullptr);

  /// Replaces the mask and reshapes heads to match; used by checkpoint loading
  /// before tensors are restored.
  void reshape_heads(const AttributeMask& mask);

 private:
  nn::Tensor<T> global_logits(const nn::Tensor<T>& f0, const nn::Tensor<T>& fs) const;

  double width_scale_;
  std::vector<std::string> attribute_names_;
  AttributeMask mask_;
  std::vector<T> priors_;

  std::array<nn::Sequential<T>, kSegmentCount> segment_bodies_;
  nn::Sequential<T> full_body_;
  nn::Sequential<T> global_conv_;   // conv3-512 -> BN -> ReLU over concatenated C_i
  nn::Sequential<T> global_merge_;  // dense-256 -> ReLU -> dropout over (F_0, F_s)
  std::array<std::unique_ptr<nn::Dense<T>>, kPredictorCount> heads_;

  // Train-mode caches for backward.
  std::array<nn::Shape, kSegmentCount + 1> map_shapes_;
  nn::Shape global_map_shape_;
  bool have_cache_ = false;
};

using SplitFaceModel = BasicSplitFaceModel<float>;

/// Per-sample loss averaged over the batch: for every predictor i and
/// attribute j in N_i, weighted binary cross-entropy with weight p_j for a
/// negative label and 1 - p_j for a positive one. Segment predictors only
/// contribute for samples where they were fed. Fills `grad_logits` with
/// d loss / d logit when non-null.
template <typename T>
double model_loss(const ForwardResult<T>& result, const AttributeMask& mask,
                  const nn::Tensor<T>& labels, const std::vector<T>& priors,
                  std::array<nn::Tensor<T>, kPredictorCount>* grad_logits = nullptr);

}  // namespace splitface
