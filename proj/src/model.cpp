#include "splitface/model.hpp"

#include <algorithm>
#include <cmath>

namespace splitface {

AttributeMask AttributeMask::full(int num_attributes) {
  AttributeMask m;
  for (auto& attrs : m.attributes) {
    attrs.resize(static_cast<std::size_t>(num_attributes));
    for (int j = 0; j < num_attributes; ++j) attrs[j] = j;
  }
  return m;
}

int AttributeMask::position(int predictor, int a) const {
  const auto& attrs = attributes.at(static_cast<std::size_t>(predictor));
  const auto it = std::lower_bound(attrs.begin(), attrs.end(), a);
  return it != attrs.end() && *it == a ? static_cast<int>(it - attrs.begin()) : -1;
}

int AttributeMask::assigned_count(int a) const {
  int count = 0;
  for (int i = 0; i < kPredictorCount; ++i) count += contains(i, a) ? 1 : 0;
  return count;
}

PredictorFlags segment_dropout_mask(Rng& rng, const PredictorFlags& visible,
                                    double drop_probability) {
  PredictorFlags kept = visible;
  kept[kFullPredictor] = kept[kGlobalPredictor] = true;
  for (int i = 1; i <= kSegmentCount; ++i)
    if (visible[i]) kept[i] = !rng.bernoulli(drop_probability);
  return kept;
}

namespace {

std::string head_name(int predictor) { return "head." + predictor_name(predictor); }

nn::NetworkSpec global_conv_spec(double width_scale) {
  nn::NetworkSpec spec;
  spec.width_scale = width_scale;
  nn::append_conv_block(spec, 512);
  return spec;
}

nn::NetworkSpec global_merge_spec(double width_scale) {
  nn::NetworkSpec spec;
  spec.width_scale = width_scale;
  spec.layers.push_back({nn::LayerKind::dense, 256});
  spec.layers.push_back({nn::LayerKind::relu});
  spec.layers.push_back({nn::LayerKind::dropout, 0, kGlobalDropout});
  return spec;
}

template <typename T>
nn::Tensor<T> zero_samples(const nn::Tensor<T>& x, const std::vector<PredictorFlags>& flags,
                           int predictor) {
  nn::Tensor<T> out = x;
  if (out.rank() != 4) return out;
  const std::size_t per = out.size() / static_cast<std::size_t>(out.dim(0));
  for (int n = 0; n < out.dim(0); ++n)
    if (!flags[static_cast<std::size_t>(n)][predictor])
      std::fill_n(out.data() + n * per, per, T{0});
  return out;
}

void require_input_shape(const nn::Shape& s, int size, const char* what) {
  if (s.size() != 4 || s[1] != 3 || s[2] != size || s[3] != size)
    throw ShapeMismatch(std::string(what) + " must be (N, 3, " + std::to_string(size) + ", " +
                        std::to_string(size) + "), got " + nn::shape_string(s));
}

}  // namespace

template <typename T>
BasicSplitFaceModel<T>::BasicSplitFaceModel(const ModelConfig& config)
    : width_scale_(config.width_scale), attribute_names_(config.attribute_names) {
  if (config.num_attributes < 1) throw ShapeMismatch("a model needs at least one attribute");
  if (attribute_names_.empty())
    for (int j = 0; j < config.num_attributes; ++j) attribute_names_.push_back("attr" + std::to_string(j));
  if (static_cast<int>(attribute_names_.size()) != config.num_attributes)
    throw ShapeMismatch("attribute name count differs from num_attributes");
  mask_ = AttributeMask::full(config.num_attributes);
  priors_.assign(static_cast<std::size_t>(config.num_attributes), T(0.5));

  Rng init(config.seed);
  const auto seg_spec = nn::segment_body_spec(width_scale_);
  for (int i = 1; i <= kSegmentCount; ++i) {
    segment_bodies_[i - 1] = nn::Sequential<T>("seg." + predictor_name(i), seg_spec, 3, init);
    segment_bodies_[i - 1].set_input_gradient(false);
  }
  full_body_ = nn::Sequential<T>("full", nn::full_face_body_spec(width_scale_), 3, init);
  full_body_.set_input_gradient(false);
  global_conv_ = nn::Sequential<T>("gp.conv", global_conv_spec(width_scale_),
                                   kSegmentCount * segment_channels(), init);
  global_merge_ = nn::Sequential<T>("gp.merge", global_merge_spec(width_scale_),
                                    full_channels() + global_channels(), init);
  const int merge_units = global_merge_spec(width_scale_).output_shape({1, full_channels() + global_channels()})[1];
  for (int i = 0; i < kPredictorCount; ++i) {
    const int in = i == kFullPredictor ? full_channels()
                   : i == kGlobalPredictor ? merge_units
                                           : segment_channels();
    heads_[i] = std::make_unique<nn::Dense<T>>(head_name(i), in, config.num_attributes, init);
  }
}

template <typename T>
int BasicSplitFaceModel<T>::segment_channels() const {
  return nn::segment_body_spec(width_scale_).output_shape({1, 3, kSegmentInputSize, kSegmentInputSize})[1];
}

template <typename T>
int BasicSplitFaceModel<T>::full_channels() const {
  return nn::full_face_body_spec(width_scale_).output_shape({1, 3, kFullInputSize, kFullInputSize})[1];
}

template <typename T>
int BasicSplitFaceModel<T>::global_channels() const {
  return global_conv_spec(width_scale_).output_shape({1, 1, 3, 3})[1];
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> BasicSplitFaceModel<T>::forward_segment(
    int predictor, const nn::Tensor<T>& crop) const {
  if (predictor < 1 || predictor > kSegmentCount)
    throw ShapeMismatch("forward_segment: predictor " + std::to_string(predictor) + " is not a segment");
  require_input_shape(crop.shape(), kSegmentInputSize, "segment crop");
  auto maps = segment_bodies_[predictor - 1].infer(crop);
  auto scores = nn::sigmoid_forward(heads_[predictor]->infer(nn::gap_forward(maps)));
  return {std::move(scores), std::move(maps)};
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> BasicSplitFaceModel<T>::forward_full(
    const nn::Tensor<T>& face) const {
  require_input_shape(face.shape(), kFullInputSize, "face");
  auto f0 = nn::gap_forward(full_body_.infer(face));
  auto scores = nn::sigmoid_forward(heads_[kFullPredictor]->infer(f0));
  return {std::move(scores), std::move(f0)};
}

template <typename T>
nn::Tensor<T> BasicSplitFaceModel<T>::full_map(const nn::Tensor<T>& face) const {
  require_input_shape(face.shape(), kFullInputSize, "face");
  return full_body_.infer(face);
}

template <typename T>
nn::Tensor<T> BasicSplitFaceModel<T>::global_logits(const nn::Tensor<T>& f0,
                                                    const nn::Tensor<T>& fs) const {
  return heads_[kGlobalPredictor]->infer(global_merge_.infer(nn::concat_features(f0, fs)));
}

template <typename T>
nn::Tensor<T> BasicSplitFaceModel<T>::forward_global(
    const nn::Tensor<T>& f0, const std::array<nn::Tensor<T>, kSegmentCount>& maps) const {
  std::vector<const nn::Tensor<T>*> parts;
  for (const auto& m : maps) parts.push_back(&m);
  const auto fs = nn::gap_forward(global_conv_.infer(nn::concat_channels(parts)));
  return nn::sigmoid_forward(global_logits(f0, fs));
}

template <typename T>
ForwardResult<T> BasicSplitFaceModel<T>::infer(const ModelInput<T>& input) const {
  if (input.face.rank() != 4) throw MissingFullFace("no full-face tensor in the input");
  const int n = input.batch();
  if (static_cast<int>(input.visible.size()) != n)
    throw ShapeMismatch("visibility flags do not match the batch size");
  ForwardResult<T> r;
  r.fed = input.visible;
  for (auto& f : r.fed) f[kFullPredictor] = f[kGlobalPredictor] = true;

  require_input_shape(input.face.shape(), kFullInputSize, "face");
  r.feature_maps[0] = full_body_.infer(input.face);
  r.f0 = nn::gap_forward(r.feature_maps[0]);
  r.logits[kFullPredictor] = heads_[kFullPredictor]->infer(r.f0);

  std::vector<const nn::Tensor<T>*> parts;
  for (int i = 1; i <= kSegmentCount; ++i) {
    const auto x = zero_samples(input.segments[i - 1], r.fed, i);
    require_input_shape(x.shape(), kSegmentInputSize, "segment crop");
    r.feature_maps[i] = segment_bodies_[i - 1].infer(x);
    r.logits[i] = heads_[i]->infer(nn::gap_forward(r.feature_maps[i]));
    parts.push_back(&r.feature_maps[i]);
  }
  r.fs = nn::gap_forward(global_conv_.infer(nn::concat_channels(parts)));
  r.logits[kGlobalPredictor] = global_logits(r.f0, r.fs);
  for (int i = 0; i < kPredictorCount; ++i) r.scores[i] = nn::sigmoid_forward(r.logits[i]);
  return r;
}

template <typename T>
ForwardResult<T> BasicSplitFaceModel<T>::forward_all(const ModelInput<T>& input, Rng* rng,
                                                     double drop_probability) {
  if (input.face.rank() != 4) throw MissingFullFace("no full-face tensor in the input");
  const int n = input.batch();
  if (static_cast<int>(input.visible.size()) != n)
    throw ShapeMismatch("visibility flags do not match the batch size");
  require_input_shape(input.face.shape(), kFullInputSize, "face");

  Rng fallback(0);
  nn::TrainContext ctx{rng ? rng : &fallback};
  ForwardResult<T> r;
  r.fed.reserve(input.visible.size());
  for (const auto& v : input.visible) {
    if (rng && drop_probability > 0.0) {
      r.fed.push_back(segment_dropout_mask(*rng, v, drop_probability));
    } else {
      r.fed.push_back(v);
      r.fed.back()[kFullPredictor] = r.fed.back()[kGlobalPredictor] = true;
    }
  }

  r.feature_maps[0] = full_body_.forward(input.face, ctx);
  map_shapes_[0] = r.feature_maps[0].shape();
  r.f0 = nn::gap_forward(r.feature_maps[0]);
  r.logits[kFullPredictor] = heads_[kFullPredictor]->forward(r.f0, ctx);

  std::vector<const nn::Tensor<T>*> parts;
  for (int i = 1; i <= kSegmentCount; ++i) {
    const auto x = zero_samples(input.segments[i - 1], r.fed, i);
    require_input_shape(x.shape(), kSegmentInputSize, "segment crop");
    r.feature_maps[i] = segment_bodies_[i - 1].forward(x, ctx);
    map_shapes_[i] = r.feature_maps[i].shape();
    r.logits[i] = heads_[i]->forward(nn::gap_forward(r.feature_maps[i]), ctx);
    parts.push_back(&r.feature_maps[i]);
  }
  const auto global_map = global_conv_.forward(nn::concat_channels(parts), ctx);
  global_map_shape_ = global_map.shape();
  r.fs = nn::gap_forward(global_map);
  r.logits[kGlobalPredictor] =
      heads_[kGlobalPredictor]->forward(global_merge_.forward(nn::concat_features(r.f0, r.fs), ctx), ctx);
  for (int i = 0; i < kPredictorCount; ++i) r.scores[i] = nn::sigmoid_forward(r.logits[i]);
  have_cache_ = true;
  return r;
}

template <typename T>
void BasicSplitFaceModel<T>::backward(const std::array<nn::Tensor<T>, kPredictorCount>& grad_logits) {
  if (!have_cache_) throw std::logic_error("backward called without a train-mode forward");
  have_cache_ = false;

  // Global path first: it contributes to F_0 and to every C_i.
  const auto d_merged = global_merge_.backward(heads_[kGlobalPredictor]->backward(grad_logits[kGlobalPredictor]));
  const int n = d_merged.dim(0), f0w = full_channels(), fsw = global_channels();
  nn::Tensor<T> d_f0({n, f0w}), d_fs({n, fsw});
  for (int s = 0; s < n; ++s) {
    const T* row = d_merged.data() + static_cast<std::size_t>(s) * (f0w + fsw);
    std::copy_n(row, f0w, d_f0.data() + static_cast<std::size_t>(s) * f0w);
    std::copy_n(row + f0w, fsw, d_fs.data() + static_cast<std::size_t>(s) * fsw);
  }
  const auto d_concat = global_conv_.backward(nn::gap_backward(d_fs, global_map_shape_));
  auto d_maps = nn::split_channels(d_concat, std::vector<int>(kSegmentCount, segment_channels()));

  for (int i = 1; i <= kSegmentCount; ++i) {
    auto d_map = nn::gap_backward(heads_[i]->backward(grad_logits[i]), map_shapes_[i]);
    d_map += d_maps[i - 1];
    segment_bodies_[i - 1].backward(d_map);
  }

  d_f0 += heads_[kFullPredictor]->backward(grad_logits[kFullPredictor]);
  full_body_.backward(nn::gap_backward(d_f0, map_shapes_[0]));
}

template <typename T>
std::vector<nn::Parameter<T>*> BasicSplitFaceModel<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  auto append = [&](nn::Sequential<T>& s) {
    for (auto* p : s.parameters()) out.push_back(p);
  };
  for (auto& body : segment_bodies_) append(body);
  append(full_body_);
  append(global_conv_);
  append(global_merge_);
  for (auto& h : heads_)
    for (auto* p : h->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<nn::Buffer<T>*> BasicSplitFaceModel<T>::buffers() {
  std::vector<nn::Buffer<T>*> out;
  auto append = [&](nn::Sequential<T>& s) {
    for (auto* b : s.buffers()) out.push_back(b);
  };
  for (auto& body : segment_bodies_) append(body);
  append(full_body_);
  append(global_conv_);
  append(global_merge_);
  return out;
}

namespace {

template <typename T>
nn::Tensor<T> select_rows(const nn::Tensor<T>& t, const std::vector<int>& rows) {
  const int width = t.rank() == 2 ? t.dim(1) : 1;
  nn::Shape shape = t.shape();
  shape[0] = static_cast<int>(rows.size());
  nn::Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.data() + static_cast<std::size_t>(rows[r]) * width, width,
                out.data() + r * static_cast<std::size_t>(width));
  return out;
}

}  // namespace

template <typename T>
void BasicSplitFaceModel<T>::prune_heads(const AttributeMask& pruned, nn::AdamState<T>* adam) {
  for (int i = 0; i < kPredictorCount; ++i) {
    std::vector<int> rows;
    for (int a : pruned.attributes[i]) {
      const int pos = mask_.position(i, a);
      if (pos < 0)
        throw AttributeNotPredicted(predictor_name(i) + " cannot keep attribute " +
                                    std::to_string(a) + " it does not predict");
      rows.push_back(pos);
    }
    auto& old = *heads_[i];
    const std::string wname = old.weight().name, bname = old.bias().name;
    auto weight = select_rows(old.weight().value, rows);
    auto bias = select_rows(old.bias().value, rows);
    if (adam) {
      for (auto* moments : {&adam->first_moment, &adam->second_moment})
        for (const auto& name : {wname, bname})
          if (auto it = moments->find(name); it != moments->end())
            it->second = select_rows(it->second, rows);
    }
    heads_[i] = std::make_unique<nn::Dense<T>>(head_name(i), std::move(weight), std::move(bias));
  }
  mask_ = pruned;
}

template <typename T>
void BasicSplitFaceModel<T>::reshape_heads(const AttributeMask& mask) {
  for (int i = 0; i < kPredictorCount; ++i) {
    const int in = heads_[i]->in_features();
    const int out = static_cast<int>(mask.attributes[i].size());
    heads_[i] = std::make_unique<nn::Dense<T>>(head_name(i), nn::Tensor<T>({out, in}),
                                               nn::Tensor<T>({out}));
  }
  mask_ = mask;
}

template <typename T>
double model_loss(const ForwardResult<T>& result, const AttributeMask& mask,
                  const nn::Tensor<T>& labels, const std::vector<T>& priors,
                  std::array<nn::Tensor<T>, kPredictorCount>* grad_logits) {
  if (labels.rank() != 2 || labels.dim(1) != static_cast<int>(priors.size()))
    throw ShapeMismatch("labels must be (N, K) with K priors");
  const int n = labels.dim(0);
  if (static_cast<int>(result.fed.size()) != n) throw ShapeMismatch("result and labels differ in batch size");
  double total = 0.0;
  std::vector<T> s, y, w;
  for (int i = 0; i < kPredictorCount; ++i) {
    const auto& attrs = mask.attributes[i];
    const auto& scores = result.scores[i];
    if (grad_logits) (*grad_logits)[i] = nn::Tensor<T>(scores.shape());
    for (int b = 0; b < n; ++b) {
      if (!result.fed[static_cast<std::size_t>(b)][i]) continue;
      s.clear(), y.clear(), w.clear();
      for (std::size_t k = 0; k < attrs.size(); ++k) {
        const int j = attrs[k];
        const T label = labels.at(b, j);
        s.push_back(scores.at(b, static_cast<int>(k)));
        y.push_back(label);
        w.push_back(label > T(0.5) ? T(1) - priors[j] : priors[j]);
        // Through the sigmoid: d/dz of w * BCE(sigmoid(z), y) = w * (s - y).
        if (grad_logits)
          (*grad_logits)[i].at(b, static_cast<int>(k)) = static_cast<T>(w.back() * (s.back() - label) / n);
      }
      total += nn::weighted_bce<T>(s, y, w);
    }
  }
  return total / n;
}

template class BasicSplitFaceModel<float>;
template class BasicSplitFaceModel<double>;
template double model_loss(const ForwardResult<float>&, const AttributeMask&,
                           const nn::Tensor<float>&, const std::vector<float>&,
                           std::array<nn::Tensor<float>, kPredictorCount>*);
template double model_loss(const ForwardResult<double>&, const AttributeMask&,
                           const nn::Tensor<double>&, const std::vector<double>&,
                           std::array<nn::Tensor<double>, kPredictorCount>*);

}  // namespace splitface
