#include "splitface/data.hpp"

#include <algorithm>
#include <unordered_map>

#include "splitface/rng.hpp"
#include "splitface/text.hpp"

namespace splitface {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput(path.string() + " not found");
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  const auto v = text::to_double(s);
  if (!v) throw MalformedRow(where(path, line) + ": bad number '" + s + "'");
  return *v;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

int AttributeAnnotations::index_of(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

AttributeAnnotations parse_attr_file(const std::filesystem::path& path) {
  require_file(path);
  auto lines = text::read_lines(path);
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 2) throw MalformedHeader(path.string() + ": missing count or name line");
  const auto count = text::to_int(lines[0]);
  if (!count || *count < 0) throw MalformedHeader(where(path, 1) + ": bad image count '" + lines[0] + "'");

  AttributeAnnotations a;
  a.names = text::split_ws(lines[1]);
  if (a.names.empty()) throw MalformedHeader(where(path, 2) + ": no attribute names");
  const std::size_t K = a.names.size();
  if (static_cast<std::size_t>(*count) != lines.size() - 2)
    throw MalformedHeader(where(path, 1) + ": count " + std::to_string(*count) + " but " +
                          std::to_string(lines.size() - 2) + " rows");

  a.images.reserve(lines.size() - 2);
  a.labels.reserve(lines.size() - 2);
  for (std::size_t ln = 2; ln < lines.size(); ++ln) {
    const auto f = text::split_ws(lines[ln]);
    if (f.size() != K + 1)
      throw RowArityMismatch(where(path, ln + 1) + ": expected " + std::to_string(K + 1) +
                             " fields, got " + std::to_string(f.size()));
    std::vector<int> row(K);
    for (std::size_t j = 0; j < K; ++j) {
      if (f[j + 1] == "1") row[j] = 1;
      else if (f[j + 1] == "-1") row[j] = 0;
      else throw MalformedRow(where(path, ln + 1) + ": label '" + f[j + 1] + "' is not -1 or 1");
    }
    a.images.push_back(f[0]);
    a.labels.push_back(std::move(row));
  }
  return a;
}

void write_attr_file(const std::filesystem::path& path, const AttributeAnnotations& a) {
  std::string out = std::to_string(a.images.size()) + "\n";
  for (std::size_t j = 0; j < a.names.size(); ++j) out += (j ? " " : "") + a.names[j];
  out += "\n";
  for (std::size_t n = 0; n < a.images.size(); ++n) {
    out += a.images[n];
    for (int v : a.labels[n]) out += v ? " 1" : " -1";
    out += "\n";
  }
  text::write_file(path, out);
}

std::vector<SplitEntry> parse_split_manifest(const std::filesystem::path& path) {
  require_file(path);
  const auto lines = text::read_lines(path);
  std::vector<SplitEntry> out;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split_ws(lines[ln]);
    if (f.size() != 2 || (f[1] != "0" && f[1] != "1" && f[1] != "2"))
      throw MalformedRow(where(path, ln + 1) + ": expected 'image 0|1|2'");
    out.push_back({f[0], static_cast<Split>(f[1][0] - '0')});
  }
  return out;
}

void write_split_manifest(const std::filesystem::path& path, std::span<const SplitEntry> entries) {
  std::string out;
  for (const auto& e : entries) out += e.image + " " + std::to_string(static_cast<int>(e.split)) + "\n";
  text::write_file(path, out);
}

std::vector<LandmarkRecord> parse_landmark_file(const std::filesystem::path& path) {
  require_file(path);
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw MalformedHeader(path.string() + ": empty landmark file");
  if (text::split(lines[0], ',').size() != static_cast<std::size_t>(kLandmarkFields))
    throw MalformedHeader(where(path, 1) + ": header must have " + std::to_string(kLandmarkFields) + " columns");
  std::vector<LandmarkRecord> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    if (f.size() != static_cast<std::size_t>(kLandmarkFields))
      throw MalformedRow(where(path, ln + 1) + ": expected " + std::to_string(kLandmarkFields) +
                         " fields, got " + std::to_string(f.size()));
    LandmarkRecord r;
    r.image = f[0];
    for (int k = 1; k <= kFiducialCount; ++k) {
      const std::size_t base = 1 + 3 * static_cast<std::size_t>(k - 1);
      r.fiducials.p(k) = {parse_number(f[base], path, ln + 1), parse_number(f[base + 1], path, ln + 1)};
      r.fiducials.v(k) = parse_number(f[base + 2], path, ln + 1);
    }
    const std::size_t b = 1 + 3 * kFiducialCount;
    r.fiducials.face_box = {parse_number(f[b], path, ln + 1), parse_number(f[b + 1], path, ln + 1),
                            parse_number(f[b + 2], path, ln + 1), parse_number(f[b + 3], path, ln + 1)};
    try {
      r.fiducials.validate();
    } catch (const MalformedRow& e) {
      throw MalformedRow(where(path, ln + 1) + ": " + e.detail());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRecord> records) {
  std::string out = "image";
  for (int k = 1; k <= kFiducialCount; ++k) {
    const auto s = std::to_string(k);
    out += ",x" + s + ",y" + s + ",v" + s;
  }
  out += ",xtl,ytl,xbr,ybr\n";
  for (const auto& r : records) {
    out += r.image;
    for (int k = 1; k <= kFiducialCount; ++k)
      out += "," + text::format_exact(r.fiducials.p(k).x) + "," + text::format_exact(r.fiducials.p(k).y) +
             "," + text::format_exact(r.fiducials.v(k));
    const auto& b = r.fiducials.face_box;
    out += "," + text::format_exact(b.x_min) + "," + text::format_exact(b.y_min) + "," +
           text::format_exact(b.x_max) + "," + text::format_exact(b.y_max) + "\n";
  }
  text::write_file(path, out);
}

namespace {

std::vector<BoxRecord> parse_box_rows(const std::filesystem::path& path, bool by_variant) {
  require_file(path);
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw MalformedHeader(path.string() + ": empty bbox file");
  std::vector<BoxRecord> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    if (f.size() != 6) throw MalformedRow(where(path, ln + 1) + ": expected 6 fields");
    BoxRecord r;
    r.image = f[0];
    if (by_variant) {
      const auto v = parse_variant_name(f[1]);
      if (!v) throw MalformedRow(where(path, ln + 1) + ": unknown variant '" + f[1] + "'");
      r.segment = retained_segment(*v);
    } else {
      const auto s = parse_segment_name(f[1]);
      if (!s) throw MalformedRow(where(path, ln + 1) + ": unknown segment '" + f[1] + "'");
      r.segment = *s;
    }
    r.box = {parse_number(f[2], path, ln + 1), parse_number(f[3], path, ln + 1),
             parse_number(f[4], path, ln + 1), parse_number(f[5], path, ln + 1)};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<BoxRecord> parse_bbox_file(const std::filesystem::path& path) { return parse_box_rows(path, false); }

std::vector<BoxRecord> convert_variant_bbox_file(const std::filesystem::path& path) {
  return parse_box_rows(path, true);
}

void write_bbox_file(const std::filesystem::path& path, std::span<const BoxRecord> records) {
  std::string out = "image,segment,x_min,y_min,x_max,y_max\n";
  for (const auto& r : records)
    out += r.image + "," + std::string(segment_name(r.segment)) + "," + text::format_exact(r.box.x_min) +
           "," + text::format_exact(r.box.y_min) + "," + text::format_exact(r.box.x_max) + "," +
           text::format_exact(r.box.y_max) + "\n";
  text::write_file(path, out);
}

std::vector<int> LabeledSet::indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

LabeledSet join_splits(AttributeAnnotations annotations, std::span<const SplitEntry> entries) {
  std::unordered_map<std::string, Split> by_name;
  for (const auto& e : entries) by_name[e.image] = e.split;
  LabeledSet set;
  set.splits.reserve(annotations.images.size());
  for (const auto& name : annotations.images) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw MalformedRow("image '" + name + "' has no split assignment");
    set.splits.push_back(it->second);
  }
  set.annotations = std::move(annotations);
  return set;
}

std::vector<double> compute_priors(const AttributeAnnotations& a, std::span<const int> items) {
  if (items.empty()) throw EmptyInput("no images to compute priors from");
  std::vector<double> p(a.names.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    std::size_t positives = 0;
    for (int n : items) positives += a.labels[n][j] == 1;
    if (positives == 0 || positives == items.size())
      throw DegenerateAttribute("attribute '" + a.names[j] + "' is constant on the training split");
    p[j] = static_cast<double>(positives) / static_cast<double>(items.size());
  }
  return p;
}

std::vector<double> compute_priors(const LabeledSet& set, Split split) {
  return compute_priors(set.annotations, set.indices(split));
}

// --- Dataset -----------------------------------------------------------------

Dataset::Dataset(std::filesystem::path root, LabeledSet labels, std::vector<FiducialSet> fiducials)
    : root_(std::move(root)), labels_(std::move(labels)), fiducials_(std::move(fiducials)),
      cache_(labels_.annotations.images.size()) {
  if (fiducials_.size() != labels_.annotations.images.size())
    throw ShapeMismatch("fiducials and annotations differ in count");
}

std::filesystem::path Dataset::image_path(std::size_t i) const { return root_ / kImageDir / name(i); }

const Image& Dataset::image(std::size_t i) const {
  auto& slot = cache_.at(i);
  if (!slot) {
    const auto path = image_path(i);
    if (!std::filesystem::exists(path)) throw MissingImage(path.string());
    slot = read_ppm(path);
  }
  return *slot;
}

FiducialSet Dataset::fiducials(std::size_t i) const {
  FiducialSet f = fiducials_.at(i);
  const Image& img = image(i);
  f.image_width = img.width;
  f.image_height = img.height;
  return f;
}

Dataset load_dataset(const std::filesystem::path& root) {
  auto labels = join_splits(parse_attr_file(root / Dataset::kAttributeFile),
                            parse_split_manifest(root / Dataset::kPartitionFile));
  const auto records = parse_landmark_file(root / Dataset::kLandmarkFile);
  std::unordered_map<std::string, const FiducialSet*> by_name;
  for (const auto& r : records) by_name[r.image] = &r.fiducials;
  std::vector<FiducialSet> fiducials;
  fiducials.reserve(labels.annotations.images.size());
  for (const auto& name : labels.annotations.images) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw MalformedRow("image '" + name + "' has no landmark row");
    fiducials.push_back(*it->second);
  }
  return Dataset(root, std::move(labels), std::move(fiducials));
}

PartialDatasetReport generate_partial_dataset(const Dataset& source, PartialVariant variant,
                                              const std::filesystem::path& out_dir, double tau,
                                              std::vector<std::string>* log) {
  PartialDatasetReport report;
  AttributeAnnotations ann;
  ann.names = source.annotations().names;
  std::vector<SplitEntry> splits;
  std::vector<LandmarkRecord> landmarks;
  std::vector<BoxRecord> boxes;
  const SegmentId kept = retained_segment(variant);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const FiducialSet f = source.fiducials(i);
    if (!segment_visible(f, kept, tau)) {
      report.skipped.push_back(source.name(i));
      if (log)
        log->push_back("skip " + source.name(i) + ": " + std::string(segment_name(kept)) +
                       " not computable");
      continue;
    }
    PartialResult r = make_partial(source.image(i), f, variant, tau);
    write_ppm(out_dir / Dataset::kImageDir / source.name(i), r.image);
    ann.images.push_back(source.name(i));
    ann.labels.push_back(source.annotations().labels[i]);
    splits.push_back({source.name(i), source.labels().splits[i]});
    r.fiducials.image_width = r.fiducials.image_height = 0;
    landmarks.push_back({source.name(i), r.fiducials});
    boxes.push_back({source.name(i), kept, r.retained_box});
    ++report.written;
  }
  write_attr_file(out_dir / Dataset::kAttributeFile, ann);
  write_split_manifest(out_dir / Dataset::kPartitionFile, splits);
  write_landmark_file(out_dir / Dataset::kLandmarkFile, landmarks);
  write_bbox_file(out_dir / "boxes.csv", boxes);
  return report;
}

// --- batches -----------------------------------------------------------------

namespace {

// HWC 0..255 -> sample n of an NCHW tensor scaled to [0, 1].
void store_planar(const FloatImage& img, nn::Tensor<float>& t, int n) {
  const int H = img.height, W = img.width;
  float* dst = t.data() + static_cast<std::size_t>(n) * 3 * H * W;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) dst[(static_cast<std::size_t>(c) * H + y) * W + x] = img.at(x, y, c) / 255.0f;
}

}  // namespace

Batch assemble_batch(const Dataset& data, std::span<const int> items, std::span<const Augment> augment,
                     double tau) {
  if (items.empty()) throw EmptyInput("empty batch");
  if (!augment.empty() && augment.size() != items.size())
    throw ShapeMismatch("augmentation list does not match the batch");
  const int N = static_cast<int>(items.size());
  const int K = data.annotations().num_attributes();
  Batch b;
  b.input.face = nn::Tensor<float>({N, 3, kFullInputSize, kFullInputSize});
  for (auto& s : b.input.segments) s = nn::Tensor<float>({N, 3, kSegmentInputSize, kSegmentInputSize});
  b.input.visible.resize(static_cast<std::size_t>(N));
  b.labels = nn::Tensor<float>({N, K});
  b.items.assign(items.begin(), items.end());
  b.flipped.resize(static_cast<std::size_t>(N));
  b.variants.resize(static_cast<std::size_t>(N));

  for (int n = 0; n < N; ++n) {
    const int item = items[n];
    Image img = data.image(item);
    FiducialSet f = data.fiducials(item);
    const Augment aug = augment.empty() ? Augment{} : augment[n];
    if (aug.variant && segment_visible(f, retained_segment(*aug.variant), tau)) {
      PartialResult p = make_partial(img, f, *aug.variant, tau);
      img = std::move(p.image);
      f = p.fiducials;
      b.variants[n] = aug.variant;
    }
    if (aug.flip) {
      FlipResult r = hflip(img, f);
      img = std::move(r.image);
      f = r.fiducials;
      b.flipped[n] = true;
    }
    const FloatImage pixels = to_float(img);
    store_planar(crop_and_resize(pixels, segment_box(f, SegmentId::FULL, tau), kFullInputSize, kFullInputSize),
                 b.input.face, n);
    PredictorFlags& vis = b.input.visible[n];
    vis.fill(false);
    vis[kFullPredictor] = vis[kGlobalPredictor] = true;
    for (int s = 1; s <= kSegmentCount; ++s) {
      if (!segment_visible(f, segment_at(s), tau)) continue;  // tensor already zero
      vis[s] = true;
      store_planar(crop_and_resize(pixels, segment_box(f, segment_at(s), tau), kSegmentInputSize,
                                   kSegmentInputSize),
                   b.input.segments[s - 1], n);
    }
    const auto& y = data.annotations().labels[item];
    for (int j = 0; j < K; ++j) b.labels.at(n, j) = static_cast<float>(y[j]);
  }
  return b;
}

Augment draw_augment(const BatchConfig& config, std::uint64_t epoch_seed, std::size_t position) {
  // One sub-stream per epoch position keeps samples independent of batch size.
  Rng rng(Rng::derive(epoch_seed ^ 0x5851F42D4C957F2DULL, position));
  Augment a;
  if (rng.bernoulli(config.partial_mix)) a.variant = kPartialVariants[rng.below(kPartialVariants.size())];
  a.flip = rng.bernoulli(config.flip_probability);
  return a;
}

std::vector<Augment> augment_plan(const BatchConfig& config, int epoch, std::size_t count) {
  const auto epoch_seed = Rng::derive(config.seed, static_cast<std::uint64_t>(epoch));
  std::vector<Augment> plan(count);
  for (std::size_t k = 0; k < count; ++k) plan[k] = draw_augment(config, epoch_seed, k);
  return plan;
}

BatchStream::BatchStream(const Dataset& data, std::vector<int> items, const BatchConfig& config, int epoch)
    : data_(data), order_(std::move(items)), config_(config),
      epoch_seed_(Rng::derive(config.seed, static_cast<std::uint64_t>(epoch))) {
  if (config_.batch_size < 1) throw ConfigError("batch size must be positive");
  if (config_.shuffle) {
    Rng rng(epoch_seed_);
    rng.shuffle(std::span<int>(order_));
  }
}

std::size_t BatchStream::batch_count() const {
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  return (order_.size() + bs - 1) / bs;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(config_.batch_size));
  const std::span<const int> items(order_.data() + cursor_, end - cursor_);
  std::vector<Augment> augment(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) augment[k] = draw_augment(config_, epoch_seed_, cursor_ + k);
  cursor_ = end;
  return assemble_batch(data_, items, augment, config_.tau);
}

}  // namespace splitface
