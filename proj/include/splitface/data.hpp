#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitface/geometry.hpp"
#include "splitface/image.hpp"
#include "splitface/model.hpp"

namespace splitface {

enum class Split { train = 0, val = 1, test = 2 };

std::string_view split_name(Split s);

/// Labels in {0, 1}; `labels[n]` has one entry per attribute name.
struct AttributeAnnotations {
  std::vector<std::string> names;
  std::vector<std::string> images;
  std::vector<std::vector<int>> labels;

  int num_attributes() const { return static_cast<int>(names.size()); }
  /// Attribute index by name, or -1.
  int index_of(std::string_view name) const;
  friend bool operator==(const AttributeAnnotations&, const AttributeAnnotations&) = default;
};

/// list_attr layout: a count line, a line of names, then "image ±1 ... ±1".
AttributeAnnotations parse_attr_file(const std::filesystem::path& path);
void write_attr_file(const std::filesystem::path& path, const AttributeAnnotations& a);

struct SplitEntry {
  std::string image;
  Split split = Split::train;
  friend bool operator==(const SplitEntry&, const SplitEntry&) = default;
};

/// "image 0|1|2" rows.
std::vector<SplitEntry> parse_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, std::span<const SplitEntry> entries);

struct LandmarkRecord {
  std::string image;
  FiducialSet fiducials;  // image size left at 0 until the raster is known
  friend bool operator==(const LandmarkRecord&, const LandmarkRecord&) = default;
};

inline constexpr int kLandmarkFields = 1 + 3 * kFiducialCount + 4;

/// Header line, then "image, x1, y1, v1, ..., x21, y21, v21, xtl, ytl, xbr, ybr".
std::vector<LandmarkRecord> parse_landmark_file(const std::filesystem::path& path);
void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRecord> records);

struct BoxRecord {
  std::string image;
  SegmentId segment = SegmentId::FULL;
  BoundingBox box;
  friend bool operator==(const BoxRecord&, const BoxRecord&) = default;
};

/// Header line, then "image, segment_name, x_min, y_min, x_max, y_max".
std::vector<BoxRecord> parse_bbox_file(const std::filesystem::path& path);
void write_bbox_file(const std::filesystem::path& path, std::span<const BoxRecord> records);
/// Reads externally produced "image, variant, x_min, y_min, x_max, y_max"
/// rows (variant as P-L12 etc.) into records keyed by the retained segment.
std::vector<BoxRecord> convert_variant_bbox_file(const std::filesystem::path& path);

/// Annotations joined with their split assignment.
struct LabeledSet {
  AttributeAnnotations annotations;
  std::vector<Split> splits;  // aligned with annotations.images

  std::vector<int> indices(Split s) const;
};

/// Every annotated image must appear in the manifest (MalformedRow otherwise).
LabeledSet join_splits(AttributeAnnotations annotations, std::span<const SplitEntry> entries);

/// Positive fraction per attribute over `items`. Throws EmptyInput when
/// `items` is empty and DegenerateAttribute when a fraction is 0 or 1.
std::vector<double> compute_priors(const AttributeAnnotations& a, std::span<const int> items);
std::vector<double> compute_priors(const LabeledSet& set, Split split = Split::train);

/// A dataset directory: attributes.txt, partition.txt, landmarks.csv and
/// images/<name>. Rasters are decoded lazily and cached.
class Dataset {
 public:
  static constexpr const char* kAttributeFile = "attributes.txt";
  static constexpr const char* kPartitionFile = "partition.txt";
  static constexpr const char* kLandmarkFile = "landmarks.csv";
  static constexpr const char* kImageDir = "images";

  Dataset() = default;
  Dataset(std::filesystem::path root, LabeledSet labels, std::vector<FiducialSet> fiducials);

  const std::filesystem::path& root() const { return root_; }
  const LabeledSet& labels() const { return labels_; }
  const AttributeAnnotations& annotations() const { return labels_.annotations; }
  std::size_t size() const { return labels_.annotations.images.size(); }
  const std::string& name(std::size_t i) const { return labels_.annotations.images[i]; }
  std::vector<int> indices(Split s) const { return labels_.indices(s); }

  std::filesystem::path image_path(std::size_t i) const;
  /// Throws MissingImage.
  const Image& image(std::size_t i) const;
  /// Fiducials with the raster size filled in (decodes the image if needed).
  FiducialSet fiducials(std::size_t i) const;

 private:
  std::filesystem::path root_;
  LabeledSet labels_;
  std::vector<FiducialSet> fiducials_;
  mutable std::vector<std::optional<Image>> cache_;
};

/// Reads a dataset directory. Images without landmarks raise MalformedRow.
Dataset load_dataset(const std::filesystem::path& root);

struct PartialDatasetReport {
  std::size_t written = 0;
  std::vector<std::string> skipped;
};

/// Writes a copy of `source` to `out_dir` where every image keeps only the
/// variant's retained segment (rest painted white). Also writes the bbox
/// manifest (boxes.csv) and updated landmarks. Images whose retained segment
/// is not computable are skipped and reported through `log` when given.
PartialDatasetReport generate_partial_dataset(const Dataset& source, PartialVariant variant,
                                              const std::filesystem::path& out_dir,
                                              double tau = kDefaultTau,
                                              std::vector<std::string>* log = nullptr);

struct BatchConfig {
  int batch_size = 32;
  double flip_probability = 0.5;
  double partial_mix = 0.3;
  std::uint64_t seed = 1;
  double tau = kDefaultTau;
  bool shuffle = true;
};

struct Batch {
  ModelInput<float> input;
  nn::Tensor<float> labels;  // (N, K)
  std::vector<int> items;    // dataset indices
  std::vector<bool> flipped;
  std::vector<std::optional<PartialVariant>> variants;  // set when occluded
};

struct Augment {
  bool flip = false;
  std::optional<PartialVariant> variant;
};

/// Builds network inputs for the given samples. Occlusion is applied before
/// the flip; a variant whose retained segment is not computable leaves that
/// sample unoccluded. An empty `augment` means no augmentation.
Batch assemble_batch(const Dataset& data, std::span<const int> items,
                     std::span<const Augment> augment = {}, double tau = kDefaultTau);

/// Augmentation drawn for epoch position `position`.
Augment draw_augment(const BatchConfig& config, std::uint64_t epoch_seed, std::size_t position);
/// The draws BatchStream makes for positions 0..count-1 of `epoch`.
std::vector<Augment> augment_plan(const BatchConfig& config, int epoch, std::size_t count);

/// Seeded, order-deterministic batches over `items` for one epoch.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::vector<int> items, const BatchConfig& config, int epoch);

  std::size_t batch_count() const;
  /// Next batch, or nullopt at the end of the epoch.
  std::optional<Batch> next();
  /// Epoch order after shuffling.
  const std::vector<int>& order() const { return order_; }

 private:
  const Dataset& data_;
  std::vector<int> order_;
  BatchConfig config_;
  std::uint64_t epoch_seed_;
  std::size_t cursor_ = 0;
};

}  // namespace splitface
