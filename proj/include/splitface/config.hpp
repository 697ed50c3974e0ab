#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "splitface/evaluation.hpp"
#include "splitface/training.hpp"

namespace splitface {

/// Run settings read from a key = value file. Grammar: one setting per line,
/// "[section]" headers, '#' starts a comment, blank lines ignored. Keys are
/// addressed as section.key; unknown keys raise ConfigError.
///
///   [data]     dataset
///   [model]    width_scale, seed
///   [train]    epochs_stage1, epochs_stage2, batch_size, eval_batch_size,
///              learning_rate, d, segment_dropout, flip_probability, partial_mix
///   [geometry] tau
///   [fusion]   p, threshold_mode (optimal|fixed), aggregator (hrp|product|median)
struct RunConfig {
  std::filesystem::path dataset;
  TrainConfig train;
  int p = kDefaultFusionDepth;
  ThresholdMode threshold_mode = ThresholdMode::optimal;
  std::string aggregator = "product";

  /// Applies one setting; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Every setting in file syntax, in a fixed order.
  std::string resolved() const;
  void validate() const;
};

RunConfig parse_run_config_text(std::string_view text, const std::string& source = "<config>");
RunConfig parse_run_config(const std::filesystem::path& path);

}  // namespace splitface
