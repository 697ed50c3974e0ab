#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "splitface/data.hpp"
#include "splitface/fusion.hpp"
#include "splitface/model.hpp"
#include "splitface/nn/adam.hpp"

namespace splitface {

struct TrainConfig {
  int epochs_stage1 = 10;
  int epochs_stage2 = 10;
  int batch_size = 32;
  int eval_batch_size = 64;
  double learning_rate = 1e-3;
  int d = 7;
  double segment_dropout = kSegmentDropout;
  double width_scale = 1.0;
  std::uint64_t seed = 1;
  double flip_probability = 0.5;
  double partial_mix = 0.3;
  double tau = kDefaultTau;

  /// Throws ConfigError unless d is in [3, 16], batch >= 2 and the
  /// probabilities lie in [0, 1].
  void validate() const;
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // GP at threshold 0.5
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<double> batch_losses;
  std::vector<EpochRecord> epochs;
};

struct TrainHooks {
  std::function<void(const std::string&)> log;
  /// Called after every completed epoch with the 1-based epoch number.
  std::function<void(int stage, int epoch)> epoch_end;
};

/// One log line per epoch and split: "stage=1 epoch=3 split=train loss=... mean_acc=...".
std::vector<std::string> format_epoch(const EpochRecord& r);

/// Trains every predictor for `cfg.epochs_stage1` epochs with ADAM, segment
/// dropout, flips and partial-variant mixing. Requires full masks. On a
/// non-finite loss the model and optimizer are restored to the last completed
/// epoch and NumericalDivergence is thrown.
TrainHistory train_stage1(SplitFaceModel& model, nn::AdamState<float>& adam, const Dataset& data,
                          const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Prunes the heads to `pruned` (surviving rows and their ADAM moments are
/// kept) and continues training for `cfg.epochs_stage2` epochs.
TrainHistory train_stage2(SplitFaceModel& model, nn::AdamState<float>& adam, const AttributeMask& pruned,
                          const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Shared epoch loop; `stage` only selects the random streams and log tags.
TrainHistory train_epochs(SplitFaceModel& model, nn::AdamState<float>& adam, const Dataset& data,
                          const TrainConfig& cfg, int stage, int epochs, int first_epoch = 1,
                          const TrainHooks& hooks = {});

/// Unaugmented scores for `items`; entries outside a predictor's mask are NaN.
ScoreMatrix score_dataset(const SplitFaceModel& model, const Dataset& data, std::span<const int> items,
                          int batch_size = 64, double tau = kDefaultTau);

/// labels[n][a] for `items`.
std::vector<std::vector<int>> labels_of(const Dataset& data, std::span<const int> items);

/// Calibrates optimal thresholds on the validation scores and orders the
/// predictors of each attribute by the accuracy they reach. Throws
/// EmptyValidationSet when there are no validation images.
PredictorRanking rank_predictors(const ScoreMatrix& validation, const std::vector<std::vector<int>>& labels,
                                 const AttributeMask& mask);

/// GP and FULL for every attribute plus its d - 2 best-ranked segments.
AttributeMask prune_masks(const PredictorRanking& ranking, int d);

/// CSV rows (attribute, rank, predictor, val_accuracy), rank 1-based.
void write_ranking_file(const std::filesystem::path& path, const PredictorRanking& ranking,
                        const std::vector<std::string>& attribute_names);
PredictorRanking read_ranking_file(const std::filesystem::path& path,
                                   const std::vector<std::string>& attribute_names);

}  // namespace splitface
