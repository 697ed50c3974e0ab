#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splitface/data.hpp"
#include "splitface/fusion.hpp"

namespace splitface {

struct AccuracyResult {
  std::vector<double> per_attribute;
  double mean = 0.0;
};

/// Fraction of agreements per attribute ([image][attribute] layout) and their
/// mean. Throws EmptyInput on no images, ShapeMismatch on ragged input.
AccuracyResult accuracy(const std::vector<std::vector<int>>& decisions,
                        const std::vector<std::vector<int>>& labels);

/// Always predicts the majority class of the training split (positive on an
/// exact tie) and scores it on the test split.
AccuracyResult prior_baseline(const LabeledSet& set);

enum class ThresholdMode { optimal, fixed };

std::string_view to_string(ThresholdMode m);
std::optional<ThresholdMode> parse_threshold_mode(std::string_view s);

/// Every threshold of `mask` set to 0.5.
ThresholdTable fixed_thresholds(const AttributeMask& mask, int num_attributes);

/// Decisions of one predictor: 1 iff score >= t, -1 where the attribute is
/// outside its mask.
std::vector<std::vector<int>> predictor_decisions(const ScoreMatrix& scores, const ThresholdTable& t,
                                                  int predictor);

struct MethodRow {
  std::string method;
  std::vector<std::optional<double>> per_attribute;  // nullopt where not predicted
  double mean = 0.0;                                 // over the predicted attributes
};

struct EvaluationReport {
  std::string dataset;
  ThresholdMode mode = ThresholdMode::optimal;
  std::vector<std::string> attributes;
  std::vector<MethodRow> methods;

  const MethodRow* find(std::string_view method) const;
};

inline constexpr std::array<const char*, 3> kFusionMethodNames = {"HRP", "NSA-product", "NSA-median"};

/// Rows: FULL, the 14 segments, GP, HRP, NSA-product, NSA-median, then Prior
/// when given.
EvaluationReport build_report(const std::string& dataset, ThresholdMode mode,
                              const std::vector<std::string>& attributes, const ScoreMatrix& scores,
                              const std::vector<std::vector<int>>& labels, const ThresholdTable& thresholds,
                              const PredictorRanking& ranking, const std::optional<AccuracyResult>& prior,
                              int p = kDefaultFusionDepth);

enum class ReportFormat { csv, markdown };

/// CSV: dataset, threshold_mode, method, one column per attribute, mean;
/// fractions at 6 decimals. Markdown: one row per attribute plus Mean, one
/// column per method, percentages at 2 decimals.
void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path);
EvaluationReport read_report_csv(const std::filesystem::path& path);

/// Rank of each predictor per attribute where it is assigned, blank where
/// pruned, plus the number of attributes each predictor keeps.
struct RankingGrid {
  std::vector<std::string> attributes;
  std::array<std::vector<std::optional<int>>, kPredictorCount> ranks;
  std::array<int, kPredictorCount> assigned{};
};

RankingGrid build_ranking_table(const PredictorRanking& ranking, const AttributeMask& mask,
                                const std::vector<std::string>& attributes);
/// CSV: predictor, one column per attribute, assigned. Markdown carries the
/// same grid as a table.
void write_ranking_grid(const std::filesystem::path& path, const RankingGrid& grid,
                        ReportFormat format = ReportFormat::csv);
RankingGrid read_ranking_grid(const std::filesystem::path& path);

}  // namespace splitface
