#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitface/geometry.hpp"
#include "splitface/model.hpp"

namespace splitface {

inline constexpr int kDefaultFusionDepth = 5;  // p
inline constexpr double kThresholdClamp = 1e-6;

struct ThresholdResult {
  double threshold = 0.0;
  double accuracy = 0.0;
};

/// Predicts positive iff score >= t. Candidates are 0, midpoints between
/// adjacent distinct sorted scores, and 1; the most accurate wins, the
/// smallest on ties. Throws EmptyInput on empty or mismatched input.
ThresholdResult search_optimal_threshold(std::span<const double> scores, std::span<const int> labels);

/// Accuracy of thresholding at t (positive iff score >= t).
double threshold_accuracy(std::span<const double> scores, std::span<const int> labels, double t);

/// Scores of one image: per predictor, one value per attribute (NaN outside
/// the predictor's mask), plus the predictor visibility vector.
struct ImageScores {
  std::array<std::vector<double>, kPredictorCount> scores;
  PredictorFlags visible{};
};

/// Scores for a whole split, aligned with its image list.
struct ScoreMatrix {
  int num_attributes = 0;
  std::vector<std::string> images;
  std::vector<ImageScores> rows;
};

/// t_{a,i} and the validation accuracy it reached, for every (a, i) with a in N_i.
struct ThresholdTable {
  int num_attributes = 0;
  /// [predictor][attribute]; nullopt where the predictor does not emit a.
  std::array<std::vector<std::optional<ThresholdResult>>, kPredictorCount> entries;

  const ThresholdResult& at(int predictor, int a) const;
  bool has(int predictor, int a) const;
};

/// Fits every threshold on `validation` restricted to `mask`. Only images
/// where the predictor is visible take part; an (a, i) with no such image
/// gets threshold 0.5 and accuracy 0. `labels[n][a]` is 0 or 1.
ThresholdTable calibrate_thresholds(const ScoreMatrix& validation,
                                    const std::vector<std::vector<int>>& labels,
                                    const AttributeMask& mask);

/// Per attribute a, predictor indices sorted by descending validation
/// accuracy; lower index first on ties.
struct PredictorRanking {
  std::vector<std::vector<int>> order;               // [a] -> i_a
  std::vector<std::array<double, kPredictorCount>> accuracy;  // [a][i]; -1 where unassigned
};

/// Ranks the predictors of each attribute by their calibrated accuracy.
PredictorRanking rank_from_thresholds(const ThresholdTable& table, const AttributeMask& mask);

/// i_a^v: members of i_a whose visibility flag is set, in rank order.
std::vector<int> usable_predictors(std::span<const int> ranking, const PredictorFlags& visible);

/// Decision of the topmost usable predictor: 1 iff S_j >= t_{a,j}.
int hrp_decide(std::span<const int> usable, const ImageScores& scores, const ThresholdTable& t,
               int attribute);

/// Piecewise-linear map sending 0, t, 1 to 0, 0.5, 1. t is clamped to
/// [1e-6, 1 - 1e-6].
double linear_threshold_normalize(double x, double t);

/// Normalised scores of the top min(|usable|, p) usable predictors.
std::vector<double> build_z(std::span<const int> usable, const ImageScores& scores,
                            const ThresholdTable& t, int attribute, int p = kDefaultFusionDepth);

enum class Aggregator { product, median };

std::optional<Aggregator> parse_aggregator(std::string_view name);
std::string_view to_string(Aggregator a);

double aggregate(std::span<const double> z, Aggregator a);

/// 1 iff A(Z) >= A({1 - z}). Throws EmptyInput on empty Z.
int nsa_decide(std::span<const double> z, Aggregator a);

enum class FusionMethod { hrp, nsa_product, nsa_median };

/// Decisions [image][attribute] of a committee machine.
std::vector<std::vector<int>> fuse(const ScoreMatrix& scores, const PredictorRanking& ranking,
                                   const ThresholdTable& thresholds, FusionMethod method,
                                   int p = kDefaultFusionDepth);

// Table files.
void write_threshold_table(const std::filesystem::path& path, const ThresholdTable& t,
                           const std::vector<std::string>& attribute_names);
ThresholdTable read_threshold_table(const std::filesystem::path& path,
                                    const std::vector<std::string>& attribute_names);
void write_score_matrix(const std::filesystem::path& scores_path,
                        const std::filesystem::path& visibility_path, const ScoreMatrix& m,
                        const std::vector<std::string>& attribute_names);
ScoreMatrix read_score_matrix(const std::filesystem::path& scores_path,
                              const std::filesystem::path& visibility_path,
                              const std::vector<std::string>& attribute_names);

}  // namespace splitface
