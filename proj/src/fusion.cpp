#include "splitface/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "splitface/text.hpp"

namespace splitface {

double threshold_accuracy(std::span<const double> scores, std::span<const int> labels, double t) {
  if (scores.empty() || scores.size() != labels.size())
    throw EmptyInput("threshold_accuracy needs equally long, nonempty inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    correct += (scores[i] >= t ? 1 : 0) == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

ThresholdResult search_optimal_threshold(std::span<const double> scores,
                                         std::span<const int> labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw EmptyInput("threshold search needs equally long, nonempty score and label lists");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  // Candidates are visited in increasing order; strict improvement keeps the smallest on ties.
  std::size_t best_correct = 0;
  double best_t = 0.0;
  for (std::size_t k = 0; k < n; ++k) best_correct += (scores[k] >= 0.0) == (labels[k] == 1) ? 1 : 0;

  std::size_t neg_below = 0, pos_below = 0;
  std::size_t i = 0;
  while (i < n) {
    const double v = scores[order[i]];
    while (i < n && scores[order[i]] == v) {
      (labels[order[i]] == 1 ? pos_below : neg_below) += 1;
      ++i;
    }
    if (i == n) break;
    const double next = scores[order[i]];
    double t = v + (next - v) / 2.0;
    if (!(t > v)) t = next;
    const std::size_t correct = neg_below + (positives - pos_below);
    if (correct > best_correct) {
      best_correct = correct;
      best_t = t;
    }
  }
  std::size_t at_one = 0;
  for (std::size_t k = 0; k < n; ++k) at_one += (scores[k] >= 1.0) == (labels[k] == 1) ? 1 : 0;
  if (at_one > best_correct) {
    best_correct = at_one;
    best_t = 1.0;
  }
  return {best_t, static_cast<double>(best_correct) / static_cast<double>(n)};
}

const ThresholdResult& ThresholdTable::at(int predictor, int a) const {
  const auto& row = entries.at(static_cast<std::size_t>(predictor));
  if (a < 0 || a >= static_cast<int>(row.size()) || !row[a])
    throw AttributeNotPredicted("no threshold for predictor " + predictor_name(predictor) +
                                ", attribute " + std::to_string(a));
  return *row[a];
}

bool ThresholdTable::has(int predictor, int a) const {
  const auto& row = entries.at(static_cast<std::size_t>(predictor));
  return a >= 0 && a < static_cast<int>(row.size()) && row[a].has_value();
}

ThresholdTable calibrate_thresholds(const ScoreMatrix& validation,
                                    const std::vector<std::vector<int>>& labels,
                                    const AttributeMask& mask) {
  if (validation.rows.empty()) throw EmptyValidationSet("no validation images to calibrate on");
  if (labels.size() != validation.rows.size())
    throw ShapeMismatch("labels and score rows differ in count");
  ThresholdTable table;
  table.num_attributes = validation.num_attributes;
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < kPredictorCount; ++i) {
    table.entries[i].assign(static_cast<std::size_t>(validation.num_attributes), std::nullopt);
    for (int a : mask.attributes[i]) {
      s.clear();
      y.clear();
      for (std::size_t n = 0; n < validation.rows.size(); ++n) {
        const auto& row = validation.rows[n];
        if (!row.visible[i]) continue;
        s.push_back(row.scores[i][a]);
        y.push_back(labels[n][a]);
      }
      table.entries[i][a] = s.empty() ? ThresholdResult{0.5, 0.0} : search_optimal_threshold(s, y);
    }
  }
  return table;
}

PredictorRanking rank_from_thresholds(const ThresholdTable& table, const AttributeMask& mask) {
  PredictorRanking r;
  r.order.resize(static_cast<std::size_t>(table.num_attributes));
  r.accuracy.assign(static_cast<std::size_t>(table.num_attributes), {});
  for (int a = 0; a < table.num_attributes; ++a) {
    auto& acc = r.accuracy[a];
    acc.fill(-1.0);
    for (int i = 0; i < kPredictorCount; ++i)
      if (mask.contains(i, a)) {
        acc[i] = table.at(i, a).accuracy;
        r.order[a].push_back(i);
      }
    std::stable_sort(r.order[a].begin(), r.order[a].end(),
                     [&](int x, int y) { return acc[x] > acc[y]; });
  }
  return r;
}

std::vector<int> usable_predictors(std::span<const int> ranking, const PredictorFlags& visible) {
  std::vector<int> out;
  for (int i : ranking)
    if (visible[i]) out.push_back(i);
  return out;
}

int hrp_decide(std::span<const int> usable, const ImageScores& scores, const ThresholdTable& t,
               int attribute) {
  if (usable.empty()) throw EmptyInput("no usable predictor");
  const int j = usable.front();
  return scores.scores[j][attribute] >= t.at(j, attribute).threshold ? 1 : 0;
}

double linear_threshold_normalize(double x, double t) {
  t = std::clamp(t, kThresholdClamp, 1.0 - kThresholdClamp);
  return x <= t ? 0.5 * x / t : (0.5 * x + 0.5 - t) / (1.0 - t);
}

std::vector<double> build_z(std::span<const int> usable, const ImageScores& scores,
                            const ThresholdTable& t, int attribute, int p) {
  const std::size_t count = std::min(usable.size(), static_cast<std::size_t>(std::max(p, 1)));
  std::vector<double> z;
  z.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const int i = usable[k];
    z.push_back(linear_threshold_normalize(scores.scores[i][attribute], t.at(i, attribute).threshold));
  }
  return z;
}

std::optional<Aggregator> parse_aggregator(std::string_view name) {
  if (name == "product") return Aggregator::product;
  if (name == "median") return Aggregator::median;
  return std::nullopt;
}

std::string_view to_string(Aggregator a) { return a == Aggregator::product ? "product" : "median"; }

double aggregate(std::span<const double> z, Aggregator a) {
  if (z.empty()) throw EmptyInput("aggregate of an empty score set");
  if (a == Aggregator::product) {
    double prod = 1.0;
    for (double v : z) prod *= v;
    return prod;
  }
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  return sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
}

int nsa_decide(std::span<const double> z, Aggregator a) {
  std::vector<double> complement(z.size());
  std::transform(z.begin(), z.end(), complement.begin(), [](double v) { return 1.0 - v; });
  return aggregate(z, a) >= aggregate(complement, a) ? 1 : 0;
}

std::vector<std::vector<int>> fuse(const ScoreMatrix& scores, const PredictorRanking& ranking,
                                   const ThresholdTable& thresholds, FusionMethod method, int p) {
  std::vector<std::vector<int>> decisions(scores.rows.size(),
                                          std::vector<int>(static_cast<std::size_t>(scores.num_attributes)));
  for (std::size_t n = 0; n < scores.rows.size(); ++n) {
    const auto& row = scores.rows[n];
    for (int a = 0; a < scores.num_attributes; ++a) {
      const auto usable = usable_predictors(ranking.order[a], row.visible);
      if (method == FusionMethod::hrp) {
        decisions[n][a] = hrp_decide(usable, row, thresholds, a);
      } else {
        const auto z = build_z(usable, row, thresholds, a, p);
        decisions[n][a] = nsa_decide(z, method == FusionMethod::nsa_product ? Aggregator::product
                                                                           : Aggregator::median);
      }
    }
  }
  return decisions;
}

// --- files -------------------------------------------------------------------

namespace {

int attribute_index(const std::vector<std::string>& names, const std::string& name,
                    const std::filesystem::path& path, std::size_t line) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end())
    throw MalformedRow(path.string() + ":" + std::to_string(line) + ": unknown attribute '" + name + "'");
  return static_cast<int>(it - names.begin());
}

int predictor_index(const std::string& name, const std::filesystem::path& path, std::size_t line) {
  const auto p = parse_predictor_name(name);
  if (!p) throw MalformedRow(path.string() + ":" + std::to_string(line) + ": unknown predictor '" + name + "'");
  return *p;
}

double field_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  const auto v = text::to_double(s);
  if (!v) throw MalformedRow(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  return *v;
}

}  // namespace

void write_threshold_table(const std::filesystem::path& path, const ThresholdTable& t,
                           const std::vector<std::string>& attribute_names) {
  std::string out = "attribute,predictor,threshold,val_accuracy\n";
  for (int a = 0; a < t.num_attributes; ++a)
    for (int i = 0; i < kPredictorCount; ++i)
      if (t.has(i, a)) {
        const auto& e = t.at(i, a);
        out += attribute_names.at(a) + "," + predictor_name(i) + "," + text::format_exact(e.threshold) +
               "," + text::format_exact(e.accuracy) + "\n";
      }
  text::write_file(path, out);
}

ThresholdTable read_threshold_table(const std::filesystem::path& path,
                                    const std::vector<std::string>& attribute_names) {
  if (!std::filesystem::exists(path)) throw MissingInput("threshold table " + path.string() + " not found");
  const auto lines = text::read_lines(path);
  ThresholdTable t;
  t.num_attributes = static_cast<int>(attribute_names.size());
  for (auto& row : t.entries) row.assign(attribute_names.size(), std::nullopt);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    if (f.size() != 4) throw MalformedRow(path.string() + ":" + std::to_string(ln + 1) + ": expected 4 fields");
    const int a = attribute_index(attribute_names, f[0], path, ln + 1);
    const int i = predictor_index(f[1], path, ln + 1);
    t.entries[i][a] = ThresholdResult{field_double(f[2], path, ln + 1), field_double(f[3], path, ln + 1)};
  }
  return t;
}

void write_score_matrix(const std::filesystem::path& scores_path,
                        const std::filesystem::path& visibility_path, const ScoreMatrix& m,
                        const std::vector<std::string>& attribute_names) {
  std::string scores = "image,predictor,attribute,score\n";
  std::string vis = "image,predictor,visible\n";
  for (std::size_t n = 0; n < m.rows.size(); ++n) {
    const auto& row = m.rows[n];
    for (int i = 0; i < kPredictorCount; ++i) {
      vis += m.images[n] + "," + predictor_name(i) + "," + (row.visible[i] ? "1" : "0") + "\n";
      for (int a = 0; a < m.num_attributes; ++a) {
        const double s = row.scores[i][a];
        if (std::isnan(s)) continue;
        scores += m.images[n] + "," + predictor_name(i) + "," + attribute_names.at(a) + "," +
                  text::format_exact(s) + "\n";
      }
    }
  }
  text::write_file(scores_path, scores);
  text::write_file(visibility_path, vis);
}

ScoreMatrix read_score_matrix(const std::filesystem::path& scores_path,
                              const std::filesystem::path& visibility_path,
                              const std::vector<std::string>& attribute_names) {
  for (const auto& p : {scores_path, visibility_path})
    if (!std::filesystem::exists(p)) throw MissingInput("score file " + p.string() + " not found");
  ScoreMatrix m;
  m.num_attributes = static_cast<int>(attribute_names.size());
  std::unordered_map<std::string, std::size_t> index;
  auto row_for = [&](const std::string& image) -> ImageScores& {
    auto [it, added] = index.try_emplace(image, m.rows.size());
    if (added) {
      m.images.push_back(image);
      ImageScores row;
      for (auto& s : row.scores) s.assign(attribute_names.size(), std::numeric_limits<double>::quiet_NaN());
      m.rows.push_back(std::move(row));
    }
    return m.rows[it->second];
  };
  const auto vis = text::read_lines(visibility_path);
  for (std::size_t ln = 1; ln < vis.size(); ++ln) {
    if (text::trim(vis[ln]).empty()) continue;
    const auto f = text::split(vis[ln], ',');
    if (f.size() != 3 || (f[2] != "0" && f[2] != "1"))
      throw MalformedRow(visibility_path.string() + ":" + std::to_string(ln + 1) + ": expected image,predictor,0|1");
    row_for(f[0]).visible[predictor_index(f[1], visibility_path, ln + 1)] = f[2] == "1";
  }
  const auto lines = text::read_lines(scores_path);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    if (f.size() != 4) throw MalformedRow(scores_path.string() + ":" + std::to_string(ln + 1) + ": expected 4 fields");
    const int i = predictor_index(f[1], scores_path, ln + 1);
    const int a = attribute_index(attribute_names, f[2], scores_path, ln + 1);
    row_for(f[0]).scores[i][a] = field_double(f[3], scores_path, ln + 1);
  }
  return m;
}

}  // namespace splitface
