#include "splitface/evaluation.hpp"

#include <algorithm>

#include "splitface/text.hpp"

namespace splitface {

AccuracyResult accuracy(const std::vector<std::vector<int>>& decisions,
                        const std::vector<std::vector<int>>& labels) {
  if (decisions.empty()) throw EmptyInput("accuracy of an empty decision set");
  if (decisions.size() != labels.size()) throw ShapeMismatch("decisions and labels differ in length");
  const std::size_t K = labels.front().size();
  AccuracyResult r;
  r.per_attribute.assign(K, 0.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (decisions[n].size() != K || labels[n].size() != K) throw ShapeMismatch("ragged decision rows");
    for (std::size_t a = 0; a < K; ++a) r.per_attribute[a] += decisions[n][a] == labels[n][a] ? 1.0 : 0.0;
  }
  for (auto& v : r.per_attribute) v /= static_cast<double>(labels.size());
  double sum = 0.0;
  for (double v : r.per_attribute) sum += v;
  r.mean = K ? sum / static_cast<double>(K) : 0.0;
  return r;
}

AccuracyResult prior_baseline(const LabeledSet& set) {
  const auto train = set.indices(Split::train);
  const auto test = set.indices(Split::test);
  if (train.empty() || test.empty()) throw EmptyInput("prior baseline needs train and test images");
  const auto& ann = set.annotations;
  const std::size_t K = ann.names.size();
  std::vector<int> majority(K);
  for (std::size_t a = 0; a < K; ++a) {
    std::size_t pos = 0;
    for (int n : train) pos += ann.labels[n][a] == 1;
    majority[a] = 2 * pos >= train.size() ? 1 : 0;
  }
  std::vector<std::vector<int>> decisions(test.size(), majority), labels;
  labels.reserve(test.size());
  for (int n : test) labels.push_back(ann.labels[n]);
  return accuracy(decisions, labels);
}

std::string_view to_string(ThresholdMode m) { return m == ThresholdMode::optimal ? "optimal" : "fixed"; }

std::optional<ThresholdMode> parse_threshold_mode(std::string_view s) {
  if (s == "optimal") return ThresholdMode::optimal;
  if (s == "fixed") return ThresholdMode::fixed;
  return std::nullopt;
}

ThresholdTable fixed_thresholds(const AttributeMask& mask, int num_attributes) {
  ThresholdTable t;
  t.num_attributes = num_attributes;
  for (int i = 0; i < kPredictorCount; ++i) {
    t.entries[i].assign(static_cast<std::size_t>(num_attributes), std::nullopt);
    for (int a : mask.attributes[i]) t.entries[i][a] = ThresholdResult{0.5, 0.0};
  }
  return t;
}

std::vector<std::vector<int>> predictor_decisions(const ScoreMatrix& scores, const ThresholdTable& t,
                                                  int predictor) {
  std::vector<std::vector<int>> out(scores.rows.size(),
                                    std::vector<int>(static_cast<std::size_t>(scores.num_attributes), -1));
  for (int a = 0; a < scores.num_attributes; ++a) {
    if (!t.has(predictor, a)) continue;
    const double th = t.at(predictor, a).threshold;
    for (std::size_t n = 0; n < scores.rows.size(); ++n)
      out[n][a] = scores.rows[n].scores[predictor][a] >= th ? 1 : 0;
  }
  return out;
}

const MethodRow* EvaluationReport::find(std::string_view method) const {
  for (const auto& m : methods)
    if (m.method == method) return &m;
  return nullptr;
}

namespace {

MethodRow make_row(std::string name, const std::vector<std::vector<int>>& decisions,
                   const std::vector<std::vector<int>>& labels, int K) {
  MethodRow row;
  row.method = std::move(name);
  row.per_attribute.assign(static_cast<std::size_t>(K), std::nullopt);
  double sum = 0.0;
  int count = 0;
  for (int a = 0; a < K; ++a) {
    if (decisions.empty() || decisions.front()[a] < 0) continue;
    std::size_t agree = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) agree += decisions[n][a] == labels[n][a];
    const double acc = static_cast<double>(agree) / static_cast<double>(labels.size());
    row.per_attribute[a] = acc;
    sum += acc;
    ++count;
  }
  row.mean = count ? sum / count : 0.0;
  return row;
}

}  // namespace

EvaluationReport build_report(const std::string& dataset, ThresholdMode mode,
                              const std::vector<std::string>& attributes, const ScoreMatrix& scores,
                              const std::vector<std::vector<int>>& labels, const ThresholdTable& thresholds,
                              const PredictorRanking& ranking, const std::optional<AccuracyResult>& prior, int p) {
  if (scores.rows.empty()) throw EmptyInput("no scored images to report on");
  if (labels.size() != scores.rows.size()) throw ShapeMismatch("labels and scores differ in count");
  const int K = static_cast<int>(attributes.size());
  EvaluationReport report;
  report.dataset = dataset;
  report.mode = mode;
  report.attributes = attributes;
  for (int i = 0; i < kPredictorCount; ++i)
    report.methods.push_back(make_row(predictor_name(i), predictor_decisions(scores, thresholds, i), labels, K));
  const FusionMethod methods[] = {FusionMethod::hrp, FusionMethod::nsa_product, FusionMethod::nsa_median};
  for (std::size_t m = 0; m < 3; ++m)
    report.methods.push_back(
        make_row(kFusionMethodNames[m], fuse(scores, ranking, thresholds, methods[m], p), labels, K));
  if (prior) {
    MethodRow row;
    row.method = "Prior";
    row.per_attribute.assign(prior->per_attribute.begin(), prior->per_attribute.end());
    row.mean = prior->mean;
    report.methods.push_back(std::move(row));
  }
  return report;
}

// A pruned-away predictor keeps no attribute; its mean is left blank.
static bool predicts_any(const MethodRow& m) {
  return std::any_of(m.per_attribute.begin(), m.per_attribute.end(), [](const auto& v) { return v.has_value(); });
}

void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::string out;
  if (format == ReportFormat::csv) {
    out = "dataset,threshold_mode,method";
    for (const auto& a : report.attributes) out += "," + a;
    out += ",mean\n";
    for (const auto& m : report.methods) {
      out += report.dataset + "," + std::string(to_string(report.mode)) + "," + m.method;
      for (const auto& v : m.per_attribute) out += "," + (v ? text::format_fixed(*v, 6) : std::string());
      out += "," + (predicts_any(m) ? text::format_fixed(m.mean, 6) : std::string()) + "\n";
    }
  } else {
    out = "Dataset: " + report.dataset + ", threshold mode: " + std::string(to_string(report.mode)) + "\n\n";
    out += "| Attribute |";
    for (const auto& m : report.methods) out += " " + m.method + " |";
    out += "\n|---|";
    for (std::size_t k = 0; k < report.methods.size(); ++k) out += "---:|";
    out += "\n";
    for (std::size_t a = 0; a < report.attributes.size(); ++a) {
      out += "| " + report.attributes[a] + " |";
      for (const auto& m : report.methods) {
        const auto& v = m.per_attribute[a];
        out += " " + (v ? text::format_fixed(100.0 * *v, 2) : std::string("-")) + " |";
      }
      out += "\n";
    }
    out += "| Mean |";
    for (const auto& m : report.methods)
      out += " " + (predicts_any(m) ? text::format_fixed(100.0 * m.mean, 2) : std::string("-")) + " |";
    out += "\n";
  }
  text::write_file(path, out);
}

EvaluationReport read_report_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("report " + path.string() + " not found");
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw MalformedHeader(path.string() + ": empty report");
  const auto header = text::split(lines[0], ',');
  if (header.size() < 4 || header[0] != "dataset" || header[1] != "threshold_mode" || header[2] != "method" ||
      header.back() != "mean")
    throw MalformedHeader(path.string() + ": unexpected report header");
  EvaluationReport r;
  r.attributes.assign(header.begin() + 3, header.end() - 1);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    const std::string at = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != header.size()) throw RowArityMismatch(at + ": expected " + std::to_string(header.size()) + " fields");
    const auto mode = parse_threshold_mode(f[1]);
    if (!mode) throw MalformedRow(at + ": unknown threshold mode '" + f[1] + "'");
    r.dataset = f[0];
    r.mode = *mode;
    MethodRow m;
    m.method = f[2];
    for (std::size_t k = 3; k + 1 < f.size(); ++k) {
      if (f[k].empty()) {
        m.per_attribute.push_back(std::nullopt);
        continue;
      }
      const auto v = text::to_double(f[k]);
      if (!v) throw MalformedRow(at + ": bad accuracy '" + f[k] + "'");
      m.per_attribute.push_back(*v);
    }
    const auto mean = f.back().empty() ? std::optional<double>(0.0) : text::to_double(f.back());
    if (!mean) throw MalformedRow(at + ": bad mean '" + f.back() + "'");
    m.mean = *mean;
    r.methods.push_back(std::move(m));
  }
  return r;
}

RankingGrid build_ranking_table(const PredictorRanking& ranking, const AttributeMask& mask,
                                const std::vector<std::string>& attributes) {
  RankingGrid g;
  g.attributes = attributes;
  const std::size_t K = attributes.size();
  for (int i = 0; i < kPredictorCount; ++i) {
    g.ranks[i].assign(K, std::nullopt);
    g.assigned[i] = static_cast<int>(mask.attributes[i].size());
  }
  for (std::size_t a = 0; a < K && a < ranking.order.size(); ++a) {
    const auto& order = ranking.order[a];
    for (std::size_t r = 0; r < order.size(); ++r)
      if (mask.contains(order[r], static_cast<int>(a))) g.ranks[order[r]][a] = static_cast<int>(r + 1);
  }
  return g;
}

void write_ranking_grid(const std::filesystem::path& path, const RankingGrid& g, ReportFormat format) {
  if (format == ReportFormat::markdown) {
    std::string out = "| Predictor |";
    for (const auto& a : g.attributes) out += " " + a + " |";
    out += " Assigned |\n|---|";
    for (std::size_t a = 0; a <= g.attributes.size(); ++a) out += "---:|";
    out += "\n";
    for (int i = 0; i < kPredictorCount; ++i) {
      out += "| " + predictor_name(i) + " |";
      for (const auto& r : g.ranks[i]) out += " " + (r ? std::to_string(*r) : std::string()) + " |";
      out += " " + std::to_string(g.assigned[i]) + " |\n";
    }
    text::write_file(path, out);
    return;
  }
  std::string out = "predictor";
  for (const auto& a : g.attributes) out += "," + a;
  out += ",assigned\n";
  for (int i = 0; i < kPredictorCount; ++i) {
    out += predictor_name(i);
    for (const auto& r : g.ranks[i]) out += "," + (r ? std::to_string(*r) : std::string());
    out += "," + std::to_string(g.assigned[i]) + "\n";
  }
  text::write_file(path, out);
}

RankingGrid read_ranking_grid(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("ranking grid " + path.string() + " not found");
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw MalformedHeader(path.string() + ": empty ranking grid");
  const auto header = text::split(lines[0], ',');
  if (header.size() < 2 || header.front() != "predictor" || header.back() != "assigned")
    throw MalformedHeader(path.string() + ": unexpected ranking grid header");
  RankingGrid g;
  g.attributes.assign(header.begin() + 1, header.end() - 1);
  for (auto& r : g.ranks) r.assign(g.attributes.size(), std::nullopt);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    const std::string at = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != header.size()) throw RowArityMismatch(at + ": wrong field count");
    const auto i = parse_predictor_name(f[0]);
    const auto assigned = text::to_int(f.back());
    if (!i || !assigned) throw MalformedRow(at + ": bad grid row");
    for (std::size_t a = 0; a < g.attributes.size(); ++a) {
      if (f[a + 1].empty()) continue;
      const auto r = text::to_int(f[a + 1]);
      if (!r) throw MalformedRow(at + ": bad rank '" + f[a + 1] + "'");
      g.ranks[*i][a] = static_cast<int>(*r);
    }
    g.assigned[*i] = static_cast<int>(*assigned);
  }
  return g;
}

}  // namespace splitface
